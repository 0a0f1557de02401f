#include <catch2/catch_amalgamated.hpp>

#include "milnelab/milne.hpp"
#include "milnelab/milne_upwind.hpp"

using namespace milnelab;

namespace {

// manufactured solutions: pick a smooth f with the reflection symmetry built
// in (even in phi), derive the source S so both solvers must converge to it
struct ManufacturedA {
    MilneConfig cfg;
    double f(double e, double p) const { return 0.7 + std::exp(-e) * std::cos(p); }
    double S(double e, double p) const {
        const double de = -std::exp(-e) * std::cos(p);
        const double dp = -std::exp(-e) * std::sin(p);
        return std::sin(p) * de + milne_force(cfg, e) * std::cos(p) * dp +
               std::exp(-e) * std::cos(p);
    }
};

struct ManufacturedB {
    MilneConfig cfg;
    double gphi(double p) const { return 0.5 + sqr(std::sin(p)) + 0.3 * std::cos(p); }
    double dgphi(double p) const { return 2.0 * std::sin(p) * std::cos(p) - 0.3 * std::sin(p); }
    double f(double e, double p) const { return std::exp(-0.5 * e) * gphi(p); }
    double S(double e, double p) const {
        const double de = -0.5 * f(e, p);
        const double dp = std::exp(-0.5 * e) * dgphi(p);
        return std::sin(p) * de + milne_force(cfg, e) * std::cos(p) * dp + f(e, p) -
               std::exp(-0.5 * e);
    }
};

template <class M>
std::vector<double> sup_differences(double eps, int base_eta, int base_phi, int levels) {
    std::vector<double> ds;
    for (int lvl = 0; lvl < levels; ++lvl) {
        MilneConfig c;
        c.eps = eps;
        c.r_kappa = 1.0;
        c.n_eta = base_eta << lvl;
        c.n_phi = base_phi << lvl;
        M mf{c};
        auto h = [&](double p) { return mf.f(0.0, p); };
        auto S = [&](double e, double p) { return mf.S(e, p); };
        auto a = solve_inflow(c, h, S);
        auto b = upwind_solve(c, h, S);
        REQUIRE(a.converged);
        REQUIRE(b.converged);
        double d = 0.0;
        for (std::size_t k = 0; k < a.f.size(); ++k)
            d = std::max(d, std::abs(a.f[k] - b.f[k]));
        ds.push_back(d);
    }
    return ds;
}

// asymptotic observed order: Aitken extrapolation of the per-pair orders
double observed_order(const std::vector<double>& ds) {
    std::vector<double> p;
    for (std::size_t k = 1; k < ds.size(); ++k) p.push_back(std::log2(ds[k - 1] / ds[k]));
    if (p.size() < 3) return p.back();
    const double d1 = p[p.size() - 2] - p[p.size() - 3];
    const double d2 = p[p.size() - 1] - p[p.size() - 2];
    if (std::abs(d2 - d1) < 1e-12) return p.back();
    return p.back() - d2 * d2 / (d2 - d1);
}

} // namespace

TEST_CASE("upwind oracle: trivial data") {
    MilneConfig c;
    c.eps = 0.1;
    c.r_kappa = 1.0;
    c.n_eta = 24;
    c.n_phi = 32;
    auto fc = upwind_solve(c, [](double) { return 1.25; });
    for (double v : fc.f) REQUIRE(std::abs(v - 1.25) < 1e-9);
    CHECK(fc.f_limit == Catch::Approx(1.25).margin(1e-9));
    auto f0 = upwind_solve(c, [](double) { return 0.0; });
    for (double v : f0.f) REQUIRE(std::abs(v) < 1e-13);
}

TEST_CASE("mild solver converges to the manufactured solution") {
    MilneConfig c;
    c.eps = 0.2;
    c.r_kappa = 1.0;
    c.n_eta = 48;
    c.n_phi = 96;
    ManufacturedA mf{c};
    auto a = solve_inflow(
        c, [&](double p) { return mf.f(0.0, p); },
        [&](double e, double p) { return mf.S(e, p); });
    REQUIRE(a.converged);
    double err = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            err = std::max(err, std::abs(a.at(i, j) - mf.f(a.eta[i], a.phi[j])));
    CHECK(err < 5e-4);
}

TEST_CASE("oracle equivalence: sup difference decays at first order") {
    for (int variant : {0, 1}) {
        const auto ds = variant == 0 ? sup_differences<ManufacturedA>(0.2, 24, 48, 4)
                                     : sup_differences<ManufacturedB>(0.2, 24, 48, 4);
        for (std::size_t k = 1; k < ds.size(); ++k) REQUIRE(ds[k] < ds[k - 1]);
        const double order = observed_order(ds);
        INFO("variant " << variant << " order " << order);
        CHECK(order >= 0.95);
        // finest pair alone is already close to first order
        CHECK(std::log2(ds[ds.size() - 2] / ds.back()) >= 0.9);
    }
}

TEST_CASE("tangential derivative vanishes on the circle with tau-independent data") {
    MilneConfig c;
    c.eps = 0.1;
    c.r_kappa = 1.0;
    c.n_eta = 32;
    c.n_phi = 48;
    auto geom = [](double) { return TauStation{1.0, 0.0}; };
    auto h = [](double, double p) { return std::sin(p) * std::cos(p); };
    const auto rep = tangential_derivative(c, geom, h, nullptr, 1e-3);
    CHECK(rep.sup_fd <= 10.0 * c.tol);
    CHECK(rep.sup_weq <= 10.0 * c.tol);
}

TEST_CASE("tangential derivative: the two routes agree on a varying station") {
    // station family modelled on an ellipse-like R_kappa(tau)
    auto geom = [](double tau) {
        const double rk = 1.0 + 0.35 * std::cos(2.0 * tau);
        const double rkp = -0.7 * std::sin(2.0 * tau);
        return TauStation{rk, rkp};
    };
    MilneConfig c;
    c.eps = 0.05;
    c.tau = 0.6;
    c.n_eta = 64;
    c.n_phi = 96;
    auto h = [](double tau, double p) {
        return std::sin(p) * std::cos(p) * (1.0 + 0.3 * std::cos(tau));
    };
    const auto rep = tangential_derivative(c, geom, h, nullptr, 2e-3);
    INFO("fd " << rep.sup_fd << " weq " << rep.sup_weq << " gap " << rep.rel_gap);
    CHECK(rep.sup_fd > 0.0);
    CHECK(rep.sup_weq > 0.0);
    CHECK(rep.rel_gap < 0.1);
}

TEST_CASE("classical mode: F vanishes and regions collapse") {
    MilneConfig c;
    c.eps = 0.1;
    c.r_kappa = 1.0;
    c.classical = true;
    CHECK(milne_force(c, 1.0) == 0.0);
    const auto tr = trace(c, 1.0, -2.0);
    CHECK(tr.region == CharacteristicTrace::Region::II);
    // straight characteristics: phi' constant
    for (std::size_t k = 0; k + 1 < tr.sample_phi.size(); ++k)
        CHECK(tr.sample_phi[k] == Catch::Approx(tr.sample_phi[k + 1]).margin(1e-13));
}

TEST_CASE("corrected and classical f_L agree to O(sqrt(eps)) on smooth data") {
    auto h = [](double p) { return std::sin(p) * std::cos(p) + 0.2 * std::sin(p) * std::cos(2 * p); };
    for (double eps : {0.1, 0.05, 0.025}) {
        MilneConfig c;
        c.eps = eps;
        c.r_kappa = 1.0;
        c.n_eta = 64;
        c.n_phi = 96;
        MilneConfig cl = c;
        cl.classical = true;
        auto a = solve_inflow(c, h);
        auto b = solve_inflow(cl, h);
        REQUIRE(a.converged);
        REQUIRE(b.converged);
        CHECK(std::abs(a.f_limit - b.f_limit) < 2.0 * std::sqrt(eps) *
                                                    std::max({std::abs(a.f_limit), 0.05}));
    }
}
