#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "milnelab/milne.hpp"

using namespace milnelab;

TEST_CASE("potential closed form") {
    MilneConfig c;
    c.eps = 0.01;
    c.r_kappa = 1.0;
    CHECK(potential(c, 0.0) == 0.0);
    CHECK(potential(c, 10.0) == Catch::Approx(std::log(10.0 / 9.0)).margin(1e-12));

    MilneConfig c2;
    c2.eps = 0.04;
    c2.r_kappa = 2.0;
    CHECK(c2.L() == Catch::Approx(5.0).margin(1e-14));
    CHECK(exp_neg_potential(c2, c2.L()) ==
          Catch::Approx(1.0 - std::sqrt(c2.eps) / c2.r_kappa).margin(1e-12)); // 0.9
    CHECK_THROWS_AS(potential(c2, 50.0), std::domain_error);

    MilneConfig cl = c;
    cl.classical = true;
    CHECK(potential(cl, 7.3) == 0.0);
}

TEST_CASE("kinetic distance") {
    MilneConfig c;
    c.eps = 0.01;
    c.r_kappa = 1.0;
    for (double p : {-2.0, -0.3, 0.7, 3.0})
        CHECK(kinetic_distance(c, 0.0, p) == Catch::Approx(std::abs(std::sin(p))).margin(1e-13));
    CHECK(kinetic_distance(c, 0.0, 0.0) == 0.0);
    CHECK(kinetic_distance(c, 10.0, 0.0) ==
          Catch::Approx(std::sqrt(1.0 - 0.81)).margin(1e-12)); // 0.43589
}

TEST_CASE("trace classification and turning point") {
    MilneConfig c;
    c.eps = 0.1;
    c.r_kappa = 1.0;
    CHECK(trace(c, 1.0, 0.5).region == CharacteristicTrace::Region::I);

    auto tr0 = trace(c, 0.0, 0.0); // grazing at the wall, E = 1
    CHECK(tr0.E == Catch::Approx(1.0).margin(1e-14));
    CHECK(tr0.degenerate);
    REQUIRE(tr0.eta_plus.has_value());
    CHECK(*tr0.eta_plus == Catch::Approx(0.0).margin(1e-12));

    // closed form eta_plus = R(1-|E|)/eps, checked through e^{-V(eta_plus)} = |E|
    const double eta_q = 0.3;
    const double phi_q = -std::acos(0.95 / exp_neg_potential(c, eta_q));
    auto tr = trace(c, eta_q, phi_q);
    REQUIRE(tr.region == CharacteristicTrace::Region::III);
    REQUIRE(tr.eta_plus.has_value());
    CHECK(*tr.eta_plus == Catch::Approx(0.5).margin(1e-10));
    CHECK(exp_neg_potential(c, *tr.eta_plus) == Catch::Approx(0.95).margin(1e-12));
}

TEST_CASE("energy and zeta are conserved along traces; G bounds") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ue(0.0, 1.0), up(-pi, pi);
    MilneConfig c;
    c.eps = 0.05;
    c.r_kappa = 2.0;
    for (int q = 0; q < 50; ++q) {
        const double eta = ue(rng) * c.L();
        const double phi = up(rng);
        const auto tr = trace(c, eta, phi);
        for (std::size_t k = 0; k < tr.sample_eta.size(); ++k) {
            const double E2 = exp_neg_potential(c, tr.sample_eta[k]) * std::cos(tr.sample_phi[k]);
            REQUIRE(std::abs(std::abs(E2) - std::abs(tr.E)) < 1e-10);
            const double z = kinetic_distance(c, tr.sample_eta[k], tr.sample_phi[k]);
            REQUIRE(std::abs(z - tr.zeta) < 1e-10);
        }
        // G(t,s) >= t-s >= 0
        for (std::size_t k = 0; k + 1 < tr.sample_G.size(); ++k)
            REQUIRE(tr.sample_G[k] >= tr.sample_G[k + 1] - 1e-12);
        const double top = tr.sample_eta.back();
        for (double s : {0.0, 0.3 * top, 0.8 * top})
            REQUIRE(tr.attenuation_exponent(top, s) >= (top - s) - 1e-10);
    }
}

TEST_CASE("closed-form G matches the adaptive quadrature oracle") {
    MilneConfig c;
    c.eps = 0.1;
    c.r_kappa = 1.5;
    const auto tr = trace(c, 1.3, -2.7);
    for (auto [s, t] : {std::pair{0.2, 1.1}, {0.0, 0.5}, {0.7, 2.0}}) {
        const double oracle =
            integrate([&](double y) { return 1.0 / tr.sin_phi_at(y); }, s, t, 1e-13);
        CHECK(tr.attenuation_exponent(t, s) == Catch::Approx(oracle).margin(1e-9));
    }
}

TEST_CASE("mild operator mass: attenuation factors stay a partition of unity") {
    for (bool classical : {false, true}) {
        MilneConfig c;
        c.eps = 0.1;
        c.r_kappa = 1.0;
        c.n_eta = 32;
        c.n_phi = 48;
        c.classical = classical;
        MilneOperator op(c);
        const std::size_t nn = op.eta().size() * op.phi().size();
        for (std::size_t node = 0; node < nn; ++node) {
            const double m = op.mass(node);
            REQUIRE(m > 0.0);
            REQUIRE(m < 1.0 + 1e-12);
            REQUIRE(std::abs(m - 1.0) < 1e-11);
        }
    }
}

TEST_CASE("mild_apply: constants are exact fixed points") {
    MilneConfig c;
    c.eps = 0.1;
    c.r_kappa = 1.0;
    c.n_eta = 32;
    c.n_phi = 48;
    const double cval = 2.5;
    auto f = mild_apply(
        c, [=](double) { return cval; }, nullptr,
        std::vector<double>(33, cval));
    for (double v : f.f) REQUIRE(std::abs(v - cval) < 1e-12);

    auto f0 = mild_apply(c, [](double) { return 0.0; }, nullptr, std::vector<double>(33, 0.0));
    for (double v : f0.f) REQUIRE(v == 0.0);
}

TEST_CASE("mild_apply reproduces the inflow data at the wall") {
    MilneConfig c;
    c.eps = 0.01;
    c.r_kappa = 1.0;
    c.n_eta = 16;
    c.n_phi = 64;
    auto h = [](double p) { return std::sin(p); };
    auto f = mild_apply(c, h, nullptr, std::vector<double>(17, 0.0));
    for (std::size_t j = 0; j < f.cols(); ++j)
        if (std::sin(f.phi[j]) > 0.0)
            REQUIRE(f.at(0, j) == Catch::Approx(h(f.phi[j])).margin(1e-14));
}

TEST_CASE("compatibility defect quadrature") {
    MilneConfig c;
    c.eps = 0.1;
    c.r_kappa = 1.0;
    CHECK(compatibility_defect(c, [](double) { return 0.0; }) == Catch::Approx(0.0).margin(1e-14));
    CHECK(compatibility_defect(c, [](double p) { return std::sin(p); }) ==
          Catch::Approx(pi / 2.0).margin(1e-10));
    CHECK(compatibility_defect(c, [](double p) { return std::sin(p) * std::cos(p); }) ==
          Catch::Approx(0.0).margin(1e-10));
    // source contribution: S odd in the sigma-symmetry has zero integral
    auto S = [](double e, double p) { return std::exp(-e) * std::sin(2.0 * p); };
    CHECK(compatibility_defect(c, [](double) { return 0.0; }, S) ==
          Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("solve_inflow: constant invariance in one sweep") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> ueps(0.02, 0.5), urk(0.8, 3.0), uc(-2.0, 2.0);
    for (int q = 0; q < 5; ++q) {
        MilneConfig c;
        c.eps = ueps(rng);
        c.r_kappa = urk(rng);
        c.n_eta = 40;
        c.n_phi = 64;
        const double cv = uc(rng);
        auto f = solve_inflow(c, [=](double) { return cv; });
        CHECK(f.iterations == 1);
        CHECK(f.converged);
        double worst = 0.0;
        for (double v : f.f) worst = std::max(worst, std::abs(v - cv));
        REQUIRE(worst <= c.tol);
        CHECK(f.f_limit == Catch::Approx(cv).margin(1e-12));
    }
}

TEST_CASE("solve_inflow: zero data gives zero") {
    MilneConfig c;
    c.eps = 0.1;
    c.r_kappa = 1.0;
    c.n_eta = 32;
    c.n_phi = 48;
    auto f = solve_inflow(c, [](double) { return 0.0; });
    for (double v : f.f) REQUIRE(v == 0.0);
}

TEST_CASE("solved fields: average consistency and reflection symmetry") {
    MilneConfig c;
    c.eps = 0.1;
    c.r_kappa = 1.0;
    c.n_eta = 48;
    c.n_phi = 64;
    auto f = solve_inflow(c, [](double p) { return std::sin(p); });
    REQUIRE(f.converged);
    // fbar is the phi-quadrature of f at every row
    for (std::size_t i = 0; i < f.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < f.cols(); ++j) s += f.at(i, j);
        REQUIRE(std::abs(s / double(f.cols()) - f.fbar[i]) < 1e-12);
    }
    // reflection residual at eta = L
    const std::size_t m = f.rows(), n = f.cols();
    for (std::size_t j = 0; j < n; ++j)
        REQUIRE(std::abs(f.at(m - 1, j) - f.at(m - 1, n - 1 - j)) <= 10.0 * c.tol);
}

TEST_CASE("limit value functional") {
    MilneConfig c;
    c.eps = 0.1;
    c.r_kappa = 1.0;
    c.n_eta = 16;
    c.n_phi = 64;
    MilneField f;
    f.cfg = c;
    MilneOperator op(c);
    f.eta = op.eta();
    f.phi = op.phi();
    f.f.assign(f.eta.size() * f.phi.size(), 3.0);
    CHECK(limit_value(f) == Catch::Approx(3.0).margin(1e-13));

    // quadrature reproduces the denominator integral of sin^2
    double den = 0.0;
    const double w = 2.0 * pi / double(f.phi.size());
    for (double p : f.phi) den += sqr(std::sin(p)) * w;
    CHECK(den == Catch::Approx(pi).margin(1e-10));

    // odd moment: f(L, phi) = cos(phi) has zero limit value
    for (std::size_t j = 0; j < f.phi.size(); ++j)
        f.f[(f.eta.size() - 1) * f.phi.size() + j] = std::cos(f.phi[j]);
    CHECK(limit_value(f) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("solve_diffusive: compatibility gate and normalization") {
    MilneConfig c;
    c.eps = 0.1;
    c.r_kappa = 1.0;
    c.n_eta = 48;
    c.n_phi = 64;

    auto fz = solve_diffusive(c, [](double) { return 0.0; });
    CHECK(fz.p_wall == 0.0);

    CHECK_THROWS_AS(solve_diffusive(c, [](double p) { return std::sin(p); }), CompatibilityError);
    try {
        solve_diffusive(c, [](double p) { return std::sin(p); });
    } catch (const CompatibilityError& e) {
        CHECK(e.defect == Catch::Approx(pi / 2.0).margin(1e-9));
    }

    auto f = solve_diffusive(c, [](double p) { return std::sin(p) * std::cos(p); });
    CHECK(std::abs(f.p_wall) < 1e-6);
}

TEST_CASE("decay rate estimation") {
    MilneConfig c;
    c.eps = 0.1;
    c.r_kappa = 1.0;
    c.n_eta = 64;
    c.n_phi = 64;

    auto fc = solve_inflow(c, [](double) { return 1.7; });
    CHECK(decay_rate(fc).exact_zero);

    auto f = solve_inflow(c, [](double p) { return std::sin(p); });
    const auto dr = decay_rate(f);
    CHECK_FALSE(dr.exact_zero);
    CHECK(dr.k_est > 0.0);
    CHECK(dr.r2 > 0.9);

    // grid-refinement stability of the fitted rate
    MilneConfig c2 = c;
    c2.n_eta = 128;
    auto f2 = solve_inflow(c2, [](double p) { return std::sin(p); });
    const auto dr2 = decay_rate(f2);
    CHECK(std::abs(dr2.k_est - dr.k_est) < 0.1 * dr.k_est);
}

TEST_CASE("weighted derivatives of a constant field vanish") {
    MilneConfig c;
    c.eps = 0.1;
    c.r_kappa = 1.0;
    c.n_eta = 32;
    c.n_phi = 48;
    auto f = solve_inflow(c, [](double) { return 4.0; });
    const auto rep = weighted_derivatives(c, f, 0.3);
    CHECK(rep.sup_weighted_eta < 1e-11);
    CHECK(rep.sup_weighted_phi < 1e-11);
}

TEST_CASE("source decay warning") {
    MilneConfig c;
    c.eps = 0.1;
    c.r_kappa = 1.0;
    c.n_eta = 32;
    c.n_phi = 48;
    auto grow = [](double, double p) { return 0.1 * std::cos(p); }; // no decay
    auto f = solve_inflow(c, [](double) { return 0.0; }, grow);
    REQUIRE_FALSE(f.warnings.empty());
    auto ok = [](double e, double p) { return std::exp(-e) * std::cos(p); };
    auto f2 = solve_inflow(c, [](double) { return 0.0; }, ok);
    CHECK(f2.warnings.empty());
}

TEST_CASE("length override is recorded") {
    MilneConfig c;
    c.eps = 0.04;
    c.r_kappa = 2.0;
    CHECK_FALSE(c.length_overridden());
    c.length = 3.0;
    CHECK(c.length_overridden());
    CHECK(c.L() == 3.0);
}
