#include <catch2/catch_amalgamated.hpp>

#include "milnelab/expansion.hpp"

using namespace milnelab;

TEST_CASE("cutoff profile") {
    CHECK(cutoff(0.0) == 1.0);
    CHECK(cutoff(0.25) == 1.0);
    CHECK(cutoff(0.5) == 1.0);
    CHECK(cutoff(0.75) == 0.0);
    CHECK(cutoff(1.0) == 0.0);
    CHECK(cutoff(0.625) == Catch::Approx(0.5).margin(1e-14)); // midpoint symmetry
    // smooth monotone bridge
    double prev = 1.0;
    for (double y = 0.5; y <= 0.75; y += 1e-3) {
        const double v = cutoff(y);
        REQUIRE(v <= prev + 1e-15);
        prev = v;
    }
}

TEST_CASE("layer boundary data on the unit disk") {
    const auto disk = DomainSpec::circle(1.0);
    // u0 = x1 = r cos(theta)
    auto sol = solve_neumann(disk, [](double tau) { return std::cos(tau); });
    auto bc = layer_bc(disk, sol, nullptr);
    // w . grad u0 = -sin(phi - tau); P over outgoing directions gives
    // +pi/4 cos(tau), so g1 = -sin(phi - tau) - (pi/4) cos(tau)
    for (double tau : {0.0, 0.9, -2.2})
        for (double phi : {0.3, 1.2, 2.8}) {
            const double expected = -std::sin(phi - tau) - 0.25 * pi * std::cos(tau);
            CHECK(bc.g1(tau, phi) == Catch::Approx(expected).margin(1e-9));
        }
    // zero interior, zero g
    auto zero_sol = solve_neumann(disk, [](double) { return 0.0; });
    auto bc0 = layer_bc(disk, zero_sol, nullptr);
    CHECK(bc0.g1(0.4, 1.0) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("layer data compatibility when u0 matches its source") {
    const auto disk = DomainSpec::circle(1.0);
    // g chosen so the Neumann data of u0 is exactly its flux moment:
    // g = 2 sin(phi) cos(tau) -> D = cos(tau) -> u0 = r cos(theta)
    BoundarySource g = [](double tau, double phi) { return 2.0 * std::sin(phi) * std::cos(tau); };
    auto sol = solve_neumann(disk, neumann_data(g));
    auto bc = layer_bc(disk, sol, g);
    MilneConfig mc;
    mc.eps = 0.05;
    mc.r_kappa = 1.0;
    for (double tau : {0.0, 1.1, -2.4}) {
        const double defect =
            compatibility_defect(mc, [&](double p) { return bc.g1(tau, p); });
        CHECK(std::abs(defect) < 1e-9);
    }
}

TEST_CASE("zero data gives a zero layer") {
    const auto disk = DomainSpec::circle(1.0);
    auto sol = solve_neumann(disk, [](double) { return 0.0; });
    LayerBuildOptions opt;
    opt.n_tau = 4;
    opt.n_phi = 32;
    auto fam = build_layer(disk, 0.1, sol, nullptr, opt);
    for (const auto& f : fam.fields)
        for (double v : f.f) REQUIRE(v == 0.0);
    CHECK(fam.value(1.0, 0.3, 0.7) == 0.0);
}

TEST_CASE("disk layer decays at every station and is rotation-covariant") {
    const auto disk = DomainSpec::circle(1.0);
    BoundarySource g = [](double tau, double phi) { return 2.0 * std::sin(phi) * std::cos(tau); };
    auto sol = solve_neumann(disk, neumann_data(g));
    LayerBuildOptions opt;
    opt.n_tau = 8;
    opt.n_phi = 64;
    opt.n_eta = 48;
    auto fam = build_layer(disk, 0.1, sol, g, opt);
    for (std::size_t t = 0; t < fam.fields.size(); ++t) {
        REQUIRE(fam.fields[t].converged);
        CHECK(fam.decay_k[t] > 0.0);
        CHECK(fam.decay_r2[t] > 0.9);
        CHECK(std::abs(fam.compat_defect[t]) < 1e-8);
    }
    // rotational covariance: stations differ by the cos(tau) factor of the
    // data, so v(eta, tau, phi)/cos(tau) collapses onto one profile
    const auto& f0 = fam.fields[0]; // tau = -pi, cos = -1
    const auto& f2 = fam.fields[2]; // tau = -pi/2, cos = 0 -> zero field
    const auto& f4 = fam.fields[4]; // tau = 0, cos = +1
    double worst = 0.0, worst_zero = 0.0;
    for (std::size_t k = 0; k < f0.f.size(); ++k) {
        worst = std::max(worst, std::abs((f0.f[k] - fam.f_limit[0]) + (f4.f[k] - fam.f_limit[4])));
        worst_zero = std::max(worst_zero, std::abs(f2.f[k] - fam.f_limit[2]));
    }
    CHECK(worst < 1e-7);
    CHECK(worst_zero < 1e-7);
}

TEST_CASE("expansion evaluation: cutoff locality is bitwise") {
    const auto disk = DomainSpec::circle(1.0);
    BoundarySource g = [](double tau, double phi) { return 2.0 * std::sin(phi) * std::cos(tau); };
    auto sol = solve_neumann(disk, neumann_data(g));
    ExpansionSet exp;
    exp.domain = disk;
    exp.eps = 0.04;
    exp.interior = sol;
    LayerBuildOptions opt;
    opt.n_tau = 8;
    opt.n_phi = 48;
    opt.n_eta = 48;
    exp.layer = build_layer(disk, exp.eps, sol, g, opt);

    // support ends at mu = 0.75 sqrt(eps) = 0.15
    const Point2 deep{0.5, 0.2}; // mu = 1 - |x| ~ 0.46
    const Point2 w{std::cos(1.1), std::sin(1.1)};
    REQUIRE(exp.value(deep, w) == exp.interior_value(deep, w));

    const Point2 shallow{0.95, 0.0}; // mu = 0.05 inside the layer support
    CHECK(exp.value(shallow, w) != exp.interior_value(shallow, w));

    // interior terms at a known solution: u0 = r cos(theta) = x1
    const auto t = interior_terms(sol, {0.2, 0.1}, {1.0, 0.0});
    CHECK(exp.interior_value({0.2, 0.1}, {1.0, 0.0}) ==
          Catch::Approx(t.u0 + exp.eps * t.u1 + exp.eps * exp.eps * t.u2).margin(1e-15));
}

TEST_CASE("layer tau interpolation is consistent at the stations") {
    const auto disk = DomainSpec::circle(1.0);
    BoundarySource g = [](double tau, double phi) { return 2.0 * std::sin(phi) * std::cos(tau); };
    auto sol = solve_neumann(disk, neumann_data(g));
    LayerBuildOptions opt;
    opt.n_tau = 8;
    opt.n_phi = 48;
    opt.n_eta = 40;
    auto fam = build_layer(disk, 0.1, sol, g, opt);
    for (std::size_t t = 0; t < fam.tau.size(); ++t) {
        const double eta = 1.2, phi = 0.8;
        const double direct =
            cutoff(std::sqrt(fam.eps) * eta) * (fam.fields[t].value(eta, phi) - fam.f_limit[t]);
        CHECK(fam.value(eta, fam.tau[t], phi) == Catch::Approx(direct).margin(1e-10));
    }
    // adjacent stations differ by O(dtau) on smooth data
    for (std::size_t t = 0; t + 1 < fam.tau.size(); ++t) {
        double d = 0.0;
        for (std::size_t k = 0; k < fam.fields[t].f.size(); ++k)
            d = std::max(d, std::abs((fam.fields[t].f[k] - fam.f_limit[t]) -
                                     (fam.fields[t + 1].f[k] - fam.f_limit[t + 1])));
        CHECK(d < 2.5 * (2.0 * pi / fam.tau.size()));
    }
}

TEST_CASE("remainder norms: zero data and norm inequality") {
    const auto disk = DomainSpec::circle(1.0);
    TransportConfig tc;
    tc.eps = 0.2;
    tc.domain = disk;
    tc.g = [](double, double) { return 0.0; };
    tc.n_dir = 16;
    tc.n_r = 12;
    tc.n_theta = 16;
    tc.max_iter = 60;
    auto u = transport_solve(tc);

    ExpansionSet exp;
    exp.domain = disk;
    exp.eps = tc.eps;
    exp.interior = solve_neumann(disk, [](double) { return 0.0; });
    const auto norms = remainder_norms(u, exp);
    CHECK(norms.sup_R == 0.0);
    CHECK(norms.l2_R == 0.0);
    CHECK(norms.sup_u_minus_u0 == 0.0);

    // norm inequality sup >= L2 / sqrt(phase-space measure) on a nonzero case
    BoundarySource g = [](double tau, double phi) { return 2.0 * std::sin(phi) * std::cos(tau); };
    tc.g = g;
    tc.max_iter = 400;
    auto u2 = transport_solve(tc);
    exp.interior = solve_neumann(disk, neumann_data(g));
    const auto n2 = remainder_norms(u2, exp);
    CHECK(n2.sup_u_minus_u0 >= n2.l2_u_minus_u0 / std::sqrt(u2.measure * 2.0 * pi) - 1e-12);
    CHECK(n2.sup_R >= 0.0);
}
