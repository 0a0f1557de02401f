#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "milnelab/io.hpp"
#include "milnelab/milne_upwind.hpp"
#include "milnelab/report.hpp"

namespace milnelab {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

/// Named boundary-source family. "legendre-flux" is the shipped default:
/// g = sin(phi) (a1 cos tau + b1 sin tau + a2 cos 2tau); its flux has a
/// zero-mean tangential profile, so the compatibility constraint holds on the
/// disk by construction. "tabulated" reads (tau, phi, value) CSV rows and
/// projects the incompatible part automatically.
struct SourceSpec {
    std::string name = "legendre-flux";
    double a1 = 1.0, b1 = 0.5, a2 = 0.25;
    std::string table_path;

    BoundarySource make() const {
        if (name == "zero") return [](double, double) { return 0.0; };
        if (name == "legendre-flux") {
            const double a1c = a1, b1c = b1, a2c = a2;
            return [a1c, b1c, a2c](double tau, double phi) {
                return std::sin(phi) *
                       (a1c * std::cos(tau) + b1c * std::sin(tau) + a2c * std::cos(2.0 * tau));
            };
        }
        if (name == "tabulated") return make_tabulated();
        throw std::invalid_argument("unknown boundary source family: " + name);
    }

    static SourceSpec from_json(const json& j) {
        SourceSpec s;
        s.name = j.value("name", std::string("legendre-flux"));
        s.a1 = j.value("a1", 1.0);
        s.b1 = j.value("b1", 0.5);
        s.a2 = j.value("a2", 0.25);
        s.table_path = j.value("path", std::string());
        return s;
    }

    json to_json() const {
        json j{{"name", name}};
        if (name == "legendre-flux") { j["a1"] = a1; j["b1"] = b1; j["a2"] = a2; }
        if (name == "tabulated") j["path"] = table_path;
        return j;
    }

private:
    BoundarySource make_tabulated() const;
};

struct ExperimentConfig {
    std::string experiment = "limit"; // limit | regularity | classical-compare |
                                      // milne-single | transport-single
    json domain_json = {{"kind", "circle"}, {"a", 1.0}};
    SourceSpec source;
    std::vector<double> eps_list = {0.1, 0.05, 0.025, 0.0125};
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    int workers = 1;

    // transport overrides
    int n_dir = 32;
    int n_r = 0;       // 0 -> per-eps default
    int n_theta = 48;
    double transport_tol = 1e-9;
    int transport_max_iter = 2000;
    int anderson_window = 10;

    // milne / layer overrides
    int n_tau = 16;
    int milne_n_eta = 0;
    int milne_n_phi = 128;
    double milne_tol = 1e-9;

    double tau_probe = 0.0; // station for single-solve and regularity probes
    double dtau = 2e-3;     // tangential finite-difference step

    void check() const {
        if (eps_list.empty()) throw std::invalid_argument("config: empty eps_list");
        for (double e : eps_list)
            if (!(e > 0.0 && e < 1.0)) throw std::invalid_argument("config: eps outside (0,1)");
        for (std::size_t i = 1; i < eps_list.size(); ++i)
            if (!(eps_list[i] < eps_list[i - 1]))
                throw std::invalid_argument("config: eps_list must be strictly decreasing");
    }

    DomainSpec domain() const { return domain_from_json(domain_json); }

    static ExperimentConfig from_json(const json& j) {
        ExperimentConfig c;
        c.experiment = j.value("experiment", c.experiment);
        if (j.contains("domain")) c.domain_json = j.at("domain");
        if (j.contains("g")) c.source = SourceSpec::from_json(j.at("g"));
        if (j.contains("eps_list")) c.eps_list = j.at("eps_list").get<std::vector<double>>();
        c.out_dir = j.value("out", c.out_dir);
        c.seed = j.value("seed", c.seed);
        c.workers = j.value("workers", c.workers);
        c.n_dir = j.value("n_dir", c.n_dir);
        c.n_r = j.value("n_r", c.n_r);
        c.n_theta = j.value("n_theta", c.n_theta);
        c.transport_tol = j.value("transport_tol", c.transport_tol);
        c.transport_max_iter = j.value("transport_max_iter", c.transport_max_iter);
        c.anderson_window = j.value("anderson_window", c.anderson_window);
        c.n_tau = j.value("n_tau", c.n_tau);
        c.milne_n_eta = j.value("milne_n_eta", c.milne_n_eta);
        c.milne_n_phi = j.value("milne_n_phi", c.milne_n_phi);
        c.milne_tol = j.value("milne_tol", c.milne_tol);
        c.tau_probe = j.value("tau_probe", c.tau_probe);
        c.dtau = j.value("dtau", c.dtau);
        c.check();
        return c;
    }

    json to_json() const {
        json j;
        j["experiment"] = experiment;
        j["domain"] = domain_json;
        j["g"] = source.to_json();
        j["eps_list"] = eps_list;
        j["out"] = out_dir;
        j["seed"] = seed;
        j["workers"] = workers;
        j["n_dir"] = n_dir;
        j["n_r"] = n_r;
        j["n_theta"] = n_theta;
        j["transport_tol"] = transport_tol;
        j["transport_max_iter"] = transport_max_iter;
        j["anderson_window"] = anderson_window;
        j["n_tau"] = n_tau;
        j["milne_n_eta"] = milne_n_eta;
        j["milne_n_phi"] = milne_n_phi;
        j["milne_tol"] = milne_tol;
        j["tau_probe"] = tau_probe;
        j["dtau"] = dtau;
        return j;
    }

    int default_n_r(double eps) const {
        if (n_r > 0) return n_r;
        // enough graded cells to reach the wall layer from the bulk
        return std::min(96, 48 + int(24.0 * std::log2(0.1 / std::min(eps, 0.1)) + 0.5));
    }
};

inline BoundarySource SourceSpec::make_tabulated() const {
    std::ifstream in(table_path);
    if (!in) throw std::invalid_argument("tabulated source: cannot open " + table_path);
    std::string line;
    std::getline(in, line); // header
    std::vector<std::array<double, 3>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::array<double, 3> r{};
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &r[0], &r[1], &r[2]) == 3)
            rows.push_back(r);
    }
    if (rows.empty()) throw std::invalid_argument("tabulated source: no rows");
    auto data = std::make_shared<std::vector<std::array<double, 3>>>(std::move(rows));
    // nearest-node lookup on the tabulated cloud; adequate for coarse tables
    return [data](double tau, double phi) {
        double best = 1e300, val = 0.0;
        for (const auto& r : *data) {
            const double d = sqr(wrap_pi(r[0] - tau)) + sqr(wrap_pi(r[1] - phi));
            if (d < best) { best = d; val = r[2]; }
        }
        return val;
    };
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct LimitRow {
    double eps;
    RemainderNorms norms;
    double boundary_defect;
    double layer_k_min, layer_r2_min;
    double mass_defect;
    int transport_iterations;
    int layer_iterations_max;
    bool converged;
    double runtime_s;
    double triangle_margin; // sup|u-u0| - (sup|R| - sup|correction|)
};

struct ErrorReport {
    std::vector<LimitRow> rows;
    LinearFit fit;          // ln sup|u-u0| vs ln eps
    LinearFit fit_defect;   // ln sup|R-P[R]| vs ln eps
    bool fit_valid = false;
    bool partial = false;
    std::string failure;
};

struct RegularityRow {
    double eps;
    double sup_weighted_eta;
    double sup_weighted_phi;
    double sup_unweighted_phi;
    double sup_tangential_fd;
    double sup_tangential_weq;
    double tangential_gap;
    double k0;
    double decay_k, decay_r2;
    double lneps8; // |ln eps|^8
};

struct RegularityReport {
    std::vector<RegularityRow> rows;
    // grazing refinement contrast at fixed eps
    double classical_growth = 0.0; // unweighted dphi sup growth over two refinements
    double corrected_growth = 0.0; // weighted dphi sup change over the same refinements
    std::vector<double> contrast_n_phi;
    std::vector<double> classical_sups;
    std::vector<double> corrected_sups;
    bool dominated = true; // sups / |ln eps|^8 non-increasing within slack
    bool partial = false;
    std::string failure;
};

struct ClassicalRow {
    double eps;
    double f_L_corrected, f_L_classical;
    double k_corrected, k_classical;
    double r2_corrected, r2_classical;
    double force_sup, force_bound; // sup|F| and eps/(R_min - sqrt(eps))
    double dphi_sup_corrected_weighted;
    double dphi_sup_classical_unweighted;
};

struct ClassicalReport {
    std::vector<ClassicalRow> rows;
    bool partial = false;
    std::string failure;
};

// ---------------------------------------------------------------------------
// Studies
// ---------------------------------------------------------------------------

/// Diffusive-limit study: reference transport solve, expansion assembly and
/// remainder norms per eps, then the rate fit of ln sup|u - u0| vs ln eps.
inline ErrorReport run_limit_study(const ExperimentConfig& cfg) {
    cfg.check();
    const DomainSpec dom = cfg.domain();
    const BoundarySource g = cfg.source.make();
    ErrorReport rep;

    // leading interior solution is eps-independent
    const HarmonicSolution u0 = solve_neumann(dom, neumann_data(g));

    for (double eps : cfg.eps_list) {
        const auto t0 = std::chrono::steady_clock::now();
        LimitRow row{};
        row.eps = eps;
        try {
            LayerBuildOptions lopt;
            lopt.n_tau = cfg.n_tau;
            lopt.n_eta = cfg.milne_n_eta;
            lopt.n_phi = cfg.milne_n_phi;
            lopt.tol = cfg.milne_tol;
            lopt.workers = cfg.workers;
            ExpansionSet exp;
            exp.domain = dom;
            exp.eps = eps;
            exp.interior = u0;
            exp.layer = build_layer(dom, eps, u0, g, lopt);

            TransportConfig tc;
            tc.eps = eps;
            tc.domain = dom;
            tc.g = g;
            tc.n_dir = cfg.n_dir;
            tc.n_r = cfg.default_n_r(eps);
            tc.n_theta = cfg.n_theta;
            tc.tol = cfg.transport_tol;
            tc.max_iter = cfg.transport_max_iter;
            tc.anderson_window = cfg.anderson_window;
            tc.workers = cfg.workers;
            const TransportField u = transport_solve(tc);

            row.norms = remainder_norms(u, exp, cfg.workers);
            row.boundary_defect = boundary_defect_sup(exp, g);
            row.layer_k_min = 1e300;
            row.layer_r2_min = 1.0;
            row.layer_iterations_max = 0;
            for (std::size_t t = 0; t < exp.layer.fields.size(); ++t) {
                row.layer_k_min = std::min(row.layer_k_min, exp.layer.decay_k[t]);
                row.layer_r2_min = std::min(row.layer_r2_min, exp.layer.decay_r2[t]);
                row.layer_iterations_max =
                    std::max(row.layer_iterations_max, exp.layer.fields[t].iterations);
            }
            row.mass_defect = u.mass;
            row.transport_iterations = u.iterations;
            row.converged = u.converged;
            row.triangle_margin =
                row.norms.sup_u_minus_u0 - (row.norms.sup_R - row.norms.sup_correction);
        } catch (const std::exception& ex) {
            rep.partial = true;
            rep.failure = ex.what();
            break;
        }
        row.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rep.rows.push_back(row);
    }

    std::vector<double> lx, ly, lyd;
    for (const auto& r : rep.rows)
        if (r.norms.sup_u_minus_u0 > 0.0 && r.boundary_defect > 0.0) {
            lx.push_back(std::log(r.eps));
            ly.push_back(std::log(r.norms.sup_u_minus_u0));
            lyd.push_back(std::log(r.boundary_defect));
        }
    if (lx.size() >= 3) {
        rep.fit = linear_fit(lx, ly);
        rep.fit_defect = linear_fit(lx, lyd);
        rep.fit_valid = true;
    }
    return rep;
}

/// Weighted-derivative study on the boundary layer of a fixed interior
/// solution, with the corrected/classical grazing-refinement contrast.
inline RegularityReport run_regularity_study(const ExperimentConfig& cfg) {
    cfg.check();
    const DomainSpec dom = cfg.domain();
    const BoundarySource g = cfg.source.make();
    RegularityReport rep;
    const HarmonicSolution u0 = solve_neumann(dom, neumann_data(g));
    const auto bc = layer_bc(dom, u0, g);

    const double tau0 = cfg.tau_probe;
    const double th0 = theta_of_tau(dom, tau0);
    auto station = [&](double tau) {
        const double th = theta_of_tau(dom, tau);
        return TauStation{dom.radius_of_curvature(th), r_kappa_prime_tau(dom, th)};
    };

    try {
        for (double eps : cfg.eps_list) {
            RegularityRow row{};
            row.eps = eps;
            row.lneps8 = std::pow(std::abs(std::log(eps)), 8.0);

            MilneConfig mc;
            mc.eps = eps;
            mc.tau = tau0;
            mc.r_kappa = dom.radius_of_curvature(th0);
            mc.r_kappa_prime = r_kappa_prime_tau(dom, th0);
            mc.n_eta = cfg.milne_n_eta;
            mc.n_phi = cfg.milne_n_phi;
            mc.tol = cfg.milne_tol;

            PhiFunc h = [&bc, tau0](double p) { return bc.g1(tau0, p); };
            MilneField f = solve_inflow(mc, h);
            const auto dr = decay_rate(f);
            row.decay_k = dr.exact_zero ? 0.0 : dr.k_est;
            row.decay_r2 = dr.exact_zero ? 1.0 : dr.r2;
            const double k0 = default_weight_rate(f);
            row.k0 = k0;
            const auto der = weighted_derivatives(mc, f, k0);
            row.sup_weighted_eta = der.sup_weighted_eta;
            row.sup_weighted_phi = der.sup_weighted_phi;
            row.sup_unweighted_phi = der.sup_unweighted_phi;

            TauPhiFunc h_fam = [&bc](double tau, double p) { return bc.g1(tau, p); };
            const auto tg = tangential_derivative(mc, station, h_fam, nullptr, cfg.dtau, k0);
            row.sup_tangential_fd = tg.sup_fd;
            row.sup_tangential_weq = tg.sup_weq;
            row.tangential_gap = tg.rel_gap;
            rep.rows.push_back(row);
        }

        // grazing-refinement contrast at the middle eps: each refinement
        // multiplies n_phi by 4, so the nearest node approaches the grazing
        // set fast enough to expose the classical blow-up
        const double eps_c = cfg.eps_list[cfg.eps_list.size() / 2];
        const double th_c = th0;
        for (int lvl = 0; lvl < 3; ++lvl) {
            MilneConfig mc;
            mc.eps = eps_c;
            mc.tau = tau0;
            mc.r_kappa = dom.radius_of_curvature(th_c);
            mc.n_phi = cfg.milne_n_phi * (1 << (2 * lvl));
            mc.tol = cfg.milne_tol;
            PhiFunc h = [&bc, tau0](double p) { return bc.g1(tau0, p); };

            MilneConfig mc_cl = mc;
            mc_cl.classical = true;
            MilneField f_co = solve_inflow(mc, h);
            MilneField f_cl = solve_inflow(mc_cl, h);
            const double k0 = default_weight_rate(f_co);
            const auto d_co = weighted_derivatives(mc, f_co, k0);
            const auto d_cl = weighted_derivatives(mc_cl, f_cl, 0.0);
            rep.contrast_n_phi.push_back(mc.n_phi);
            rep.corrected_sups.push_back(d_co.sup_weighted_phi);
            rep.classical_sups.push_back(d_cl.sup_unweighted_phi);
        }
        rep.classical_growth = rep.classical_sups.back() / rep.classical_sups.front();
        rep.corrected_growth = rep.corrected_sups.back() / rep.corrected_sups.front();

        // dominance: sups normalized by |ln eps|^8 must not grow (10% slack)
        for (std::size_t i = 1; i < rep.rows.size(); ++i) {
            const auto& a = rep.rows[i - 1];
            const auto& b = rep.rows[i];
            for (auto sel : {&RegularityRow::sup_weighted_eta, &RegularityRow::sup_weighted_phi}) {
                const double ra = a.*sel / a.lneps8;
                const double rb = b.*sel / b.lneps8;
                if (rb > 1.1 * ra) rep.dominated = false;
            }
        }
    } catch (const std::exception& ex) {
        rep.partial = true;
        rep.failure = ex.what();
    }
    return rep;
}

/// Corrected-vs-classical comparison on identical data.
inline ClassicalReport run_classical_comparison(const ExperimentConfig& cfg) {
    cfg.check();
    const DomainSpec dom = cfg.domain();
    const BoundarySource g = cfg.source.make();
    ClassicalReport rep;
    const HarmonicSolution u0 = solve_neumann(dom, neumann_data(g));
    const auto bc = layer_bc(dom, u0, g);
    const double tau0 = cfg.tau_probe;
    const double th0 = theta_of_tau(dom, tau0);

    try {
        for (double eps : cfg.eps_list) {
            ClassicalRow row{};
            row.eps = eps;
            MilneConfig mc;
            mc.eps = eps;
            mc.tau = tau0;
            mc.r_kappa = dom.radius_of_curvature(th0);
            mc.n_eta = cfg.milne_n_eta;
            mc.n_phi = cfg.milne_n_phi;
            mc.tol = cfg.milne_tol;
            MilneConfig mc_cl = mc;
            mc_cl.classical = true;

            PhiFunc h = [&bc, tau0](double p) { return bc.g1(tau0, p); };
            MilneField f_co = solve_inflow(mc, h);
            MilneField f_cl = solve_inflow(mc_cl, h);
            row.f_L_corrected = f_co.f_limit;
            row.f_L_classical = f_cl.f_limit;
            const auto d_co = decay_rate(f_co);
            const auto d_cl = decay_rate(f_cl);
            row.k_corrected = d_co.exact_zero ? 0.0 : d_co.k_est;
            row.k_classical = d_cl.exact_zero ? 0.0 : d_cl.k_est;
            row.r2_corrected = d_co.exact_zero ? 1.0 : d_co.r2;
            row.r2_classical = d_cl.exact_zero ? 1.0 : d_cl.r2;

            row.force_sup = 0.0;
            for (double eta : f_co.eta)
                row.force_sup = std::max(row.force_sup, std::abs(milne_force(mc, eta)));
            row.force_bound = eps / (dom.validity_radius() - std::sqrt(eps));

            const double k0 = default_weight_rate(f_co);
            row.dphi_sup_corrected_weighted = weighted_derivatives(mc, f_co, k0).sup_weighted_phi;
            row.dphi_sup_classical_unweighted =
                weighted_derivatives(mc_cl, f_cl, 0.0).sup_unweighted_phi;
            rep.rows.push_back(row);
        }
    } catch (const std::exception& ex) {
        rep.partial = true;
        rep.failure = ex.what();
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

/// Manifest with every tolerance and grid parameter that shaped the results.
/// No timestamps: identical configs must produce byte-identical files.
inline json make_manifest(const ExperimentConfig& cfg) {
    json m;
    m["tool"] = "milnelab";
    m["format_version"] = 1;
    m["config"] = cfg.to_json();
    m["notes"] = {
        {"g_family", "shipped boundary data families are this lab's choice"},
        {"runtimes", "wall times live in run_info.json and are excluded from reproducibility"}};
    return m;
}

inline void emit(const ErrorReport& rep, const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    CsvTable t({"eps", "sup_err", "l2_err", "sup_R", "l2_R", "sup_correction", "boundary_defect",
                "layer_k_min", "layer_r2_min", "mass_defect", "transport_iterations",
                "layer_iterations_max", "converged", "triangle_margin", "slope_running"});
    std::vector<double> lx, ly;
    for (const auto& r : rep.rows) {
        lx.push_back(std::log(r.eps));
        ly.push_back(std::log(std::max(r.norms.sup_u_minus_u0, 1e-300)));
        double running = 0.0;
        if (lx.size() >= 2) running = linear_fit(lx, ly).slope;
        t.add_row({r.eps, r.norms.sup_u_minus_u0, r.norms.l2_u_minus_u0, r.norms.sup_R,
                   r.norms.l2_R, r.norms.sup_correction, r.boundary_defect, r.layer_k_min,
                   r.layer_r2_min, r.mass_defect, double(r.transport_iterations),
                   double(r.layer_iterations_max), double(r.converged), r.triangle_margin,
                   running});
    }
    t.write(cfg.out_dir + "/results.csv");

    json manifest = make_manifest(cfg);
    manifest["partial"] = rep.partial;
    if (rep.partial) manifest["failure"] = rep.failure;
    if (rep.fit_valid) {
        manifest["fit"] = {{"slope", rep.fit.slope},
                           {"intercept", rep.fit.intercept},
                           {"r2", rep.fit.r2}};
        manifest["fit_boundary_defect"] = {{"slope", rep.fit_defect.slope},
                                           {"intercept", rep.fit_defect.intercept},
                                           {"r2", rep.fit_defect.r2}};
    }
    write_text(cfg.out_dir + "/manifest.json", manifest.dump(2) + "\n");

    json info;
    json times = json::array();
    for (const auto& r : rep.rows) times.push_back(r.runtime_s);
    info["runtime_s"] = times;
    write_text(cfg.out_dir + "/run_info.json", info.dump(2) + "\n");

    LogLogPlot plot("diffusive limit: sup|u - u0| vs eps", "eps", "sup error");
    for (const auto& r : rep.rows) plot.add_point(r.eps, r.norms.sup_u_minus_u0);
    if (rep.fit_valid) plot.set_fit(rep.fit.slope, rep.fit.intercept);
    plot.write(cfg.out_dir + "/plot.svg");
}

inline void emit(const RegularityReport& rep, const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    CsvTable t({"eps", "sup_weighted_eta", "sup_weighted_phi", "sup_unweighted_phi",
                "sup_tangential_fd", "sup_tangential_weq", "tangential_gap", "k0", "decay_k",
                "decay_r2", "lneps8"});
    for (const auto& r : rep.rows)
        t.add_row({r.eps, r.sup_weighted_eta, r.sup_weighted_phi, r.sup_unweighted_phi,
                   r.sup_tangential_fd, r.sup_tangential_weq, r.tangential_gap, r.k0, r.decay_k,
                   r.decay_r2, r.lneps8});
    t.write(cfg.out_dir + "/results.csv");

    CsvTable tc({"n_phi", "classical_unweighted_dphi", "corrected_weighted_dphi"});
    for (std::size_t i = 0; i < rep.contrast_n_phi.size(); ++i)
        tc.add_row({rep.contrast_n_phi[i], rep.classical_sups[i], rep.corrected_sups[i]});
    tc.write(cfg.out_dir + "/grazing_contrast.csv");

    json manifest = make_manifest(cfg);
    manifest["partial"] = rep.partial;
    if (rep.partial) manifest["failure"] = rep.failure;
    manifest["dominated_by_lneps8"] = rep.dominated;
    manifest["classical_growth"] = rep.classical_growth;
    manifest["corrected_growth"] = rep.corrected_growth;
    write_text(cfg.out_dir + "/manifest.json", manifest.dump(2) + "\n");

    LogLogPlot plot("weighted derivative sups vs eps", "eps", "sup");
    for (const auto& r : rep.rows) plot.add_point(r.eps, std::max(r.sup_weighted_eta, 1e-300));
    if (rep.rows.size() >= 2) {
        std::vector<double> lx, ly;
        for (const auto& r : rep.rows) {
            lx.push_back(std::log(r.eps));
            ly.push_back(std::log(std::max(r.sup_weighted_eta, 1e-300)));
        }
        const auto fit = linear_fit(lx, ly);
        plot.set_fit(fit.slope, fit.intercept);
    }
    plot.write(cfg.out_dir + "/plot.svg");
}

inline void emit(const ClassicalReport& rep, const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    CsvTable t({"eps", "f_L_corrected", "f_L_classical", "k_corrected", "k_classical",
                "r2_corrected", "r2_classical", "force_sup", "force_bound",
                "dphi_corrected_weighted", "dphi_classical_unweighted"});
    for (const auto& r : rep.rows)
        t.add_row({r.eps, r.f_L_corrected, r.f_L_classical, r.k_corrected, r.k_classical,
                   r.r2_corrected, r.r2_classical, r.force_sup, r.force_bound,
                   r.dphi_sup_corrected_weighted, r.dphi_sup_classical_unweighted});
    t.write(cfg.out_dir + "/results.csv");

    json manifest = make_manifest(cfg);
    manifest["partial"] = rep.partial;
    if (rep.partial) manifest["failure"] = rep.failure;
    write_text(cfg.out_dir + "/manifest.json", manifest.dump(2) + "\n");

    LogLogPlot plot("|f_L corrected - classical| vs eps", "eps", "difference");
    std::vector<double> lx, ly;
    for (const auto& r : rep.rows) {
        const double d = std::abs(r.f_L_corrected - r.f_L_classical);
        plot.add_point(r.eps, std::max(d, 1e-300));
        if (d > 0.0) { lx.push_back(std::log(r.eps)); ly.push_back(std::log(d)); }
    }
    if (lx.size() >= 2) {
        const auto fit = linear_fit(lx, ly);
        plot.set_fit(fit.slope, fit.intercept);
    }
    plot.write(cfg.out_dir + "/plot.svg");
}

} // namespace milnelab
