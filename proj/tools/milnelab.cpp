// milnelab command-line driver: geometry checks, single Milne/transport
// solves, and the orchestrated limit / regularity / classical studies.
//
// Exit codes: 0 success, 2 solver non-convergence or solver-level failure,
// 3 invalid configuration.

#include <cstdio>
#include <random>

#include <CLI11.hpp>

#include "milnelab/experiments.hpp"

using namespace milnelab;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_solver = 2;
constexpr int exit_config = 3;

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config " + path);
    json j;
    in >> j;
    return j;
}

ExperimentConfig assemble_config(const std::string& config_path, const std::string& domain_str,
                                 const std::vector<double>& eps, const std::string& out,
                                 int workers) {
    json j = config_path.empty() ? json::object() : load_config(config_path);
    // flag > file > default precedence
    if (!domain_str.empty()) j["domain"] = json::parse(domain_str);
    if (!eps.empty()) j["eps_list"] = eps;
    if (!out.empty()) j["out"] = out;
    if (workers > 0) j["workers"] = workers;
    return ExperimentConfig::from_json(j);
}

PhiFunc make_phi_data(const std::string& spec, double param) {
    if (spec == "zero") return [](double) { return 0.0; };
    if (spec == "constant") return [param](double) { return param; };
    if (spec == "sin") return [param](double p) { return param * std::sin(p); };
    if (spec == "sincos") return [param](double p) { return param * std::sin(p) * std::cos(p); };
    if (spec.rfind("table:", 0) == 0) {
        const std::string path = spec.substr(6);
        std::ifstream in(path);
        if (!in) throw std::invalid_argument("cannot open tabulated data " + path);
        std::string line;
        std::getline(in, line);
        auto xs = std::make_shared<std::vector<double>>();
        auto ys = std::make_shared<std::vector<double>>();
        while (std::getline(in, line)) {
            double a, b;
            if (std::sscanf(line.c_str(), "%lf,%lf", &a, &b) == 2) {
                xs->push_back(a);
                ys->push_back(b);
            }
        }
        if (xs->size() < 2) throw std::invalid_argument("tabulated data too short");
        return [xs, ys](double p) {
            // periodic linear interpolation on the tabulated angles
            p = wrap_pi(p);
            std::size_t n = xs->size();
            std::size_t i = 0;
            while (i + 1 < n && (*xs)[i + 1] < p) ++i;
            const std::size_t j = (i + 1) % n;
            double x0 = (*xs)[i], x1 = (*xs)[j];
            if (x1 <= x0) x1 += 2.0 * pi;
            const double t = std::clamp((p - x0) / (x1 - x0), 0.0, 1.0);
            return (*ys)[i] * (1.0 - t) + (*ys)[j] * t;
        };
    }
    throw std::invalid_argument("unknown boundary data spec: " + spec);
}

int cmd_geom_check(const std::string& domain_str, std::uint64_t seed, int n_samples) {
    const DomainSpec dom = domain_from_json(json::parse(domain_str));
    std::printf("domain ok: strictly convex, r > 0\n");
    std::printf("validity radius (min R_kappa): %.12g\n", dom.validity_radius());
    std::printf("max radius: %.12g, area: %.12g\n", dom.max_radius(), dom.area());
    double kmin = 1e300, kmax = 0.0;
    for (int i = 0; i < 2048; ++i) {
        const double th = -pi + 2.0 * pi * i / 2048.0;
        const double k = dom.kappa(th);
        kmin = std::min(kmin, k);
        kmax = std::max(kmax, k);
    }
    std::printf("curvature range: [%.12g, %.12g]\n", kmin, kmax);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uth(-pi, pi), umu(0.0, 0.9);
    double worst = 0.0;
    for (int q = 0; q < n_samples; ++q) {
        const LocalPoint lp{umu(rng) * dom.validity_radius(), uth(rng)};
        const auto x = to_cartesian(dom, lp);
        const auto back = from_cartesian(dom, x);
        const auto x2 = to_cartesian(dom, back);
        worst = std::max(worst, std::hypot(x[0] - x2[0], x[1] - x2[1]));
    }
    std::printf("round-trip worst error over %d seeded points: %.3e\n", n_samples, worst);
    const bool ok = worst < 1e-9 * 2.0 * dom.max_radius();
    std::printf("%s\n", ok ? "PASS" : "FAIL");
    return ok ? exit_ok : exit_solver;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"boundary-layer transport laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_dir, domain_str;
    std::vector<double> eps_flags;
    int workers = 0;
    app.add_option("--config", config_path, "JSON config file")->capture_default_str();
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--eps", eps_flags, "epsilon values (overrides config)");
    app.add_option("--domain", domain_str, "domain JSON, e.g. {\"kind\":\"circle\",\"a\":1.0}");
    app.add_option("--workers", workers, "worker threads");

    // geom check
    auto* geom = app.add_subcommand("geom", "geometry utilities");
    auto* geom_check = geom->add_subcommand("check", "validate a domain spec");
    std::uint64_t seed = 1;
    int n_samples = 1000;
    geom_check->add_option("--seed", seed, "sampling seed");
    geom_check->add_option("--samples", n_samples, "round-trip sample count");

    // milne solve / sweep
    auto* milne = app.add_subcommand("milne", "Milne problem solves");
    auto* milne_solve_cmd = milne->add_subcommand("solve", "single station solve");
    auto* milne_sweep_cmd = milne->add_subcommand("sweep", "epsilon sweep at a station");
    double m_eps = 0.1, m_tau = 0.0, m_rk = 0.0, m_param = 1.0, m_tol = 1e-9;
    int m_neta = 0, m_nphi = 128;
    bool m_classical = false, m_diffusive = false;
    std::string m_h = "sin";
    for (auto* c : {milne_solve_cmd, milne_sweep_cmd}) {
        c->add_option("--tau", m_tau, "tangential station (rad)");
        c->add_option("--rk", m_rk, "radius of curvature override (else from --domain)");
        c->add_option("--h", m_h, "inflow data: zero|constant|sin|sincos|table:<csv>");
        c->add_option("--h-param", m_param, "amplitude for the builtin data");
        c->add_option("--n-eta", m_neta, "eta intervals (0 = default)");
        c->add_option("--n-phi", m_nphi, "phi nodes");
        c->add_option("--tol", m_tol, "fixed-point tolerance");
        c->add_flag("--classical", m_classical, "classical mode (F = 0)");
    }
    milne_solve_cmd->add_option("--one-eps", m_eps, "epsilon");
    milne_solve_cmd->add_flag("--diffusive", m_diffusive, "diffusive boundary (checks compatibility)");

    // transport solve
    auto* transport = app.add_subcommand("transport", "reference transport solver");
    auto* transport_solve_cmd = transport->add_subcommand("solve", "single solve");
    double t_eps = 0.1;
    bool t_full = false;
    transport_solve_cmd->add_option("--one-eps", t_eps, "epsilon");
    transport_solve_cmd->add_flag("--full-field", t_full, "emit the full phase-space CSV");

    // studies
    auto* limit = app.add_subcommand("limit", "diffusive-limit study");
    auto* limit_run = limit->add_subcommand("run", "run the study");
    auto* regularity = app.add_subcommand("regularity", "derivative regularity study");
    auto* regularity_run = regularity->add_subcommand("run", "run the study");
    auto* classical = app.add_subcommand("classical", "corrected vs classical comparison");
    auto* classical_compare = classical->add_subcommand("compare", "run the comparison");

    CLI11_PARSE(app, argc, argv);

    try {
        if (geom_check->parsed()) {
            const std::string d = domain_str.empty() ? "{\"kind\":\"circle\",\"a\":1.0}" : domain_str;
            return cmd_geom_check(d, seed, n_samples);
        }

        if (milne_solve_cmd->parsed() || milne_sweep_cmd->parsed()) {
            DomainSpec dom = DomainSpec::circle(1.0);
            double rk = m_rk, rkp = 0.0;
            if (!domain_str.empty()) {
                dom = domain_from_json(json::parse(domain_str));
                const double th = theta_of_tau(dom, m_tau);
                rk = dom.radius_of_curvature(th);
                rkp = r_kappa_prime_tau(dom, th);
            } else if (rk <= 0.0) {
                rk = 1.0;
            }
            const std::string out = out_dir.empty() ? "." : out_dir;
            std::filesystem::create_directories(out);
            PhiFunc h = make_phi_data(m_h, m_param);

            auto run_one = [&](double eps) {
                MilneConfig mc;
                mc.eps = eps;
                mc.tau = m_tau;
                mc.r_kappa = rk;
                mc.r_kappa_prime = rkp;
                mc.n_eta = m_neta;
                mc.n_phi = m_nphi;
                mc.tol = m_tol;
                mc.classical = m_classical;
                return m_diffusive ? solve_diffusive(mc, h) : solve_inflow(mc, h);
            };

            if (milne_solve_cmd->parsed()) {
                MilneField f = run_one(m_eps);
                write_milne_csv(f, out + "/milne.csv");
                write_text(out + "/summary.json", milne_summary(f).dump(2) + "\n");
                std::printf("f_L = %.12g, iterations = %d, residual = %.3e\n", f.f_limit,
                            f.iterations, f.residual);
                return f.converged ? exit_ok : exit_solver;
            }
            // sweep
            std::vector<double> eps_list =
                eps_flags.empty() ? std::vector<double>{0.1, 0.05, 0.025, 0.0125} : eps_flags;
            CsvTable t({"eps", "f_L", "k_est", "decay_r2", "iterations", "residual",
                        "sup_weighted_eta", "sup_weighted_phi", "k0"});
            bool all_ok = true;
            for (double eps : eps_list) {
                MilneField f = run_one(eps);
                all_ok = all_ok && f.converged;
                const auto dr = decay_rate(f);
                MilneConfig mc = f.cfg;
                const double k0 = default_weight_rate(f);
                const auto der = weighted_derivatives(mc, f, k0);
                t.add_row({eps, f.f_limit, dr.exact_zero ? 0.0 : dr.k_est,
                           dr.exact_zero ? 1.0 : dr.r2, double(f.iterations), f.residual,
                           der.sup_weighted_eta, der.sup_weighted_phi, k0});
            }
            t.write(out + "/sweep.csv");
            std::printf("wrote %s/sweep.csv\n", out.c_str());
            return all_ok ? exit_ok : exit_solver;
        }

        if (transport_solve_cmd->parsed()) {
            ExperimentConfig cfg = assemble_config(config_path, domain_str, eps_flags, out_dir,
                                                   workers);
            TransportConfig tc;
            tc.eps = eps_flags.empty() ? t_eps : eps_flags[0];
            tc.domain = cfg.domain();
            tc.g = cfg.source.make();
            tc.n_dir = cfg.n_dir;
            tc.n_r = cfg.default_n_r(tc.eps);
            tc.n_theta = cfg.n_theta;
            tc.tol = cfg.transport_tol;
            tc.max_iter = cfg.transport_max_iter;
            tc.anderson_window = cfg.anderson_window;
            tc.workers = cfg.workers;
            const TransportField f = transport_solve(tc);
            std::filesystem::create_directories(cfg.out_dir);
            if (t_full) write_transport_csv(f, cfg.out_dir + "/field.csv");
            write_ubar_csv(f, cfg.out_dir + "/ubar.csv");
            write_text(cfg.out_dir + "/summary.json", transport_summary(f).dump(2) + "\n");
            std::printf("iterations = %d, residual = %.3e, mass defect = %.3e\n", f.iterations,
                        f.residual, f.mass);
            return f.converged ? exit_ok : exit_solver;
        }

        if (limit_run->parsed()) {
            ExperimentConfig cfg = assemble_config(config_path, domain_str, eps_flags, out_dir,
                                                   workers);
            cfg.experiment = "limit";
            const auto rep = run_limit_study(cfg);
            emit(rep, cfg);
            if (rep.fit_valid)
                std::printf("fitted slope %.4f (R2 %.4f) over %zu eps values -> %s\n",
                            rep.fit.slope, rep.fit.r2, rep.rows.size(), cfg.out_dir.c_str());
            if (rep.partial) {
                std::fprintf(stderr, "partial failure: %s\n", rep.failure.c_str());
                return exit_solver;
            }
            for (const auto& r : rep.rows)
                if (!r.converged) return exit_solver;
            return exit_ok;
        }

        if (regularity_run->parsed()) {
            ExperimentConfig cfg = assemble_config(config_path, domain_str, eps_flags, out_dir,
                                                   workers);
            cfg.experiment = "regularity";
            const auto rep = run_regularity_study(cfg);
            emit(rep, cfg);
            std::printf("grazing contrast: classical x%.2f, corrected x%.2f -> %s\n",
                        rep.classical_growth, rep.corrected_growth, cfg.out_dir.c_str());
            return rep.partial ? exit_solver : exit_ok;
        }

        if (classical_compare->parsed()) {
            ExperimentConfig cfg = assemble_config(config_path, domain_str, eps_flags, out_dir,
                                                   workers);
            cfg.experiment = "classical-compare";
            const auto rep = run_classical_comparison(cfg);
            emit(rep, cfg);
            std::printf("wrote %s\n", cfg.out_dir.c_str());
            return rep.partial ? exit_solver : exit_ok;
        }
    } catch (const CompatibilityError& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return exit_solver;
    } catch (const MilneError& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return exit_solver;
    } catch (const std::invalid_argument& ex) {
        std::fprintf(stderr, "config error: %s\n", ex.what());
        return exit_config;
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return exit_solver;
    }
    return exit_config;
}
