#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <string>

#include <json.hpp>

#include "milnelab/expansion.hpp"
#include "milnelab/milne.hpp"
#include "milnelab/transport.hpp"

namespace milnelab {

using nlohmann::json;

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << text;
}

inline json domain_to_json(const DomainSpec& dom) {
    json j;
    switch (dom.kind()) {
    case DomainSpec::Kind::circle:
        j = {{"kind", "circle"}, {"a", dom.param_a()}};
        break;
    case DomainSpec::Kind::ellipse:
        j = {{"kind", "ellipse"}, {"a", dom.param_a()}, {"b", dom.param_b()}};
        break;
    case DomainSpec::Kind::fourier:
        j["kind"] = "fourier";
        j["c0"] = dom.r(0.0); // representative only; full spec comes from the config
        break;
    }
    return j;
}

inline DomainSpec domain_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "circle") return DomainSpec::circle(j.at("a").get<double>());
    if (kind == "ellipse")
        return DomainSpec::ellipse(j.at("a").get<double>(), j.at("b").get<double>());
    if (kind == "fourier") {
        std::vector<double> c = j.value("cos", std::vector<double>{});
        std::vector<double> s = j.value("sin", std::vector<double>{});
        return DomainSpec::fourier(j.at("c0").get<double>(), c, s);
    }
    throw std::invalid_argument("unknown domain kind: " + kind);
}

/// MilneField emission: CSV field (eta, phi, f) plus a JSON summary.
inline void write_milne_csv(const MilneField& f, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "eta,phi,f\n" << std::setprecision(17);
    for (std::size_t i = 0; i < f.rows(); ++i)
        for (std::size_t j = 0; j < f.cols(); ++j)
            out << f.eta[i] << "," << f.phi[j] << "," << f.at(i, j) << "\n";
}

inline json milne_summary(const MilneField& f) {
    const auto dr = decay_rate(f);
    json j;
    j["eps"] = f.cfg.eps;
    j["tau"] = f.cfg.tau;
    j["r_kappa"] = f.cfg.r_kappa;
    j["mode"] = f.cfg.classical ? "classical" : "corrected";
    j["length"] = f.eta.back();
    j["length_overridden"] = f.cfg.length_overridden();
    j["n_eta"] = f.rows() - 1;
    j["n_phi"] = f.cols();
    j["f_L"] = f.f_limit;
    j["iterations"] = f.iterations;
    j["residual"] = f.residual;
    j["converged"] = f.converged;
    j["p_wall"] = f.p_wall;
    j["decay_exact_zero"] = dr.exact_zero;
    j["decay_k_est"] = dr.k_est;
    j["decay_r2"] = dr.r2;
    if (!f.residual_history.empty()) {
        json hist = json::array();
        for (double r : f.residual_history) hist.push_back(r);
        j["residual_history"] = hist;
    }
    return j;
}

/// TransportField emission: full phase-space CSV (x1, x2, ordinate angle, u)
/// plus a JSON summary.
inline void write_transport_csv(const TransportField& f, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "x1,x2,psi,u\n" << std::setprecision(17);
    for (std::size_t i = 0; i < f.n_rows(); ++i)
        for (std::size_t j = 0; j < f.n_cols(); ++j) {
            const std::size_t nid = f.node(i, j);
            for (std::size_t k = 0; k < f.n_ord(); ++k)
                out << f.node_x[nid] << "," << f.node_y[nid] << "," << f.psi[k] << ","
                    << f.u[nid * f.n_ord() + k] << "\n";
        }
}

inline void write_ubar_csv(const TransportField& f, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "x1,x2,ubar\n" << std::setprecision(17);
    for (std::size_t i = 0; i < f.n_rows(); ++i)
        for (std::size_t j = 0; j < f.n_cols(); ++j) {
            const std::size_t nid = f.node(i, j);
            out << f.node_x[nid] << "," << f.node_y[nid] << "," << f.ubar[nid] << "\n";
        }
}

inline json transport_summary(const TransportField& f) {
    json j;
    j["eps"] = f.eps;
    j["n_r"] = f.n_rows() - 1;
    j["n_theta"] = f.n_cols();
    j["n_dir"] = f.n_ord();
    j["iterations"] = f.iterations;
    j["residual"] = f.residual;
    j["converged"] = f.converged;
    j["mass_defect"] = f.mass;
    j["measure"] = f.measure;
    if (!f.residual_history.empty()) {
        json hist = json::array();
        for (double r : f.residual_history) hist.push_back(r);
        j["residual_history"] = hist;
    }
    return j;
}

/// Interior solution as JSON (complex coefficients).
inline json harmonic_to_json(const HarmonicSolution& sol) {
    json j;
    j["scale"] = sol.scale();
    j["c0"] = sol.constant_term();
    json re = json::array(), im = json::array();
    for (const auto& c : sol.coefficients()) {
        re.push_back(c.real());
        im.push_back(c.imag());
    }
    j["coef_re"] = re;
    j["coef_im"] = im;
    j["neumann_residual"] = sol.neumann_residual;
    j["projected_flux"] = sol.projected_flux;
    return j;
}

inline HarmonicSolution harmonic_from_json(const json& j) {
    std::vector<std::complex<double>> coef;
    const auto& re = j.at("coef_re");
    const auto& im = j.at("coef_im");
    for (std::size_t k = 0; k < re.size(); ++k)
        coef.emplace_back(re[k].get<double>(), im[k].get<double>());
    HarmonicSolution sol(std::move(coef), j.at("c0").get<double>(), j.at("scale").get<double>());
    sol.neumann_residual = j.value("neumann_residual", 0.0);
    sol.projected_flux = j.value("projected_flux", 0.0);
    return sol;
}

/// ExpansionSet serialization: a directory with the interior JSON, one layer
/// CSV per tangential station, and a manifest.
inline void write_expansion(const ExpansionSet& exp, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_text(dir + "/interior.json", harmonic_to_json(exp.interior).dump(2) + "\n");
    json manifest;
    manifest["eps"] = exp.eps;
    manifest["domain"] = domain_to_json(exp.domain);
    manifest["cutoff"] = {{"one_until", 0.5}, {"zero_from", 0.75}, {"argument", "sqrt(eps)*eta"}};
    json stations = json::array();
    for (std::size_t t = 0; t < exp.layer.tau.size(); ++t) {
        char name[64];
        std::snprintf(name, sizeof(name), "layer_%03zu.csv", t);
        write_milne_csv(exp.layer.fields[t], dir + "/" + name);
        json st;
        st["tau"] = exp.layer.tau[t];
        st["file"] = name;
        st["f_L"] = exp.layer.f_limit[t];
        st["compat_defect"] = exp.layer.compat_defect[t];
        st["decay_k"] = exp.layer.decay_k[t];
        st["decay_r2"] = exp.layer.decay_r2[t];
        stations.push_back(st);
    }
    manifest["stations"] = stations;
    if (!exp.layer.fields.empty()) {
        manifest["milne_grid"] = {{"n_eta", exp.layer.fields[0].rows() - 1},
                                  {"n_phi", exp.layer.fields[0].cols()},
                                  {"length", exp.layer.fields[0].eta.back()}};
    }
    write_text(dir + "/manifest.json", manifest.dump(2) + "\n");
}

} // namespace milnelab
