#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "milnelab/elliptic.hpp"
#include "milnelab/geometry.hpp"
#include "milnelab/milne.hpp"
#include "milnelab/parallel.hpp"
#include "milnelab/transport.hpp"

namespace milnelab {

/// Smooth cut-off: 1 on [0, 1/2], 0 on [3/4, inf), bridged by the standard
/// C-infinity bump quotient in between.
inline double cutoff(double y) {
    if (y <= 0.5) return 1.0;
    if (y >= 0.75) return 0.0;
    const double t = (0.75 - y) / 0.25; // in (0,1), 1 at y=1/2
    const double e1 = std::exp(-1.0 / t);
    const double e2 = std::exp(-1.0 / (1.0 - t));
    return e1 / (e1 + e2);
}

/// First-order layer in-flow data at the boundary station tau:
/// g1 = w . grad u0 - P[w . grad u0] + g, with w = (-sin(phi-tau), -cos(phi-tau))
/// and P the outgoing-flux moment.
struct LayerBC {
    std::function<double(double tau, double phi)> g1;
    std::function<double(double tau)> reflux; // P[w . grad u0](tau)
};

inline LayerBC layer_bc(const DomainSpec& dom, const HarmonicSolution& sol,
                        const BoundarySource& g) {
    auto w_grad = [&dom, &sol](double tau, double phi) {
        const double th = theta_of_tau(dom, tau);
        const auto fr = frame(dom, th);
        const auto gr = sol.gradient(fr.point);
        const double xi = phi - tau;
        return -std::sin(xi) * gr[0] - std::cos(xi) * gr[1];
    };
    auto reflux = [w_grad](double tau) {
        // P[u] = -1/2 int_{sin phi < 0} u sin phi dphi
        return -0.5 * integrate([&](double p) { return w_grad(tau, p) * std::sin(p); },
                                -pi, 0.0, 1e-12);
    };
    LayerBC bc;
    bc.reflux = reflux;
    bc.g1 = [w_grad, reflux, &g](double tau, double phi) {
        double v = w_grad(tau, phi) - reflux(tau);
        if (g) v += g(tau, phi);
        return v;
    };
    return bc;
}

/// Boundary layer family: one diffusive Milne solve per tangential node, with
/// the far-field value subtracted and the cut-off applied on evaluation.
struct LayerFamily {
    double eps = 0.0;
    std::vector<double> tau;              // n_tau uniform stations
    std::vector<MilneField> fields;       // solved per station
    std::vector<double> f_limit;          // f_L(tau)
    std::vector<double> compat_defect;    // per-station defect before projection
    std::vector<double> decay_k;          // fitted decay rate per station
    std::vector<double> decay_r2;

    bool empty() const { return fields.empty(); }

    /// psi0(eps^{1/2} eta) (f1 - f1L) interpolated: bilinear in (eta, phi),
    /// periodic cubic across the tangential stations.
    double value(double eta, double tau_q, double phi) const {
        const double psi = cutoff(std::sqrt(eps) * eta);
        if (psi == 0.0) return 0.0;
        const std::size_t n = tau.size();
        std::vector<double> vals(n);
        for (std::size_t t = 0; t < n; ++t)
            vals[t] = fields[t].value(eta, phi) - f_limit[t];
        if (n >= 4) {
            PeriodicCubic spline(tau[0], tau[1] - tau[0], vals);
            return psi * spline(tau_q);
        }
        return psi * vals[0];
    }
};

struct LayerBuildOptions {
    int n_tau = 16;
    int n_eta = 0;   // 0 -> Milne default
    int n_phi = 128;
    double tol = 1e-9;
    double tol_compat = 1e-6;
    int workers = 1;
    bool classical = false;
};

/// Solve the first-order layer at every tangential station. The zeroth layer
/// vanishes under the diffusive boundary condition, so the Milne source is
/// zero and the in-flow data is g1. Any residual compatibility defect (it is
/// zero analytically through the Neumann condition on u0) is removed by a
/// constant shift, which leaves f - f_L unchanged; its size is recorded and
/// asserted small by the tests.
inline LayerFamily build_layer(const DomainSpec& dom, double eps, const HarmonicSolution& sol,
                               const BoundarySource& g, const LayerBuildOptions& opt = {}) {
    LayerFamily fam;
    fam.eps = eps;
    fam.tau.resize(opt.n_tau);
    fam.fields.resize(opt.n_tau);
    fam.f_limit.resize(opt.n_tau);
    fam.compat_defect.resize(opt.n_tau);
    fam.decay_k.resize(opt.n_tau);
    fam.decay_r2.resize(opt.n_tau);
    const auto bc = layer_bc(dom, sol, g);

    std::vector<std::string> failures(opt.n_tau);
    parallel_for(opt.n_tau, opt.workers, [&](std::size_t t) {
        const double tau_t = -pi + 2.0 * pi * double(t) / opt.n_tau;
        const double th = theta_of_tau(dom, tau_t);
        MilneConfig cfg;
        cfg.eps = eps;
        cfg.tau = tau_t;
        cfg.r_kappa = dom.radius_of_curvature(th);
        cfg.r_kappa_prime = r_kappa_prime_tau(dom, th);
        cfg.n_eta = opt.n_eta;
        cfg.n_phi = opt.n_phi;
        cfg.tol = opt.tol;
        cfg.classical = opt.classical;

        PhiFunc h = [&bc, tau_t](double p) { return bc.g1(tau_t, p); };
        const double defect = compatibility_defect(cfg, h);
        if (std::abs(defect) > opt.tol_compat) {
            failures[t] = "layer station compatibility defect " + std::to_string(defect);
            return;
        }
        // constant shift makes the discrete defect exactly zero; f - f_L is
        // invariant under it
        PhiFunc h_proj = [&bc, tau_t, defect](double p) {
            return bc.g1(tau_t, p) - 0.5 * defect;
        };
        MilneField f = solve_inflow(cfg, h_proj);
        f.p_wall = wall_outflux(f);
        const auto dr = decay_rate(f);
        fam.tau[t] = tau_t;
        fam.f_limit[t] = f.f_limit;
        fam.compat_defect[t] = defect;
        fam.decay_k[t] = dr.exact_zero ? 0.0 : dr.k_est;
        fam.decay_r2[t] = dr.exact_zero ? 1.0 : dr.r2;
        fam.fields[t] = std::move(f);
    });
    for (const auto& msg : failures)
        if (!msg.empty()) throw MilneError(msg);
    return fam;
}

/// Matched asymptotic expansion Q + QB: interior terms u0 + eps U1 + eps^2 U2
/// plus the cut-off first-order boundary layer.
struct ExpansionSet {
    DomainSpec domain = DomainSpec::circle(1.0);
    double eps = 0.0;
    HarmonicSolution interior;
    LayerFamily layer;

    /// Interior part Q only.
    double interior_value(const Point2& x, const Point2& w) const {
        const auto t = interior_terms(interior, x, w);
        return t.u0 + eps * t.u1 + eps * eps * t.u2;
    }

    /// Full expansion Q + QB at a phase point. Outside the cut-off support
    /// this is bitwise the interior value.
    double value(const Point2& x, const Point2& w) const {
        double v = interior_value(x, w);
        if (!layer.empty()) {
            const double support = 0.75 * std::sqrt(eps); // mu beyond this: psi0 = 0
            const double rho = std::hypot(x[0], x[1]);
            const double rb = domain.r(rho > 0.0 ? std::atan2(x[1], x[0]) : 0.0);
            // cheap reject on the radial gap before the exact local projection
            if (rb - rho < 1.5 * support && rb - rho < 0.9 * domain.validity_radius()) {
                const auto lp = from_cartesian(domain, x);
                if (lp.mu < support && lp.mu < domain.validity_radius()) {
                    const double tau_q = tau_of_theta(domain, lp.theta);
                    const double phi = wrap_pi(std::atan2(-w[0], -w[1]) + tau_q);
                    v += eps * layer.value(lp.mu / eps, tau_q, phi);
                }
            }
        }
        return v;
    }
};

struct RemainderNorms {
    double sup_R = 0.0;       // sup |u - Q - QB|
    double l2_R = 0.0;        // L2 norm of the remainder
    double sup_u_minus_u0 = 0.0;
    double l2_u_minus_u0 = 0.0;
    double sup_correction = 0.0; // sup |eps U1 + eps^2 U2 + eps UB1|
};

/// Norms of the remainder and of the headline difference u - u0 over the
/// transport solver's node set.
inline RemainderNorms remainder_norms(const TransportField& u, const ExpansionSet& exp,
                                      int workers = 1) {
    const std::size_t rows = u.n_rows(), cols = u.n_cols(), ords = u.n_ord();
    RemainderNorms out;
    std::vector<double> supR(rows, 0.0), supU(rows, 0.0), supC(rows, 0.0), l2R(rows, 0.0),
        l2U(rows, 0.0);
    const double dpsi = 2.0 * pi / double(ords);
    parallel_for(rows, workers, [&](std::size_t i) {
        for (std::size_t j = 0; j < cols; ++j) {
            const std::size_t nid = u.node(i, j);
            const Point2 x = {u.node_x[nid], u.node_y[nid]};
            const double u0 = exp.interior.value(x);
            for (std::size_t k = 0; k < ords; ++k) {
                const Point2 w = {std::cos(u.psi[k]), std::sin(u.psi[k])};
                const double uv = u.u[nid * ords + k];
                const double q = exp.value(x, w);
                const double R = uv - q;
                const double dU = uv - u0;
                supR[i] = std::max(supR[i], std::abs(R));
                supU[i] = std::max(supU[i], std::abs(dU));
                supC[i] = std::max(supC[i], std::abs(q - u0));
                l2R[i] += R * R * u.vol_w[nid] * dpsi;
                l2U[i] += dU * dU * u.vol_w[nid] * dpsi;
            }
        }
    });
    double l2r = 0.0, l2u = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        out.sup_R = std::max(out.sup_R, supR[i]);
        out.sup_u_minus_u0 = std::max(out.sup_u_minus_u0, supU[i]);
        out.sup_correction = std::max(out.sup_correction, supC[i]);
        l2r += l2R[i];
        l2u += l2U[i];
    }
    out.l2_R = std::sqrt(l2r);
    out.l2_u_minus_u0 = std::sqrt(l2u);
    return out;
}

/// Boundary defect R - P[R] on the incoming set, evaluated from the expansion
/// and the boundary data alone: the discrete solver satisfies its wall
/// condition exactly, so on Gamma^- the remainder defect reduces to
/// eps g - (Q + QB - P[Q + QB]). By construction this is O(eps^2).
inline double boundary_defect_sup(const ExpansionSet& exp, const BoundarySource& g,
                                  int n_tau = 64, int n_phi = 96) {
    double sup = 0.0;
    for (int t = 0; t < n_tau; ++t) {
        const double tau = -pi + 2.0 * pi * t / n_tau;
        const double th = theta_of_tau(exp.domain, tau);
        const auto fr = frame(exp.domain, th);
        // angular profile of Q + QB at the wall
        auto qval = [&](double phi) {
            const double xi = phi - tau;
            const Point2 w = {-std::sin(xi), -std::cos(xi)};
            return exp.value(fr.point, w);
        };
        // P over outgoing directions (sin phi < 0)
        const double pq =
            -0.5 * integrate([&](double p) { return qval(p) * std::sin(p); }, -pi, 0.0, 1e-11);
        for (int q = 0; q < n_phi; ++q) {
            const double phi = (q + 0.5) * pi / n_phi; // incoming half
            const double defect = exp.eps * (g ? g(tau, phi) : 0.0) - (qval(phi) - pq);
            sup = std::max(sup, std::abs(defect));
        }
    }
    return sup;
}

} // namespace milnelab
