#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "milnelab/numerics.hpp"

namespace milnelab {

using PhiFunc = std::function<double(double phi)>;
using EtaPhiFunc = std::function<double(double eta, double phi)>;

/// Configuration of one Milne solve at a fixed tangential station tau.
/// mode "classical" switches the geometric force off (F == 0) while keeping
/// every other code path identical, so corrected/classical comparisons
/// isolate the force term exactly.
struct MilneConfig {
    double eps = 0.1;            // Knudsen number in (0,1)
    double tau = 0.0;            // tangential parameter (rad)
    double r_kappa = 1.0;        // radius of curvature at tau
    double r_kappa_prime = 0.0;  // d R_kappa / d tau
    double length = 0.0;         // 0 -> eps^{-1/2}; explicit value is recorded as override
    int n_eta = 0;               // 0 -> max(96, 8 L) intervals
    int n_phi = 128;             // staggered angular nodes
    bool classical = false;      // F == 0 when true
    double lambda = 0.0;         // penalty; 0 by default, homotopy may raise it
    double tol = 1e-9;           // fixed-point sup-residual tolerance
    int max_iter = 20000;
    double eta_stretch = 1.0;    // 1 = uniform grid; >1 clusters nodes near eta = 0

    double L() const { return length > 0.0 ? length : 1.0 / std::sqrt(eps); }
    bool length_overridden() const { return length > 0.0; }

    int eta_intervals() const {
        if (n_eta > 0) return n_eta;
        return std::max(96, int(std::ceil(8.0 * L())));
    }

    void check() const {
        if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("MilneConfig: eps not in (0,1)");
        if (!(r_kappa > 0.0)) throw std::invalid_argument("MilneConfig: r_kappa <= 0");
        if (!classical && !(r_kappa > eps * L()))
            throw std::invalid_argument("MilneConfig: eps*L >= r_kappa, local coordinates invalid");
        if (n_phi > 0 && n_phi % 2 != 0) throw std::invalid_argument("MilneConfig: n_phi must be even");
        if (!(tol > 0.0)) throw std::invalid_argument("MilneConfig: tol <= 0");
    }
};

/// Potential V with V(0)=0 and dV/deta = -F. Closed form
/// V = ln(R_kappa / (R_kappa - eps eta)); identically zero in classical mode.
inline double potential(const MilneConfig& cfg, double eta) {
    if (cfg.classical) return 0.0;
    const double rest = cfg.r_kappa - cfg.eps * eta;
    if (!(rest > 0.0)) throw std::domain_error("potential: eps*eta >= r_kappa");
    return std::log(cfg.r_kappa / rest);
}

/// exp(-V(eta)) without the log/exp round trip.
inline double exp_neg_potential(const MilneConfig& cfg, double eta) {
    if (cfg.classical) return 1.0;
    const double rest = cfg.r_kappa - cfg.eps * eta;
    if (!(rest > 0.0)) throw std::domain_error("potential: eps*eta >= r_kappa");
    return rest / cfg.r_kappa;
}

/// Kinetic distance to the grazing set, zeta = sqrt(1 - (e^{-V} cos phi)^2).
inline double kinetic_distance(const MilneConfig& cfg, double eta, double phi) {
    const double e = exp_neg_potential(cfg, eta) * std::cos(phi);
    return std::sqrt(std::max(0.0, 1.0 - e * e));
}

/// Geometric force F = -eps / (R_kappa - eps eta); 0 in classical mode.
inline double milne_force(const MilneConfig& cfg, double eta) {
    if (cfg.classical) return 0.0;
    return -cfg.eps / (cfg.r_kappa - cfg.eps * eta);
}

// ---------------------------------------------------------------------------
// Characteristic traces
// ---------------------------------------------------------------------------

/// One characteristic of the corrected transport operator through (eta, phi).
/// The conserved energy E = e^{-V} cos phi classifies the trace:
///   I   : sin phi > 0, runs straight back to the wall,
///   II  : sin phi < 0 and |E| <= e^{-V(L)}, reflects at eta = L,
///   III : sin phi < 0 and |E| >  e^{-V(L)}, turns at eta_plus where the
///         trajectory grazes (sin phi' = 0).
struct CharacteristicTrace {
    enum class Region { I, II, III };

    Region region;
    double eta, phi;
    double E;
    double zeta;
    std::optional<double> eta_plus; // Region III turning point
    bool degenerate = false;        // grazing start

    // closed-form parameters; classical mode keeps sin phi' constant
    bool classical;
    double eps, r_kappa, L;

    /// phi'(eta') on the positive branch, in [0, pi].
    double phi_at(double etap) const {
        double c;
        if (classical) {
            c = E;
        } else {
            c = E * r_kappa / (r_kappa - eps * etap);
        }
        return std::acos(std::clamp(c, -1.0, 1.0));
    }

    double sin_phi_at(double etap) const {
        if (classical) return std::sqrt(std::max(0.0, 1.0 - E * E));
        const double a = r_kappa - eps * etap;
        const double b = r_kappa * std::abs(E);
        return std::sqrt(std::max(0.0, a * a - b * b)) / a;
    }

    /// G(t,s) = int_s^t d xi / sin phi'(xi), in closed form. The turning-point
    /// singularity is integrable and handled exactly.
    double attenuation_exponent(double t, double s) const {
        if (classical) {
            const double sp = std::sqrt(std::max(0.0, 1.0 - E * E));
            if (sp == 0.0) return std::numeric_limits<double>::infinity();
            return (t - s) / sp;
        }
        const double b = r_kappa * std::abs(E);
        auto cap = [&](double y) {
            const double a = r_kappa - eps * y;
            return std::sqrt(std::max(0.0, a * a - b * b));
        };
        return (cap(s) - cap(t)) / eps;
    }

    // uniformly sampled diagnostics along the primary branch
    std::vector<double> sample_eta;
    std::vector<double> sample_phi;
    std::vector<double> sample_G; // G(top, sample_eta[k]) with top = eta / L / eta_plus
};

inline CharacteristicTrace trace(const MilneConfig& cfg, double eta, double phi) {
    cfg.check();
    CharacteristicTrace tr;
    tr.eta = eta;
    tr.phi = phi;
    tr.classical = cfg.classical;
    tr.eps = cfg.eps;
    tr.r_kappa = cfg.r_kappa;
    tr.L = cfg.L();
    tr.E = exp_neg_potential(cfg, eta) * std::cos(phi);
    tr.zeta = std::sqrt(std::max(0.0, 1.0 - tr.E * tr.E));

    const double emv_L = exp_neg_potential(cfg, tr.L);
    const double s = std::sin(phi);
    if (s > 0.0) {
        tr.region = CharacteristicTrace::Region::I;
    } else if (std::abs(tr.E) <= emv_L || cfg.classical) {
        tr.region = CharacteristicTrace::Region::II;
    } else {
        tr.region = CharacteristicTrace::Region::III;
        tr.eta_plus = cfg.r_kappa * (1.0 - std::abs(tr.E)) / cfg.eps;
    }
    if (s == 0.0) {
        tr.degenerate = true;
        if (tr.region == CharacteristicTrace::Region::III) tr.eta_plus = eta;
    }

    double top = eta;
    if (tr.region == CharacteristicTrace::Region::II) top = tr.L;
    if (tr.region == CharacteristicTrace::Region::III) top = *tr.eta_plus;
    const int n_samp = 33;
    for (int k = 0; k < n_samp; ++k) {
        const double ep = top * double(k) / double(n_samp - 1);
        tr.sample_eta.push_back(ep);
        tr.sample_phi.push_back(tr.phi_at(ep));
        tr.sample_G.push_back(tr.attenuation_exponent(top, ep));
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Discrete Milne field
// ---------------------------------------------------------------------------

struct MilneField {
    MilneConfig cfg;
    std::vector<double> eta;  // m nodes, eta[0]=0, eta[m-1]=L
    std::vector<double> phi;  // n staggered nodes
    std::vector<double> f;    // m*n row-major
    std::vector<double> fbar; // m
    double f_limit = 0.0;     // f_L
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
    double p_wall = 0.0;      // P[f](0,tau), filled by solve_diffusive
    std::vector<double> residual_history;
    std::vector<std::string> warnings;

    std::size_t rows() const { return eta.size(); }
    std::size_t cols() const { return phi.size(); }
    double at(std::size_t i, std::size_t j) const { return f[i * cols() + j]; }

    /// Bilinear interpolation, periodic in phi.
    double value(double e, double p) const {
        const std::size_t m = rows(), n = cols();
        e = std::clamp(e, eta.front(), eta.back());
        std::size_t i = std::upper_bound(eta.begin(), eta.end(), e) - eta.begin();
        i = std::clamp<std::size_t>(i, 1, m - 1) - 1;
        const double te = (e - eta[i]) / (eta[i + 1] - eta[i]);

        const double dphi = 2.0 * pi / double(n);
        double s = (wrap_pi(p) - phi[0]) / dphi;
        double jf = std::floor(s);
        const double tp = s - jf;
        const std::size_t j0 = std::size_t((long(jf) % long(n) + long(n)) % long(n));
        const std::size_t j1 = (j0 + 1) % n;

        const double a = at(i, j0) * (1.0 - tp) + at(i, j1) * tp;
        const double b = at(i + 1, j0) * (1.0 - tp) + at(i + 1, j1) * tp;
        return a * (1.0 - te) + b * te;
    }
};

// ---------------------------------------------------------------------------
// Mild-formulation operator
// ---------------------------------------------------------------------------

/// Precomputed characteristic quadrature for every grid node. The transported
/// integrals are Stieltjes sums in the attenuation weight W = e^{-G}; the
/// midpoint-in-W rule telescopes, so constants are exact fixed points of the
/// discrete operator.
class MilneOperator {
public:
    explicit MilneOperator(MilneConfig cfg) : cfg_(cfg) {
        cfg_.check();
        build_grids();
        build_paths();
    }

    const MilneConfig& config() const { return cfg_; }
    const std::vector<double>& eta() const { return eta_; }
    const std::vector<double>& phi() const { return phi_; }
    double phi_weight() const { return 2.0 * pi / double(phi_.size()); }

    /// Freeze boundary data and source: evaluates h at the trace feet and S at
    /// every quadrature point. Must be called before apply().
    void set_data(const PhiFunc& h, const EtaPhiFunc& S) {
        const std::size_t nn = eta_.size() * phi_.size();
        node_const_.assign(nn, 0.0);
        for (std::size_t node = 0; node < nn; ++node) {
            double c = 0.0;
            if (k_coeff_[node] > 1e-300) c += k_coeff_[node] * h(k_angle_[node]);
            if (S) {
                for (std::size_t q = qp_begin_[node]; q < qp_begin_[node + 1]; ++q)
                    c += qp_weight_[q] * S(qp_eta_[q], qp_phi_[q]);
            }
            node_const_[node] = c;
        }
        has_data_ = true;
    }

    /// One mild sweep: f = K[h] + T[S + interp(fbar)].
    void apply(const std::vector<double>& fbar, std::vector<double>& f_out) const {
        if (!has_data_) throw std::logic_error("MilneOperator::apply before set_data");
        if (fbar.size() != eta_.size()) throw std::invalid_argument("apply: fbar size");
        PchipSpline spline(eta_, fbar);
        const std::size_t nn = node_const_.size();
        f_out.resize(nn);
        for (std::size_t node = 0; node < nn; ++node) {
            double acc = node_const_[node];
            for (std::size_t q = qp_begin_[node]; q < qp_begin_[node + 1]; ++q)
                acc += qp_weight_[q] * spline.eval_at(qp_cell_[q], qp_u_[q]);
            f_out[node] = acc;
        }
    }

    void average(const std::vector<double>& f, std::vector<double>& fbar) const {
        const std::size_t m = eta_.size(), n = phi_.size();
        fbar.resize(m);
        const double w = 1.0 / double(n);
        for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += f[i * n + j];
            fbar[i] = s * w;
        }
    }

    /// Total mass K + T[1] of the discrete mild formulas; 1 up to rounding.
    double mass(std::size_t node) const {
        double m = k_coeff_[node];
        for (std::size_t q = qp_begin_[node]; q < qp_begin_[node + 1]; ++q)
            m += qp_weight_[q];
        return m;
    }

private:
    struct PathPoint {
        double etap;
        double phip;   // signed angle; negative on the reflected branch
        double weight; // Stieltjes mass carried by this point
    };

    void build_grids() {
        const double L = cfg_.L();
        const int m = cfg_.eta_intervals();
        eta_.resize(m + 1);
        for (int i = 0; i <= m; ++i) {
            const double s = double(i) / double(m);
            eta_[i] = L * std::pow(s, cfg_.eta_stretch);
        }
        const int n = cfg_.n_phi;
        phi_.resize(n);
        for (int j = 0; j < n; ++j) phi_[j] = -pi + (double(j) + 0.5) * 2.0 * pi / double(n);
    }

    double emv(double eta) const { return exp_neg_potential(cfg_, eta); }

    // sqrt(A(y)^2 - B^2) with A = R - eps y; G(t,s) = (cap(s) - cap(t))/eps
    double cap(double y, double b) const {
        const double a = cfg_.r_kappa - cfg_.eps * y;
        return std::sqrt(std::max(0.0, a * a - b * b));
    }

    void build_paths() {
        const std::size_t m = eta_.size(), n = phi_.size();
        const double L = cfg_.L();
        const double emv_L = emv(L);
        k_coeff_.assign(m * n, 0.0);
        k_angle_.assign(m * n, 0.0);
        qp_begin_.assign(m * n + 1, 0);

        std::vector<PathPoint> pts;
        std::vector<std::vector<PathPoint>> all(m * n);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t node = i * n + j;
                const double eta0 = eta_[i], phi0 = phi_[j];
                const double E = emv(eta0) * std::cos(phi0);
                pts.clear();
                if (std::sin(phi0) > 0.0) {
                    build_region1(eta0, E, pts, k_coeff_[node], k_angle_[node]);
                } else if (cfg_.classical || std::abs(E) <= emv_L) {
                    build_reflected(eta0, L, E, pts, k_coeff_[node], k_angle_[node]);
                } else {
                    const double eta_plus = cfg_.r_kappa * (1.0 - std::abs(E)) / cfg_.eps;
                    build_reflected(eta0, eta_plus, E, pts, k_coeff_[node], k_angle_[node]);
                }
                all[node] = pts;
            }
        }
        // pack
        std::size_t total = 0;
        for (std::size_t node = 0; node < m * n; ++node) total += all[node].size();
        qp_eta_.reserve(total);
        qp_phi_.reserve(total);
        qp_weight_.reserve(total);
        qp_cell_.reserve(total);
        qp_u_.reserve(total);
        for (std::size_t node = 0; node < m * n; ++node) {
            qp_begin_[node] = qp_eta_.size();
            for (const auto& p : all[node]) {
                qp_eta_.push_back(p.etap);
                qp_phi_.push_back(p.phip);
                qp_weight_.push_back(p.weight);
            }
        }
        qp_begin_[m * n] = qp_eta_.size();
        // fbar interpolation locators (knots never change)
        PchipSpline probe(eta_, std::vector<double>(eta_.size(), 0.0));
        for (double ep : qp_eta_) {
            const auto [cell, u] = probe.locate(ep);
            qp_cell_.push_back(cell);
            qp_u_.push_back(u);
        }
    }

    double phi_prime(double etap, double E) const {
        const double c = cfg_.classical ? E : E * cfg_.r_kappa / (cfg_.r_kappa - cfg_.eps * etap);
        return std::acos(std::clamp(c, -1.0, 1.0));
    }

    double attenuation(double t, double s, double E) const {
        if (cfg_.classical) {
            const double sp = std::sqrt(std::max(1e-300, 1.0 - E * E));
            return (t - s) / sp;
        }
        const double b = cfg_.r_kappa * std::abs(E);
        return (cap(s, b) - cap(t, b)) / cfg_.eps;
    }

    /// Subdivide [lo, hi] so that the weight function W never jumps more than
    /// dw_max across a segment and segments never exceed one grid cell, then
    /// emit midpoint-in-W masses. W must be monotone on [lo, hi].
    void emit_segments(double lo, double hi, const std::function<double(double)>& W,
                       double branch_sign, double E, double scale,
                       std::vector<PathPoint>& out) const {
        if (hi <= lo || scale < 1e-300) return;
        constexpr double dw_max = 0.02;
        const double floor_len = 1e-9 * cfg_.L();

        // base breakpoints at grid nodes inside (lo, hi)
        std::vector<double> brk;
        brk.push_back(lo);
        for (double e : eta_)
            if (e > lo + floor_len && e < hi - floor_len) brk.push_back(e);
        brk.push_back(hi);

        std::vector<std::pair<double, double>> stack; // (a, b) with W values cached below
        for (std::size_t k = 0; k + 1 < brk.size(); ++k) stack.push_back({brk[k], brk[k + 1]});
        std::vector<std::array<double, 4>> segs; // a, b, Wa, Wb
        while (!stack.empty()) {
            auto [a, b] = stack.back();
            stack.pop_back();
            const double wa = W(a), wb = W(b);
            if (std::abs(wb - wa) > dw_max && (b - a) > floor_len) {
                const double mid = 0.5 * (a + b);
                stack.push_back({a, mid});
                stack.push_back({mid, b});
            } else {
                segs.push_back({a, b, wa, wb});
            }
        }
        std::sort(segs.begin(), segs.end(),
                  [](const auto& s1, const auto& s2) { return s1[0] < s2[0]; });
        for (const auto& sg : segs) {
            const double mass = scale * (sg[3] - sg[2]);
            if (mass == 0.0) continue;
            const double mid = 0.5 * (sg[0] + sg[1]);
            out.push_back({mid, branch_sign * phi_prime(mid, E), mass});
        }
    }

    /// Region I: single back-integration from eta down to the wall.
    void build_region1(double eta0, double E, std::vector<PathPoint>& pts, double& kcoef,
                       double& kangle) const {
        auto W = [&](double ep) { return std::exp(-attenuation(eta0, ep, E)); };
        kcoef = W(0.0);
        kangle = phi_prime(0.0, E);
        emit_segments(0.0, eta0, W, +1.0, E, 1.0, pts);
    }

    /// Regions II and III share one reflected-path formula; the only
    /// difference is the reflection depth (L vs the turning point eta_plus).
    void build_reflected(double eta0, double top, double E, std::vector<PathPoint>& pts,
                         double& kcoef, double& kangle) const {
        const double g_top_eta = attenuation(top, eta0, E);
        const double back_scale = std::exp(-g_top_eta);
        // primary branch, wall to top, attenuated across the reflection
        auto W_a = [&](double ep) { return std::exp(-attenuation(top, ep, E)); };
        kcoef = back_scale * W_a(0.0);
        kangle = phi_prime(0.0, E);
        emit_segments(0.0, top, W_a, +1.0, E, back_scale, pts);
        // reflected branch, from the node up to the reflection point
        auto W_b = [&](double ep) { return -std::exp(-attenuation(ep, eta0, E)); };
        emit_segments(eta0, top, W_b, -1.0, E, 1.0, pts);
    }

    MilneConfig cfg_;
    std::vector<double> eta_, phi_;
    std::vector<double> k_coeff_, k_angle_;
    std::vector<std::size_t> qp_begin_;
    std::vector<double> qp_eta_, qp_phi_, qp_weight_;
    std::vector<std::size_t> qp_cell_;
    std::vector<double> qp_u_;
    std::vector<double> node_const_;
    bool has_data_ = false;
};

/// One mild-formulation sweep given the current average iterate; the public
/// face of the operator for tests and diagnostics.
inline MilneField mild_apply(const MilneConfig& cfg, const PhiFunc& h, const EtaPhiFunc& S,
                             const std::vector<double>& fbar) {
    MilneOperator op(cfg);
    op.set_data(h, S);
    MilneField out;
    out.cfg = cfg;
    out.eta = op.eta();
    out.phi = op.phi();
    op.apply(fbar, out.f);
    op.average(out.f, out.fbar);
    return out;
}

/// f_L = <sin^2 phi, f>(L) / ||sin phi||^2 with the discrete denominator so
/// constants are reproduced exactly.
inline double limit_value(const MilneField& field) {
    const std::size_t m = field.rows(), n = field.cols();
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double s2 = sqr(std::sin(field.phi[j]));
        num += s2 * field.at(m - 1, j);
        den += s2;
    }
    return num / den;
}

/// Left side of the diffusive-boundary solvability constraint,
/// int_{sin>0} h sin + int_0^L int e^{-V} S.
inline double compatibility_defect(const MilneConfig& cfg, const PhiFunc& h,
                                   const EtaPhiFunc& S = nullptr) {
    cfg.check();
    double defect = integrate([&](double p) { return h(p) * std::sin(p); }, 0.0, pi, 1e-12);
    if (S) {
        auto inner = [&](double s) {
            const double w = exp_neg_potential(cfg, s);
            return w * integrate([&](double p) { return S(s, p); }, -pi, pi, 1e-12);
        };
        defect += integrate(inner, 0.0, cfg.L(), 1e-11);
    }
    return defect;
}

/// Outgoing-flux moment of the wall row, P[f](0,tau) = -1/2 int_{sin<0} f sin.
inline double wall_outflux(const MilneField& field) {
    const std::size_t n = field.cols();
    const double w = 2.0 * pi / double(n);
    double p = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double s = std::sin(field.phi[j]);
        if (s < 0.0) p -= 0.5 * w * field.at(0, j) * s;
    }
    return p;
}

struct MilneError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CompatibilityError : MilneError {
    double defect;
    explicit CompatibilityError(double d)
        : MilneError("Milne diffusive data violates the compatibility condition, defect = " +
                     std::to_string(d)),
          defect(d) {}
};

/// Fixed-point solve of the in-flow problem f = K[h] + T[S + fbar].
/// Plain source iteration with the penalized restart homotopy: if the
/// residual stagnates for 50 sweeps, continue with lambda = 1e-2 and halve it
/// on every further restart. Convergence is always measured on the
/// unpenalized map.
inline MilneField solve_inflow(const MilneConfig& cfg, const PhiFunc& h,
                               const EtaPhiFunc& S = nullptr) {
    MilneOperator op(cfg);
    op.set_data(h, S);

    MilneField out;
    out.cfg = cfg;
    out.eta = op.eta();
    out.phi = op.phi();

    const std::size_t m = out.eta.size(), n = out.phi.size();
    if (S) {
        // the decay hypothesis on the source: compare the near-wall and
        // far-field sup levels
        double head = 0.0, tail = 0.0;
        const double L = cfg.L();
        for (int q = 0; q < 16; ++q) {
            const double p = -pi + (q + 0.5) * 2.0 * pi / 16.0;
            head = std::max({head, std::abs(S(0.05 * L, p)), std::abs(S(0.15 * L, p))});
            tail = std::max({tail, std::abs(S(0.85 * L, p)), std::abs(S(0.95 * L, p))});
        }
        if (tail > 0.5 * head && tail > 1e-12)
            out.warnings.push_back("source does not appear to decay in eta");
    }
    // inflow mean as the initial hydrodynamic guess; makes constants converge
    // in a single sweep
    double h_mean = 0.0;
    {
        int cnt = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (std::sin(out.phi[j]) > 0.0) { h_mean += h(out.phi[j]); ++cnt; }
        h_mean /= std::max(cnt, 1);
    }
    std::vector<double> fbar(m, h_mean), fbar_next(m), f(m * n);

    double lambda = cfg.lambda;
    int restarts = 0;
    bool converged = false;
    int it = 0;
    for (it = 1; it <= cfg.max_iter; ++it) {
        op.apply(fbar, f);
        if (lambda != 0.0)
            for (auto& v : f) v /= (1.0 + lambda);
        op.average(f, fbar_next);
        double res = 0.0;
        for (std::size_t i = 0; i < m; ++i) res = std::max(res, std::abs(fbar_next[i] - fbar[i]));
        out.residual_history.push_back(res);
        fbar.swap(fbar_next);
        if (res < cfg.tol && lambda == 0.0) { converged = true; break; }
        // stagnation detector
        const std::size_t hist = out.residual_history.size();
        if (hist >= 51) {
            const double now = out.residual_history[hist - 1];
            const double before = out.residual_history[hist - 51];
            if (now > 0.999 * before) {
                lambda = (restarts == 0) ? 1e-2 : lambda * 0.5;
                if (lambda < 1e-12) lambda = 0.0;
                ++restarts;
            } else if (restarts > 0 && now < cfg.tol * 10.0) {
                lambda = 0.0; // final unpenalized stretch
            }
        }
    }
    out.f = std::move(f);
    op.average(out.f, out.fbar);
    out.iterations = std::min(it, cfg.max_iter);
    out.residual = out.residual_history.empty() ? 0.0 : out.residual_history.back();
    out.converged = converged;
    out.f_limit = limit_value(out);
    return out;
}

/// Diffusive-boundary solve: checks the compatibility condition, reuses the
/// in-flow solve with f = h on sin phi > 0, and verifies the normalization
/// P[f](0,tau) = 0 it implies.
inline MilneField solve_diffusive(const MilneConfig& cfg, const PhiFunc& h,
                                  const EtaPhiFunc& S = nullptr, double tol_compat = 1e-8) {
    const double defect = compatibility_defect(cfg, h, S);
    if (std::abs(defect) > tol_compat) throw CompatibilityError(defect);
    MilneField field = solve_inflow(cfg, h, S);
    field.p_wall = wall_outflux(field);
    return field;
}

// ---------------------------------------------------------------------------
// Decay and derivative diagnostics
// ---------------------------------------------------------------------------

struct DecayRate {
    bool exact_zero = false; // field is identically f_L at the noise floor
    double k_est = 0.0;
    double r2 = 0.0;
    std::size_t n_rows = 0;
};

/// Least-squares decay rate of ln sup_phi |f - f_L| over eta in [L/10, L/2].
inline DecayRate decay_rate(const MilneField& field) {
    const std::size_t m = field.rows(), n = field.cols();
    double scale = 0.0;
    for (double v : field.f) scale = std::max(scale, std::abs(v));
    scale = std::max(scale, std::abs(field.f_limit));

    const double L = field.eta.back();
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < m; ++i) {
        if (field.eta[i] < L / 10.0 || field.eta[i] > L / 2.0) continue;
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            row = std::max(row, std::abs(field.at(i, j) - field.f_limit));
        if (row > 1e-13 * std::max(scale, 1e-300)) {
            xs.push_back(field.eta[i]);
            ys.push_back(std::log(row));
        }
    }
    DecayRate out;
    out.n_rows = xs.size();
    if (xs.size() < 3) {
        out.exact_zero = true;
        return out;
    }
    const auto fit = linear_fit(xs, ys);
    out.k_est = -fit.slope;
    out.r2 = fit.r2;
    return out;
}

struct DerivativeReport {
    double sup_weighted_eta = 0.0;   // sup e^{K0 eta} zeta |dv/deta|
    double sup_weighted_phi = 0.0;   // sup e^{K0 eta} zeta |dv/dphi|
    double sup_unweighted_phi = 0.0; // sup |df/dphi|, the classical blow-up probe
    double sup_tangential = 0.0;     // filled by tangential_derivative
    double k0_used = 0.0;
};

/// Central finite differences of v = f - f_L on the grid, weighted by
/// e^{K0 eta} zeta. Interior nodes only.
inline DerivativeReport weighted_derivatives(const MilneConfig& cfg, const MilneField& field,
                                             double k0) {
    DerivativeReport rep;
    rep.k0_used = k0;
    const std::size_t m = field.rows(), n = field.cols();
    const double dphi = 2.0 * pi / double(n);
    for (std::size_t i = 1; i + 1 < m; ++i) {
        const double wexp = std::exp(k0 * field.eta[i]);
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t jm = (j + n - 1) % n, jp = (j + 1) % n;
            const double dv_eta = (field.at(i + 1, j) - field.at(i - 1, j)) /
                                  (field.eta[i + 1] - field.eta[i - 1]);
            const double dv_phi = (field.at(i, jp) - field.at(i, jm)) / (2.0 * dphi);
            const double z = kinetic_distance(cfg, field.eta[i], field.phi[j]);
            rep.sup_weighted_eta = std::max(rep.sup_weighted_eta, wexp * z * std::abs(dv_eta));
            rep.sup_weighted_phi = std::max(rep.sup_weighted_phi, wexp * z * std::abs(dv_phi));
            rep.sup_unweighted_phi = std::max(rep.sup_unweighted_phi, std::abs(dv_phi));
        }
    }
    return rep;
}

/// Default derivative weight; the decay theorem's K0 is never made explicit,
/// so studies report the fitted rate and the K0 they actually used.
inline double default_weight_rate(const MilneField& field) {
    const auto d = decay_rate(field);
    if (d.exact_zero) return 0.5;
    return std::min(0.5 * d.k_est, 0.5);
}

// ---------------------------------------------------------------------------
// Tangential derivative, two independent routes
// ---------------------------------------------------------------------------

struct TauStation {
    double r_kappa;
    double r_kappa_prime;
};
using TauGeometry = std::function<TauStation(double tau)>;
using TauPhiFunc = std::function<double(double tau, double phi)>;
using TauEtaPhiFunc = std::function<double(double tau, double eta, double phi)>;

struct TangentialReport {
    double sup_fd = 0.0;   // sup e^{K0 eta} |dv/dtau| via centered solves
    double sup_weq = 0.0;  // same via the tangential-derivative equation
    double sup_gap = 0.0;  // sup e^{K0 eta} |difference|
    double rel_gap = 0.0;
    double k0_used = 0.0;
    double f_limit_prime = 0.0;
};

/// sup e^{K0 eta} |dv/dtau| computed along two routes: a centered difference
/// of solves at tau +- dtau/2, and a direct solve of the equation satisfied
/// by the tau-derivative, whose source couples R'_kappa to the velocity
/// derivative of the base solution.
inline TangentialReport tangential_derivative(const MilneConfig& base, const TauGeometry& geom,
                                              const TauPhiFunc& h, const TauEtaPhiFunc& S,
                                              double dtau, double k0 = -1.0) {
    auto station_cfg = [&](double tau) {
        MilneConfig c = base;
        c.tau = tau;
        const auto st = geom(tau);
        c.r_kappa = st.r_kappa;
        c.r_kappa_prime = st.r_kappa_prime;
        return c;
    };
    const MilneConfig cfg0 = station_cfg(base.tau);
    const MilneConfig cfgp = station_cfg(base.tau + 0.5 * dtau);
    const MilneConfig cfgm = station_cfg(base.tau - 0.5 * dtau);

    auto slice_h = [&](const MilneConfig& c) {
        return PhiFunc([&h, tau = c.tau](double p) { return h(tau, p); });
    };
    auto slice_S = [&](const MilneConfig& c) -> EtaPhiFunc {
        if (!S) return nullptr;
        return [&S, tau = c.tau](double e, double p) { return S(tau, e, p); };
    };

    MilneField f0 = solve_inflow(cfg0, slice_h(cfg0), slice_S(cfg0));
    MilneField fp = solve_inflow(cfgp, slice_h(cfgp), slice_S(cfgp));
    MilneField fm = solve_inflow(cfgm, slice_h(cfgm), slice_S(cfgm));

    if (k0 < 0.0) k0 = default_weight_rate(f0);

    const std::size_t m = f0.rows(), n = f0.cols();
    std::vector<double> w_fd(m * n);
    for (std::size_t k = 0; k < m * n; ++k) {
        const double vp = fp.f[k] - fp.f_limit;
        const double vm = fm.f[k] - fm.f_limit;
        w_fd[k] = (vp - vm) / dtau;
    }

    // velocity derivative of the base solution, reused inside the w-source
    MilneField dvdphi = f0;
    const double dphi = 2.0 * pi / double(n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t jm = (j + n - 1) % n, jp = (j + 1) % n;
            dvdphi.f[i * n + j] = (f0.at(i, jp) - f0.at(i, jm)) / (2.0 * dphi);
        }

    PhiFunc h_w = [&](double p) {
        return (h(cfgp.tau, p) - h(cfgm.tau, p)) / dtau;
    };
    EtaPhiFunc S_w = [&, cfg0](double e, double p) {
        double s = 0.0;
        if (S) s += (S(cfgp.tau, e, p) - S(cfgm.tau, e, p)) / dtau;
        const double geom_fac = cfg0.r_kappa_prime / (cfg0.r_kappa - cfg0.eps * e);
        s += geom_fac * milne_force(cfg0, e) * std::cos(p) * dvdphi.value(e, p);
        return s;
    };
    MilneField wt = solve_inflow(cfg0, h_w, S_w);
    const double fl_prime = limit_value(wt);

    TangentialReport rep;
    rep.k0_used = k0;
    rep.f_limit_prime = fl_prime;
    for (std::size_t i = 0; i < m; ++i) {
        const double wexp = std::exp(k0 * f0.eta[i]);
        for (std::size_t j = 0; j < n; ++j) {
            const double a = w_fd[i * n + j];
            const double b = wt.at(i, j) - fl_prime;
            rep.sup_fd = std::max(rep.sup_fd, wexp * std::abs(a));
            rep.sup_weq = std::max(rep.sup_weq, wexp * std::abs(b));
            rep.sup_gap = std::max(rep.sup_gap, wexp * std::abs(a - b));
        }
    }
    rep.rel_gap = rep.sup_gap / std::max({rep.sup_fd, rep.sup_weq, 1e-300});
    return rep;
}

} // namespace milnelab
