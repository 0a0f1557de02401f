#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "milnelab/numerics.hpp"

namespace milnelab {

using Point2 = std::array<double, 2>;

/// Smooth convex planar domain given as a polar radius r(theta) about a pole
/// inside the domain. Only families with analytic derivatives are admitted so
/// the curvature entering the Milne force is exact.
class DomainSpec {
public:
    enum class Kind { circle, ellipse, fourier };

    static DomainSpec circle(double a) {
        DomainSpec d;
        d.kind_ = Kind::circle;
        d.a_ = a;
        d.validate();
        return d;
    }

    static DomainSpec ellipse(double a, double b) {
        DomainSpec d;
        d.kind_ = Kind::ellipse;
        d.a_ = a;
        d.b_ = b;
        d.validate();
        return d;
    }

    /// r(theta) = c0 + sum_k cos_k cos(k theta) + sin_k sin(k theta).
    /// Must be star-shaped about the origin and strictly convex.
    static DomainSpec fourier(double c0, std::vector<double> cos_coef,
                              std::vector<double> sin_coef) {
        DomainSpec d;
        d.kind_ = Kind::fourier;
        d.c0_ = c0;
        d.cos_ = std::move(cos_coef);
        d.sin_ = std::move(sin_coef);
        d.sin_.resize(std::max(d.sin_.size(), d.cos_.size()), 0.0);
        d.cos_.resize(d.sin_.size(), 0.0);
        d.validate();
        return d;
    }

    Kind kind() const { return kind_; }
    double param_a() const { return a_; }
    double param_b() const { return b_; }

    double r(double th) const { return eval(th, 0); }
    double dr(double th) const { return eval(th, 1); }
    double d2r(double th) const { return eval(th, 2); }
    double d3r(double th) const { return eval(th, 3); }

    /// Curvature kappa(theta) = (r^2 + 2 r'^2 - r r'') / (r^2 + r'^2)^{3/2}.
    double kappa(double th) const {
        const double rr = r(th), r1 = dr(th), r2 = d2r(th);
        const double p2 = rr * rr + r1 * r1;
        return (rr * rr + 2.0 * r1 * r1 - rr * r2) / (p2 * std::sqrt(p2));
    }

    double radius_of_curvature(double th) const { return 1.0 / kappa(th); }

    /// min over theta of the radius of curvature; local coordinates are
    /// bijective for mu below this value.
    double validity_radius() const { return r_min_; }

    double max_radius() const { return r_max_; }
    double area() const { return area_; }

    /// Arc-length element |d gamma / d theta| = sqrt(r^2 + r'^2).
    double arc_element(double th) const {
        const double rr = r(th), r1 = dr(th);
        return std::sqrt(rr * rr + r1 * r1);
    }

    Point2 boundary(double th) const {
        const double rr = r(th);
        return {rr * std::cos(th), rr * std::sin(th)};
    }

    bool inside(const Point2& x, double tol = 0.0) const {
        const double rho = std::hypot(x[0], x[1]);
        if (rho == 0.0) return true;
        return rho <= r(std::atan2(x[1], x[0])) + tol;
    }

private:
    double eval(double th, int order) const {
        switch (kind_) {
        case Kind::circle:
            return order == 0 ? a_ : 0.0;
        case Kind::ellipse: {
            // r = a b / sqrt(g), g = b^2 cos^2 + a^2 sin^2.
            const double ab = a_ * b_;
            const double d = a_ * a_ - b_ * b_;
            const double s = std::sin(th), c = std::cos(th);
            const double g = b_ * b_ + d * s * s;
            const double g1 = d * 2.0 * s * c;           // d sin(2t)
            const double g2 = 2.0 * d * (c * c - s * s); // 2 d cos(2t)
            const double g3 = -4.0 * g1;
            const double gm = 1.0 / g;
            const double g12 = std::sqrt(g);
            switch (order) {
            case 0: return ab / g12;
            case 1: return -0.5 * ab * g1 * gm / g12;
            case 2: return ab * (0.75 * g1 * g1 * gm * gm - 0.5 * g2 * gm) / g12;
            default:
                return ab *
                       (-(15.0 / 8.0) * g1 * g1 * g1 * gm * gm * gm +
                        (9.0 / 4.0) * g1 * g2 * gm * gm - 0.5 * g3 * gm) /
                       g12;
            }
        }
        case Kind::fourier: {
            double v = (order == 0) ? c0_ : 0.0;
            for (std::size_t k = 1; k <= cos_.size(); ++k) {
                const double kk = double(k);
                const double ck = cos_[k - 1], sk = sin_[k - 1];
                const double kt = kk * th;
                switch (order) {
                case 0: v += ck * std::cos(kt) + sk * std::sin(kt); break;
                case 1: v += kk * (-ck * std::sin(kt) + sk * std::cos(kt)); break;
                case 2: v += kk * kk * (-ck * std::cos(kt) - sk * std::sin(kt)); break;
                default: v += kk * kk * kk * (ck * std::sin(kt) - sk * std::cos(kt)); break;
                }
            }
            return v;
        }
        }
        return 0.0;
    }

    void validate() {
        constexpr int n_scan = 4096;
        double kmin = std::numeric_limits<double>::infinity();
        double kmax = 0.0;
        int argmin = 0;
        r_max_ = 0.0;
        for (int i = 0; i < n_scan; ++i) {
            const double th = -pi + 2.0 * pi * double(i) / n_scan;
            const double rr = r(th);
            if (!(rr > 0.0))
                throw std::invalid_argument("DomainSpec: r(theta) must be positive");
            const double k = kappa(th);
            if (!(k > 0.0))
                throw std::invalid_argument("DomainSpec: domain is not strictly convex");
            if (k < kmin) { kmin = k; argmin = i; }
            kmax = std::max(kmax, k);
            r_max_ = std::max(r_max_, rr);
        }
        // refine the curvature maximum (R_kappa minimum) by golden section
        double lo = -pi + 2.0 * pi * double(argmin - 2) / n_scan;
        double hi = -pi + 2.0 * pi * double(argmin + 2) / n_scan;
        const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
        double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
        double f1 = -kappa(x1), f2 = -kappa(x2);
        for (int it = 0; it < 80; ++it) {
            if (f1 < f2) {
                hi = x2; x2 = x1; f2 = f1;
                x1 = hi - gr * (hi - lo);
                f1 = -kappa(x1);
            } else {
                lo = x1; x1 = x2; f1 = f2;
                x2 = lo + gr * (hi - lo);
                f2 = -kappa(x2);
            }
        }
        kmax = std::max(kmax, kappa(0.5 * (lo + hi)));
        r_min_ = 1.0 / kmax;
        // area = 1/2 int r^2 dtheta, spectrally accurate trapezoid
        double a = 0.0;
        for (int i = 0; i < n_scan; ++i) {
            const double th = -pi + 2.0 * pi * double(i) / n_scan;
            a += 0.5 * sqr(r(th));
        }
        area_ = a * 2.0 * pi / n_scan;
    }

    Kind kind_ = Kind::circle;
    double a_ = 1.0, b_ = 1.0, c0_ = 1.0;
    std::vector<double> cos_, sin_;
    double r_min_ = 1.0, r_max_ = 1.0, area_ = pi;
};

/// Boundary frame at parameter theta: point, outward normal, normal angle tau,
/// curvature and its radius.
struct BoundaryFrame {
    double theta;
    Point2 point;
    Point2 normal;  // outward unit normal
    double tau;     // angle of the normal, n = (cos tau, sin tau)
    double kappa;
    double r_kappa;
};

/// Point in boundary-fitted coordinates: distance mu to the wall along the
/// inward normal, boundary parameter theta.
struct LocalPoint {
    double mu;
    double theta;
};

inline BoundaryFrame frame(const DomainSpec& dom, double theta) {
    BoundaryFrame fr;
    fr.theta = theta;
    const double rr = dom.r(theta), r1 = dom.dr(theta);
    const double p = std::sqrt(rr * rr + r1 * r1);
    const double c = std::cos(theta), s = std::sin(theta);
    fr.point = {rr * c, rr * s};
    fr.normal = {(rr * c + r1 * s) / p, (rr * s - r1 * c) / p};
    fr.tau = std::atan2(fr.normal[1], fr.normal[0]);
    fr.kappa = dom.kappa(theta);
    fr.r_kappa = 1.0 / fr.kappa;
    return fr;
}

inline double validity_radius(const DomainSpec& dom) { return dom.validity_radius(); }

/// Angle of the outward normal as a function of theta (substitution between
/// the position and normal parametrizations). Monotone since
/// d tau / d theta = kappa sqrt(r^2+r'^2) > 0 on a convex boundary.
inline double tau_of_theta(const DomainSpec& dom, double theta) {
    const double rr = dom.r(theta), r1 = dom.dr(theta);
    return std::atan2(rr * std::sin(theta) - r1 * std::cos(theta),
                      rr * std::cos(theta) + r1 * std::sin(theta));
}

inline double dtau_dtheta(const DomainSpec& dom, double theta) {
    return dom.kappa(theta) * dom.arc_element(theta);
}

inline double theta_of_tau(const DomainSpec& dom, double tau) {
    double th = tau; // exact for the circle, good start generally
    for (int it = 0; it < 60; ++it) {
        const double res = wrap_pi(tau - tau_of_theta(dom, th));
        if (std::abs(res) < 1e-14) break;
        th += res / dtau_dtheta(dom, th);
    }
    return wrap_pi(th);
}

/// d R_kappa / d tau, needed by the tangential-derivative source term.
inline double r_kappa_prime_tau(const DomainSpec& dom, double theta) {
    const double rr = dom.r(theta), r1 = dom.dr(theta), r2 = dom.d2r(theta),
                 r3 = dom.d3r(theta);
    const double p2 = rr * rr + r1 * r1;
    const double num = std::pow(p2, 1.5);
    const double den = rr * rr + 2.0 * r1 * r1 - rr * r2;
    const double dnum = 3.0 * std::sqrt(p2) * (rr * r1 + r1 * r2);
    const double dden = 2.0 * rr * r1 + 3.0 * r1 * r2 - rr * r3;
    const double drk_dtheta = (dnum * den - num * dden) / (den * den);
    return drk_dtheta / dtau_dtheta(dom, theta);
}

inline Point2 to_cartesian(const DomainSpec& dom, const LocalPoint& p) {
    if (p.mu < 0.0 || p.mu >= dom.validity_radius())
        throw std::domain_error("to_cartesian: mu outside the validity radius");
    const auto fr = frame(dom, p.theta);
    return {fr.point[0] - p.mu * fr.normal[0], fr.point[1] - p.mu * fr.normal[1]};
}

inline LocalPoint from_cartesian(const DomainSpec& dom, const Point2& x) {
    // Newton on the normal-projection residual (x - gamma(theta)) . gamma'(theta).
    double th = std::atan2(x[1], x[0]);
    bool ok = false;
    for (int attempt = 0; attempt < 2 && !ok; ++attempt) {
        if (attempt == 1) {
            // coarse scan fallback for strongly eccentric shapes
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < 512; ++i) {
                const double t = -pi + 2.0 * pi * i / 512.0;
                const auto b = dom.boundary(t);
                const double d = sqr(x[0] - b[0]) + sqr(x[1] - b[1]);
                if (d < best) { best = d; th = t; }
            }
        }
        for (int it = 0; it < 100; ++it) {
            const double rr = dom.r(th), r1 = dom.dr(th), r2 = dom.d2r(th);
            const double c = std::cos(th), s = std::sin(th);
            const Point2 g = {rr * c, rr * s};
            const Point2 g1 = {r1 * c - rr * s, r1 * s + rr * c};
            const Point2 g2 = {r2 * c - 2.0 * r1 * s - rr * c, r2 * s + 2.0 * r1 * c - rr * s};
            const Point2 dx = {x[0] - g[0], x[1] - g[1]};
            const double F = dx[0] * g1[0] + dx[1] * g1[1];
            const double dF = -(g1[0] * g1[0] + g1[1] * g1[1]) + dx[0] * g2[0] + dx[1] * g2[1];
            if (dF == 0.0) break;
            const double step = F / dF;
            th -= step;
            if (std::abs(step) < 1e-15) { ok = true; break; }
        }
    }
    if (!ok) throw std::runtime_error("from_cartesian: projection did not converge");
    th = wrap_pi(th);
    const auto fr = frame(dom, th);
    const double mu = (fr.point[0] - x[0]) * fr.normal[0] + (fr.point[1] - x[1]) * fr.normal[1];
    if (mu < -1e-9 * dom.max_radius())
        throw std::domain_error("from_cartesian: point is outside the domain");
    if (mu >= dom.validity_radius())
        throw std::domain_error("from_cartesian: point too deep for local coordinates");
    return {std::max(mu, 0.0), th};
}

/// Exit data of the backward ray x - s w: geometric distance to the boundary
/// and the hit point. Callers in the transport solver divide by eps to get
/// the scaled back-time.
struct RayExit {
    double s;          // geometric distance, >= 0
    Point2 x_b;        // boundary point
    double theta_b;    // boundary parameter of the hit
    bool grazing;      // |w . n| below tolerance at the hit
};

inline RayExit ray_exit(const DomainSpec& dom, const Point2& x, const Point2& w) {
    auto rho = [&](double s) {
        const Point2 p = {x[0] - s * w[0], x[1] - s * w[1]};
        const double pr = std::hypot(p[0], p[1]);
        if (pr == 0.0) return -dom.r(0.0);
        return pr - dom.r(std::atan2(p[1], p[0]));
    };
    const double scale = dom.max_radius();
    const double rho0 = rho(0.0);
    if (rho0 > 1e-9 * scale)
        throw std::domain_error("ray_exit: start point is outside the domain");

    double lo = 0.0;
    // Starting on (or numerically at) the boundary: either the ray leaves a
    // full chord, or it is tangential and exits immediately.
    if (rho0 > -1e-12 * scale) {
        const double probe = 1e-7 * scale;
        if (rho(probe) >= 0.0) {
            const auto fr = frame(dom, std::atan2(x[1], x[0]));
            RayExit res{0.0, x, fr.theta, true};
            return res;
        }
        lo = probe;
    }
    double hi = std::hypot(x[0], x[1]) + 2.0 * scale;
    // bisection on the sign change, then Newton polish
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (rho(mid) < 0.0) lo = mid; else hi = mid;
        if (hi - lo < 1e-15 * scale) break;
    }
    double s = 0.5 * (lo + hi);
    for (int it = 0; it < 5; ++it) {
        const Point2 p = {x[0] - s * w[0], x[1] - s * w[1]};
        const double pr = std::hypot(p[0], p[1]);
        if (pr == 0.0) break;
        const double th = std::atan2(p[1], p[0]);
        const double val = pr - dom.r(th);
        const Point2 grad_rho = {p[0] / pr + dom.dr(th) * p[1] / (pr * pr),
                                 p[1] / pr - dom.dr(th) * p[0] / (pr * pr)};
        const double drho_ds = -(grad_rho[0] * w[0] + grad_rho[1] * w[1]);
        if (drho_ds == 0.0) break;
        s -= val / drho_ds;
    }
    s = std::max(s, 0.0);
    RayExit res;
    res.s = s;
    res.x_b = {x[0] - s * w[0], x[1] - s * w[1]};
    res.theta_b = std::atan2(res.x_b[1], res.x_b[0]);
    const auto fr = frame(dom, res.theta_b);
    res.grazing = std::abs(w[0] * fr.normal[0] + w[1] * fr.normal[1]) < 1e-9;
    return res;
}

/// Parse a domain from its JSON-ish fields; used by the harness config layer.
inline DomainSpec domain_from_fields(const std::string& kind, double a, double b, double c0,
                                     const std::vector<double>& cos_coef,
                                     const std::vector<double>& sin_coef) {
    if (kind == "circle") return DomainSpec::circle(a);
    if (kind == "ellipse") return DomainSpec::ellipse(a, b);
    if (kind == "fourier") return DomainSpec::fourier(c0, cos_coef, sin_coef);
    throw std::invalid_argument("unknown domain kind: " + kind);
}

} // namespace milnelab
