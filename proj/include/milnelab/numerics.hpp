#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace milnelab {

inline constexpr double pi = 3.14159265358979323846;

/// Wrap an angle to [-pi, pi).
inline double wrap_pi(double a) {
    a = std::fmod(a + pi, 2.0 * pi);
    if (a < 0.0) a += 2.0 * pi;
    return a - pi;
}

inline double sqr(double x) { return x * x; }

// ---------------------------------------------------------------------------
// Least-squares line fit, used for rate estimation on log-log data.
// ---------------------------------------------------------------------------

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    std::size_t n = 0;
};

inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("linear_fit: need >= 2 matching samples");
    LinearFit fit;
    fit.n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) { mx += x[i]; my += y[i]; }
    mx /= double(x.size());
    my /= double(y.size());
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0) throw std::invalid_argument("linear_fit: degenerate abscissae");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r2 = (syy > 0.0) ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

// ---------------------------------------------------------------------------
// Adaptive Simpson quadrature. Plenty for the analytic boundary data and
// compatibility integrals; not used in the inner solver loops.
// ---------------------------------------------------------------------------

namespace detail {
inline double simpson(const std::function<double(double)>& f, double a, double fa, double b,
                      double fb, double m, double fm) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double fa,
                                   double b, double fb, double m, double fm, double whole,
                                   double tol, int depth) {
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = simpson(f, a, fa, m, fm, lm, flm);
    const double right = simpson(f, m, fm, b, fb, rm, frm);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}
} // namespace detail

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-11, int max_depth = 40) {
    if (a == b) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = f(a), fb = f(b), fm = f(m);
    const double whole = detail::simpson(f, a, fa, b, fb, m, fm);
    return detail::adaptive_simpson_rec(f, a, fa, b, fb, m, fm, whole, tol, max_depth);
}

// ---------------------------------------------------------------------------
// Monotone cubic (Fritsch-Carlson) interpolation. Used for the Milne average
// f-bar along characteristic traces: keeps the quadrature free of the
// overshoots a plain spline would inject near the wall.
// ---------------------------------------------------------------------------

class PchipSpline {
public:
    PchipSpline() = default;

    PchipSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)) {
        set_values(std::move(y));
    }

    /// Rebuild slopes for new ordinates on the same knots.
    void set_values(std::vector<double> y) {
        y_ = std::move(y);
        const std::size_t n = x_.size();
        if (n < 2 || y_.size() != n) throw std::invalid_argument("PchipSpline: bad sizes");
        d_.assign(n, 0.0);
        std::vector<double> h(n - 1), del(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            h[i] = x_[i + 1] - x_[i];
            if (h[i] <= 0.0) throw std::invalid_argument("PchipSpline: knots not increasing");
            del[i] = (y_[i + 1] - y_[i]) / h[i];
        }
        if (n == 2) {
            d_[0] = d_[1] = del[0];
            return;
        }
        for (std::size_t i = 1; i + 1 < n; ++i) {
            if (del[i - 1] * del[i] <= 0.0) {
                d_[i] = 0.0;
            } else {
                const double w1 = 2.0 * h[i] + h[i - 1];
                const double w2 = h[i] + 2.0 * h[i - 1];
                d_[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
            }
        }
        d_[0] = edge_slope(h[0], h[1], del[0], del[1]);
        d_[n - 1] = edge_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    }

    double operator()(double t) const {
        const auto [i, u] = locate(t);
        const double h = x_[i + 1] - x_[i];
        return hermite(y_[i], y_[i + 1], d_[i] * h, d_[i + 1] * h, u);
    }

    /// Interval index and normalized coordinate, for callers that cache them.
    std::pair<std::size_t, double> locate(double t) const {
        const std::size_t n = x_.size();
        if (t <= x_.front()) return {0, 0.0};
        if (t >= x_.back()) return {n - 2, 1.0};
        std::size_t i = std::upper_bound(x_.begin(), x_.end(), t) - x_.begin() - 1;
        if (i > n - 2) i = n - 2;
        return {i, (t - x_[i]) / (x_[i + 1] - x_[i])};
    }

    /// Evaluate from a cached (interval, u) pair.
    double eval_at(std::size_t i, double u) const {
        const double h = x_[i + 1] - x_[i];
        return hermite(y_[i], y_[i + 1], d_[i] * h, d_[i + 1] * h, u);
    }

    const std::vector<double>& knots() const { return x_; }

private:
    static double hermite(double y0, double y1, double m0, double m1, double u) {
        const double u2 = u * u, u3 = u2 * u;
        return (2.0 * u3 - 3.0 * u2 + 1.0) * y0 + (u3 - 2.0 * u2 + u) * m0 +
               (-2.0 * u3 + 3.0 * u2) * y1 + (u3 - u2) * m1;
    }

    static double edge_slope(double h0, double h1, double del0, double del1) {
        // Standard one-sided three-point estimate with monotonicity clamp.
        double d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
        if (d * del0 <= 0.0)
            d = 0.0;
        else if (del0 * del1 < 0.0 && std::abs(d) > 3.0 * std::abs(del0))
            d = 3.0 * del0;
        return d;
    }

    std::vector<double> x_, y_, d_;
};

// ---------------------------------------------------------------------------
// Periodic cubic spline on uniform nodes (cyclic tridiagonal solve).
// Used for tangential interpolation of the boundary-layer family.
// ---------------------------------------------------------------------------

class PeriodicCubic {
public:
    PeriodicCubic() = default;

    /// Nodes are t_j = t0 + j*h, j = 0..n-1, period n*h.
    PeriodicCubic(double t0, double h, std::vector<double> y)
        : t0_(t0), h_(h), y_(std::move(y)) {
        const std::size_t n = y_.size();
        if (n < 3) throw std::invalid_argument("PeriodicCubic: need >= 3 nodes");
        period_ = h_ * double(n);
        // Solve for second derivatives M: cyclic system (1,4,1)*M = rhs.
        std::vector<double> rhs(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double ym = y_[(j + n - 1) % n], yp = y_[(j + 1) % n];
            rhs[j] = 6.0 * (ym - 2.0 * y_[j] + yp) / (h_ * h_);
        }
        m_ = solve_cyclic(rhs);
    }

    double operator()(double t) const {
        const std::size_t n = y_.size();
        double s = std::fmod(t - t0_, period_);
        if (s < 0.0) s += period_;
        std::size_t j = std::min<std::size_t>(std::size_t(s / h_), n - 1);
        const double u = s - double(j) * h_;
        const std::size_t jp = (j + 1) % n;
        const double a = (h_ - u) / h_, b = u / h_;
        return a * y_[j] + b * y_[jp] +
               ((a * a * a - a) * m_[j] + (b * b * b - b) * m_[jp]) * h_ * h_ / 6.0;
    }

private:
    std::vector<double> solve_cyclic(const std::vector<double>& rhs) const {
        // Sherman-Morrison on the (1,4,1) cyclic tridiagonal matrix.
        const std::size_t n = rhs.size();
        auto tridiag = [&](const std::vector<double>& diag, const std::vector<double>& r) {
            std::vector<double> bb = diag, d = r, x(n);
            for (std::size_t i = 1; i < n; ++i) {
                const double m = 1.0 / bb[i - 1];
                bb[i] -= m;       // sub- and super-diagonals are unit
                d[i] -= m * d[i - 1];
            }
            x[n - 1] = d[n - 1] / bb[n - 1];
            for (std::size_t i = n - 1; i-- > 0;) x[i] = (d[i] - x[i + 1]) / bb[i];
            return x;
        };
        const double gamma = -4.0;
        std::vector<double> diag(n, 4.0);
        diag[0] = 4.0 - gamma;
        diag[n - 1] = 4.0 - 1.0 / gamma;
        std::vector<double> u(n, 0.0);
        u[0] = gamma;
        u[n - 1] = 1.0;
        const auto x = tridiag(diag, rhs);
        const auto q = tridiag(diag, u);
        const double fact = (x[0] + x[n - 1] / gamma) / (1.0 + q[0] + q[n - 1] / gamma);
        std::vector<double> m(n);
        for (std::size_t i = 0; i < n; ++i) m[i] = x[i] - fact * q[i];
        return m;
    }

    double t0_ = 0.0, h_ = 1.0, period_ = 1.0;
    std::vector<double> y_, m_;
};

} // namespace milnelab
