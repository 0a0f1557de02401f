#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "milnelab/geometry.hpp"
#include "milnelab/numerics.hpp"
#include "milnelab/parallel.hpp"

namespace milnelab {

using BoundaryData = std::function<double(double tau, double phi)>;
using VolumeSource = std::function<double(const Point2& x, double psi)>;

/// Reference transport solve configuration. The physical problem uses the
/// boundary source g (incoming data P[u] + eps g); setting `boundary_h`
/// switches to the remainder form u = P[u] + h with a volumetric source f.
struct TransportConfig {
    double eps = 0.1;
    DomainSpec domain = DomainSpec::circle(1.0);
    BoundaryData g;             // physical boundary source
    BoundaryData boundary_h;    // overrides eps*g when set (remainder form)
    VolumeSource volumetric;    // f(x, w); zero when unset

    int n_dir = 64;    // angular ordinates, staggered
    int n_r = 96;      // radial cells (s direction)
    int n_theta = 64;  // boundary parameter cells
    double first_cell = 0.0;   // geometric width of the wall cell; 0 -> eps/4
    double tol = 1e-9;
    int max_iter = 2000;
    int anderson_window = 5;   // 0 = plain source iteration
    int workers = 1;
    double sigma_step = 0.5;   // base scaled-time quadrature step along rays
    double sigma_cutoff = 40.0;
    bool project_mass = true;  // per-sweep normalization projection

    void check() const {
        if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("TransportConfig: eps");
        if (n_dir < 8 || n_dir % 2 != 0)
            throw std::invalid_argument("TransportConfig: n_dir must be even and >= 8");
        for (int k = 0; k < n_dir; ++k) {
            const double psi = (k + 0.5) * 2.0 * pi / n_dir;
            if (std::abs(std::cos(psi)) < 1e-12 || std::abs(std::sin(psi)) < 1e-12)
                throw std::invalid_argument("TransportConfig: ordinate tangent to a coordinate axis");
        }
        if (n_r < 4 || n_theta < 8) throw std::invalid_argument("TransportConfig: grid too small");
    }
};

/// Discrete transport solution on the star grid x = s * gamma(theta).
struct TransportField {
    double eps = 0.0;
    std::vector<double> s;       // n_r+1 radial stations, s[0]=0, s[n_r]=1
    std::vector<double> theta;   // n_theta boundary parameters
    std::vector<double> psi;     // n_dir ordinate angles
    std::vector<double> u;       // ((i*n_theta)+j)*n_dir + k
    std::vector<double> ubar;    // node average
    std::vector<double> p_out;   // P[u] on the boundary ring
    std::vector<double> node_x, node_y;
    std::vector<double> vol_w;   // node volume weights (int dx)
    std::vector<double> arc_w;   // boundary arc weights
    double measure = 0.0;
    double mass = 0.0;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
    std::vector<double> residual_history;

    std::size_t n_rows() const { return s.size(); }
    std::size_t n_cols() const { return theta.size(); }
    std::size_t n_ord() const { return psi.size(); }
    std::size_t node(std::size_t i, std::size_t j) const { return i * n_cols() + j; }

    double u_at(std::size_t i, std::size_t j, std::size_t k) const {
        return u[node(i, j) * n_ord() + k];
    }
};

namespace transport_detail {

/// Geometry snapshot shared by the sweep workers.
struct Mesh {
    const DomainSpec* dom;
    std::vector<double> s, theta, psi;
    std::vector<double> r_theta;   // r at theta nodes
    std::vector<double> tau_theta; // normal angle at theta nodes
    std::vector<double> arc_w;
    std::vector<double> vol_w;
    double measure = 0.0;
    double r_max = 0.0;

    std::size_t rows() const { return s.size(); }
    std::size_t cols() const { return theta.size(); }
    std::size_t ords() const { return psi.size(); }

    Point2 node_pos(std::size_t i, std::size_t j) const {
        const double rr = s[i] * r_theta[j];
        return {rr * std::cos(theta[j]), rr * std::sin(theta[j])};
    }

    /// Four-point periodic Lagrange weights in the theta direction. The
    /// tangential profiles are smooth low harmonics, and the diffusive limit
    /// amplifies interpolation consistency error by ~1/eps, so the tangential
    /// order matters much more than the radial one.
    struct ThetaStencil {
        std::size_t j[4];
        double w[4];
    };

    ThetaStencil theta_stencil(double th) const {
        const std::size_t n = cols();
        const double dth = 2.0 * pi / double(n);
        const double tj = (th - theta[0]) / dth;
        const double jf = std::floor(tj);
        const double u = tj - jf;
        const long base = long(jf);
        ThetaStencil st;
        for (int q = 0; q < 4; ++q)
            st.j[q] = std::size_t(((base + q - 1) % long(n) + long(n)) % long(n));
        st.w[0] = -u * (u - 1.0) * (u - 2.0) / 6.0;
        st.w[1] = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
        st.w[2] = -(u + 1.0) * u * (u - 2.0) / 2.0;
        st.w[3] = (u + 1.0) * u * (u - 1.0) / 6.0;
        return st;
    }

    /// Interpolation of a node field: cubic in theta, linear in the graded
    /// radial coordinate.
    double interp(const std::vector<double>& field, const Point2& p) const {
        const double rho = std::hypot(p[0], p[1]);
        const std::size_t n = cols();
        if (rho == 0.0) return field[0 * n + 0];
        const double th = std::atan2(p[1], p[0]);
        const auto st = theta_stencil(th);
        double rb = 0.0;
        for (int q = 0; q < 4; ++q) rb += st.w[q] * r_theta[st.j[q]];
        double sv = std::min(rho / rb, 1.0);
        std::size_t i = std::upper_bound(s.begin(), s.end(), sv) - s.begin();
        i = std::clamp<std::size_t>(i, 1, s.size() - 1) - 1;
        const double swt = (sv - s[i]) / (s[i + 1] - s[i]);
        double a = 0.0, b = 0.0;
        for (int q = 0; q < 4; ++q) {
            a += st.w[q] * field[i * n + st.j[q]];
            b += st.w[q] * field[(i + 1) * n + st.j[q]];
        }
        return a * (1.0 - swt) + b * swt;
    }

    double interp_boundary(const std::vector<double>& ring, double th) const {
        const auto st = theta_stencil(th);
        double v = 0.0;
        for (int q = 0; q < 4; ++q) v += st.w[q] * ring[st.j[q]];
        return v;
    }
};

struct RayCache {
    double t_b;      // scaled back-time (geometric distance / eps)
    double theta_b;  // boundary parameter of the entry point
    double phi_b;    // Milne angle of w at the entry point (sin > 0)
    bool grazing;
    bool use_boundary; // boundary term not truncated away
    bool bc_row;       // incoming ordinate at a wall node: value set by the BC
};

} // namespace transport_detail

/// Half-range diffusive reflection moment at a boundary node; weights are
/// renormalized so constants are reproduced exactly, and grazing-flagged
/// ordinates carry zero weight.
inline double diffusive_reflect(const TransportField& field, const DomainSpec& dom,
                                std::size_t j) {
    const std::size_t i_b = field.n_rows() - 1;
    const double tau = tau_of_theta(dom, field.theta[j]);
    double acc = 0.0, wsum = 0.0;
    for (std::size_t k = 0; k < field.n_ord(); ++k) {
        const double wn = std::cos(field.psi[k] - tau);
        if (wn <= 1e-9) continue;
        acc += field.u_at(i_b, j, k) * wn;
        wsum += wn;
    }
    return wsum > 0.0 ? acc / wsum : 0.0;
}

class TransportSolver {
public:
    explicit TransportSolver(TransportConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.check();
        build_mesh();
        build_rays();
    }

    TransportField solve() {
        const std::size_t nn = mesh_.rows() * mesh_.cols();
        const std::size_t nb = mesh_.cols();
        const std::size_t dim = nn + nb;

        Eigen::VectorXd z = Eigen::VectorXd::Zero(dim), Fz(dim);
        std::vector<Eigen::VectorXd> dz_hist, dr_hist;
        Eigen::VectorXd r_prev, z_prev;

        const double scale = data_scale();
        TransportField out = make_field();

        bool converged = false;
        int it = 0;
        double res = 0.0;
        for (it = 1; it <= cfg_.max_iter; ++it) {
            sweep(z, Fz);
            if (cfg_.project_mass) project(Fz);
            Eigen::VectorXd r = Fz - z;
            res = 0.0;
            for (std::size_t q = 0; q < dim; ++q) res = std::max(res, std::abs(r[q]));
            out.residual_history.push_back(res);
            if (res < cfg_.tol * std::max(scale, 1e-300)) {
                z = Fz;
                converged = true;
                break;
            }
            Eigen::VectorXd z_next;
            const int m_keep = cfg_.anderson_window;
            if (m_keep > 0 && it > 3) {
                if (r_prev.size()) {
                    dz_hist.push_back(z - z_prev);
                    dr_hist.push_back(r - r_prev);
                    if (int(dz_hist.size()) > m_keep) {
                        dz_hist.erase(dz_hist.begin());
                        dr_hist.erase(dr_hist.begin());
                    }
                }
                z_prev = z;
                r_prev = r;
                const int mw = int(dz_hist.size());
                if (mw > 0) {
                    Eigen::MatrixXd R(dim, mw);
                    for (int c = 0; c < mw; ++c) R.col(c) = dr_hist[c];
                    Eigen::VectorXd gamma =
                        R.colPivHouseholderQr().solve(r);
                    z_next = z + r;
                    for (int c = 0; c < mw; ++c)
                        z_next -= gamma[c] * (dz_hist[c] + dr_hist[c]);
                } else {
                    z_next = Fz;
                }
            } else {
                z_prev = z;
                r_prev = r;
                z_next = Fz;
            }
            if (cfg_.project_mass) project(z_next);
            z = z_next;
        }

        // final consistent state and full angular field
        sweep(z, Fz, &out.u);
        if (cfg_.project_mass) {
            const double c = project(Fz);
            for (auto& v : out.u) v -= c;
        }
        out.ubar.assign(Fz.data(), Fz.data() + nn);
        out.p_out.assign(Fz.data() + nn, Fz.data() + dim);
        out.iterations = std::min(it, cfg_.max_iter);
        out.residual = res;
        out.converged = converged;
        out.mass = discrete_mass(out.ubar);
        return out;
    }

    const TransportConfig& config() const { return cfg_; }
    const transport_detail::Mesh& mesh() const { return mesh_; }

private:
    void build_mesh() {
        mesh_.dom = &cfg_.domain;
        mesh_.r_max = cfg_.domain.max_radius();
        // radial stations graded geometrically toward the wall so the layer
        // (width ~ eps) is resolved; first geometric cell <= first_cell
        const double fc = (cfg_.first_cell > 0.0 ? cfg_.first_cell : cfg_.eps / 4.0);
        const int n = cfg_.n_r;
        const double d0 = std::min(fc / mesh_.r_max, 1.0 / n);
        double q = 1.05;
        {
            // solve d0 (q^n - 1)/(q - 1) = 1 for the growth ratio
            double lo = 1.0 + 1e-12, hi = 2.0;
            for (int b = 0; b < 100; ++b) {
                q = 0.5 * (lo + hi);
                const double tot = d0 * (std::pow(q, n) - 1.0) / (q - 1.0);
                (tot < 1.0 ? lo : hi) = q;
            }
        }
        mesh_.s.resize(n + 1);
        mesh_.s[n] = 1.0;
        double acc = 0.0, step = d0;
        for (int i = n - 1; i >= 0; --i) {
            acc += step;
            step *= q;
            mesh_.s[i] = std::max(0.0, 1.0 - acc);
        }
        mesh_.s[0] = 0.0;

        mesh_.theta.resize(cfg_.n_theta);
        mesh_.r_theta.resize(cfg_.n_theta);
        mesh_.tau_theta.resize(cfg_.n_theta);
        mesh_.arc_w.resize(cfg_.n_theta);
        const double dth = 2.0 * pi / cfg_.n_theta;
        for (int j = 0; j < cfg_.n_theta; ++j) {
            const double th = -pi + j * dth;
            mesh_.theta[j] = th;
            mesh_.r_theta[j] = cfg_.domain.r(th);
            mesh_.tau_theta[j] = tau_of_theta(cfg_.domain, th);
            mesh_.arc_w[j] = cfg_.domain.arc_element(th) * dth;
        }
        mesh_.psi.resize(cfg_.n_dir);
        for (int k = 0; k < cfg_.n_dir; ++k)
            mesh_.psi[k] = -pi + (k + 0.5) * 2.0 * pi / cfg_.n_dir;

        // node volume weights: dx = s r(theta)^2 ds dtheta, trapezoid in s
        const std::size_t rows = mesh_.rows(), colsn = mesh_.cols();
        mesh_.vol_w.assign(rows * colsn, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
            const double ds = (i == 0 ? mesh_.s[1] - mesh_.s[0]
                               : i == rows - 1 ? mesh_.s[i] - mesh_.s[i - 1]
                                               : mesh_.s[i + 1] - mesh_.s[i - 1]) *
                              0.5;
            for (std::size_t j = 0; j < colsn; ++j)
                mesh_.vol_w[i * colsn + j] = mesh_.s[i] * sqr(mesh_.r_theta[j]) * ds * dth;
        }
        mesh_.measure = 0.0;
        for (double w : mesh_.vol_w) mesh_.measure += w;
    }

    void build_rays() {
        const std::size_t rows = mesh_.rows(), colsn = mesh_.cols(), ords = mesh_.ords();
        rays_.resize(rows * colsn * ords);
        std::vector<std::size_t> todo;
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < colsn; ++j) {
                if (i == 0 && j > 0) continue; // center node duplicated over j
                for (std::size_t k = 0; k < ords; ++k)
                    todo.push_back((i * colsn + j) * ords + k);
            }
        parallel_for(todo.size(), cfg_.workers, [&](std::size_t t) {
            const std::size_t id = todo[t];
            const std::size_t k = id % ords;
            const std::size_t nodeid = id / ords;
            const std::size_t i = nodeid / colsn, j = nodeid % colsn;
            const Point2 x = mesh_.node_pos(i, j);
            const Point2 w = {std::cos(mesh_.psi[k]), std::sin(mesh_.psi[k])};
            transport_detail::RayCache rc;
            const std::size_t i_b = rows - 1;
            if (i == i_b && std::cos(mesh_.psi[k] - mesh_.tau_theta[j]) < 1e-9) {
                // incoming (or grazing) ordinate at the wall: BC row, no ray
                rc.t_b = 0.0;
                rc.theta_b = mesh_.theta[j];
                rc.phi_b = wrap_pi(std::atan2(-w[0], -w[1]) + mesh_.tau_theta[j]);
                rc.grazing = false;
                rc.use_boundary = false;
                rc.bc_row = true;
                rays_[id] = rc;
                return;
            }
            const auto ex = ray_exit(cfg_.domain, x, w);
            rc.t_b = ex.s / cfg_.eps;
            rc.theta_b = ex.theta_b;
            rc.grazing = ex.grazing;
            const double tau_b = tau_of_theta(cfg_.domain, ex.theta_b);
            rc.phi_b = wrap_pi(std::atan2(-w[0], -w[1]) + tau_b);
            rc.use_boundary = rc.t_b <= cfg_.sigma_cutoff && !rc.grazing;
            rc.bc_row = false;
            rays_[id] = rc;
        });
        // replicate the center rays over j
        for (std::size_t j = 1; j < colsn; ++j)
            for (std::size_t k = 0; k < ords; ++k)
                rays_[(0 * colsn + j) * ords + k] = rays_[(0 * colsn + 0) * ords + k];
    }

    TransportField make_field() const {
        TransportField f;
        f.eps = cfg_.eps;
        f.s = mesh_.s;
        f.theta = mesh_.theta;
        f.psi = mesh_.psi;
        f.vol_w = mesh_.vol_w;
        f.arc_w = mesh_.arc_w;
        f.measure = mesh_.measure;
        const std::size_t rows = mesh_.rows(), colsn = mesh_.cols();
        f.node_x.resize(rows * colsn);
        f.node_y.resize(rows * colsn);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < colsn; ++j) {
                const auto p = mesh_.node_pos(i, j);
                f.node_x[i * colsn + j] = p[0];
                f.node_y[i * colsn + j] = p[1];
            }
        return f;
    }

    double data_scale() const {
        double sc = 0.0;
        // boundary data magnitude sampled on the ring
        for (int j = 0; j < cfg_.n_theta; ++j) {
            const double tau = mesh_.tau_theta[j];
            for (int q = 0; q < 16; ++q) {
                const double phi = (q + 0.5) * pi / 16.0;
                sc = std::max(sc, std::abs(boundary_value(tau, phi)));
            }
        }
        if (cfg_.volumetric) {
            for (std::size_t i = 0; i < mesh_.rows(); i += 4)
                for (std::size_t j = 0; j < mesh_.cols(); j += 4)
                    sc = std::max(sc, std::abs(cfg_.volumetric(mesh_.node_pos(i, j), 0.0)));
        }
        return sc > 0.0 ? sc : 1.0;
    }

    double boundary_value(double tau, double phi) const {
        if (cfg_.boundary_h) return cfg_.boundary_h(tau, phi);
        if (cfg_.g) return cfg_.eps * cfg_.g(tau, phi);
        return 0.0;
    }

    /// One source-iteration sweep: z = [ubar; P] -> Fz. When `full` is given,
    /// the complete angular field is stored as well.
    void sweep(const Eigen::VectorXd& z, Eigen::VectorXd& Fz,
               std::vector<double>* full = nullptr) const {
        const std::size_t rows = mesh_.rows(), colsn = mesh_.cols(), ords = mesh_.ords();
        const std::size_t nn = rows * colsn;
        std::vector<double> ubar(z.data(), z.data() + nn);
        std::vector<double> pring(z.data() + nn, z.data() + nn + colsn);

        std::vector<double> unew(nn * ords);

        std::vector<std::size_t> work;
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < colsn; ++j) {
                if (i == 0 && j > 0) continue;
                work.push_back(i * colsn + j);
            }

        parallel_for(work.size(), cfg_.workers, [&](std::size_t t) {
            const std::size_t nodeid = work[t];
            const std::size_t i = nodeid / colsn, j = nodeid % colsn;
            const Point2 x = mesh_.node_pos(i, j);
            for (std::size_t k = 0; k < ords; ++k) {
                const std::size_t id = nodeid * ords + k;
                const auto& rc = rays_[id];
                unew[id] = rc.bc_row
                               ? pring[j] + boundary_value(mesh_.tau_theta[j], rc.phi_b)
                               : integrate_ray(x, k, rc, ubar, pring);
            }
        });
        // replicate center
        for (std::size_t j = 1; j < colsn; ++j)
            for (std::size_t k = 0; k < ords; ++k)
                unew[(0 * colsn + j) * ords + k] = unew[(0 * colsn + 0) * ords + k];

        Fz.resize(nn + colsn);
        for (std::size_t nodeid = 0; nodeid < nn; ++nodeid) {
            double s = 0.0;
            for (std::size_t k = 0; k < ords; ++k) s += unew[nodeid * ords + k];
            Fz[nodeid] = s / double(ords);
        }
        // diffusive reflux on the ring, renormalized half-range quadrature
        const std::size_t i_b = rows - 1;
        for (std::size_t j = 0; j < colsn; ++j) {
            const double tau = mesh_.tau_theta[j];
            double acc = 0.0, wsum = 0.0;
            for (std::size_t k = 0; k < ords; ++k) {
                const double wn = std::cos(mesh_.psi[k] - tau);
                if (wn <= 1e-9) continue;
                acc += unew[(i_b * colsn + j) * ords + k] * wn;
                wsum += wn;
            }
            Fz[nn + j] = wsum > 0.0 ? acc / wsum : 0.0;
        }
        if (full) *full = std::move(unew);
    }

    /// Mild-formulation integral along the backward ray from x in direction
    /// -w: attenuated boundary value plus the collision source integral.
    /// Segments are quadratic in sigma with the e^{-sigma} weight integrated
    /// exactly; the diffusive limit amplifies any consistency error of this
    /// quadrature by ~1/eps, so fourth order here is not a luxury.
    double integrate_ray(const Point2& x, std::size_t k, const transport_detail::RayCache& rc,
                         const std::vector<double>& ubar,
                         const std::vector<double>& pring) const {
        const double eps = cfg_.eps;
        const Point2 w = {std::cos(mesh_.psi[k]), std::sin(mesh_.psi[k])};
        const double t_end = std::min(rc.t_b, cfg_.sigma_cutoff);

        double acc = 0.0;
        double sigma = 0.0;
        double wfac = 1.0; // e^{-sigma}
        double u_here = source_at(x, k, ubar);
        Point2 p = x;
        while (sigma < t_end - 1e-14) {
            // resolve the wall layer, then grow with the distance to the wall
            const double rho = std::hypot(p[0], p[1]);
            const double th = (rho > 0.0) ? std::atan2(p[1], p[0]) : 0.0;
            const double dist = std::max(cfg_.domain.r(th) - rho, 0.0);
            double h = std::clamp(0.2 * dist / eps, cfg_.sigma_step, 5.0 * cfg_.sigma_step);
            h = std::min(h, t_end - sigma);
            const double s_mid = sigma + 0.5 * h, s_nxt = sigma + h;
            const Point2 pm = {x[0] - eps * s_mid * w[0], x[1] - eps * s_mid * w[1]};
            const Point2 pn = {x[0] - eps * s_nxt * w[0], x[1] - eps * s_nxt * w[1]};
            const double u_mid = source_at(pm, k, ubar);
            const double u_next = source_at(pn, k, ubar);
            const double eh = std::exp(-h);
            // moments of e^{-t} t^m on [0, h]
            double m0, m1, m2;
            if (h > 0.05) {
                m0 = 1.0 - eh;
                m1 = 1.0 - (1.0 + h) * eh;
                m2 = 2.0 - (2.0 + 2.0 * h + h * h) * eh;
            } else {
                const double h2 = h * h;
                m0 = h * (1.0 - h / 2.0 + h2 / 6.0 - h2 * h / 24.0 + h2 * h2 / 120.0);
                m1 = 0.5 * h2 * (1.0 - 2.0 * h / 3.0 + h2 / 4.0 - h2 * h / 15.0);
                m2 = h2 * h / 3.0 * (1.0 - 3.0 * h / 4.0 + 3.0 * h2 / 10.0 - h2 * h / 12.0);
            }
            const double a = u_here;
            const double b = (4.0 * u_mid - 3.0 * u_here - u_next) / h;
            const double c = 2.0 * (u_here - 2.0 * u_mid + u_next) / (h * h);
            acc += wfac * (a * m0 + b * m1 + c * m2);
            wfac *= eh;
            sigma = s_nxt;
            u_here = u_next;
            p = pn;
        }
        if (rc.use_boundary) {
            const double tau_b = tau_of_theta(cfg_.domain, rc.theta_b);
            const double bval = mesh_.interp_boundary(pring, rc.theta_b) +
                                boundary_value(tau_b, rc.phi_b);
            acc += std::exp(-rc.t_b) * bval;
        }
        return acc;
    }

    double source_at(const Point2& p, std::size_t k, const std::vector<double>& ubar) const {
        double v = mesh_.interp(ubar, p);
        if (cfg_.volumetric) v += cfg_.volumetric(p, mesh_.psi[k]);
        return v;
    }

    /// Subtract the discrete phase-space mean; returns the constant removed.
    double project(Eigen::VectorXd& z) const {
        const std::size_t nn = mesh_.rows() * mesh_.cols();
        double m = 0.0;
        for (std::size_t q = 0; q < nn; ++q) m += z[q] * mesh_.vol_w[q];
        const double c = m / mesh_.measure;
        for (std::size_t q = 0; q < z.size(); ++q) z[q] -= c;
        return c;
    }

    double discrete_mass(const std::vector<double>& ubar) const {
        double m = 0.0;
        for (std::size_t q = 0; q < ubar.size(); ++q) m += ubar[q] * mesh_.vol_w[q];
        return 2.0 * pi * m;
    }

    TransportConfig cfg_;
    transport_detail::Mesh mesh_;
    std::vector<transport_detail::RayCache> rays_;
};

inline TransportField transport_solve(const TransportConfig& cfg) {
    TransportSolver solver(cfg);
    return solver.solve();
}

/// Phase-space integral of the solution; the normalization projection keeps
/// it at the rounding floor.
inline double mass_defect(const TransportField& field) { return field.mass; }

/// Discrete defect of the balance identity
/// eps/2 int_Gamma u^2 dgamma + ||u - ubar||^2 = int int f u,
/// for the remainder-form problem with volumetric source f and wall data h.
inline double energy_identity_defect(const TransportField& field, const DomainSpec& dom,
                                     const VolumeSource& f, const BoundaryData& h) {
    const std::size_t rows = field.n_rows(), colsn = field.n_cols(), ords = field.n_ord();
    const double dpsi = 2.0 * pi / double(ords);

    double vol_term = 0.0, src_term = 0.0;
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < colsn; ++j) {
            const std::size_t nodeid = i * colsn + j;
            const Point2 x = {field.node_x[nodeid], field.node_y[nodeid]};
            for (std::size_t k = 0; k < ords; ++k) {
                const double uv = field.u[nodeid * ords + k];
                vol_term += sqr(uv - field.ubar[nodeid]) * field.vol_w[nodeid] * dpsi;
                if (f) src_term += f(x, field.psi[k]) * uv * field.vol_w[nodeid] * dpsi;
            }
        }

    double bdry = 0.0;
    const std::size_t i_b = rows - 1;
    for (std::size_t j = 0; j < colsn; ++j) {
        const double tau = tau_of_theta(dom, field.theta[j]);
        for (std::size_t k = 0; k < ords; ++k) {
            const double wn = std::cos(field.psi[k] - tau);
            bdry += sqr(field.u_at(i_b, j, k)) * wn * dpsi * field.arc_w[j];
        }
    }
    (void)h;
    return 0.5 * field.eps * bdry + vol_term - src_term;
}

} // namespace milnelab
