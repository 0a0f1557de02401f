#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "milnelab/milne.hpp"

namespace milnelab {

/// Independent first-order oracle for the in-flow Milne problem: upwind
/// differencing of sin phi d_eta + F cos phi d_phi + f - fbar = S on the same
/// staggered grid, source iteration lagging the average. The transport part
/// is factorized once; every iteration is one sparse back-substitution.
/// Deliberately shares no code with the characteristic path.
inline MilneField upwind_solve(const MilneConfig& cfg, const PhiFunc& h,
                               const EtaPhiFunc& S = nullptr) {
    cfg.check();
    MilneField out;
    out.cfg = cfg;

    const double L = cfg.L();
    const int mi = cfg.eta_intervals();
    const std::size_t m = std::size_t(mi) + 1;
    out.eta.resize(m);
    for (std::size_t i = 0; i < m; ++i)
        out.eta[i] = L * std::pow(double(i) / double(mi), cfg.eta_stretch);
    const std::size_t n = std::size_t(cfg.n_phi);
    out.phi.resize(n);
    for (std::size_t j = 0; j < n; ++j)
        out.phi[j] = -pi + (double(j) + 0.5) * 2.0 * pi / double(n);
    const double dphi = 2.0 * pi / double(n);

    const std::size_t nn = m * n;
    auto idx = [&](std::size_t i, std::size_t j) { return i * n + j; };

    // transport + absorption part; the lagged average goes to the right side
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(nn * 4);
    Eigen::VectorXd rhs0 = Eigen::VectorXd::Zero(nn);
    std::vector<char> is_interior(nn, 0);

    for (std::size_t i = 0; i < m; ++i) {
        const double F = milne_force(cfg, out.eta[i]);
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t row = idx(i, j);
            const double sp = std::sin(out.phi[j]);
            const double cp = std::cos(out.phi[j]);

            if (i == 0 && sp > 0.0) { // inflow data
                trip.emplace_back(row, row, 1.0);
                rhs0[row] = h(out.phi[j]);
                continue;
            }
            if (i == m - 1 && sp < 0.0) { // specular reflection at eta = L
                trip.emplace_back(row, row, 1.0);
                trip.emplace_back(row, idx(i, n - 1 - j), -1.0);
                continue;
            }
            is_interior[row] = 1;

            double diag = 1.0 + cfg.lambda;
            // eta advection, upwind along the flow direction
            if (sp > 0.0) {
                const double de = out.eta[i] - out.eta[i - 1];
                diag += sp / de;
                trip.emplace_back(row, idx(i - 1, j), -sp / de);
            } else {
                const double de = out.eta[i + 1] - out.eta[i];
                diag += -sp / de;
                trip.emplace_back(row, idx(i + 1, j), sp / de);
            }
            // phi advection (periodic), velocity F cos phi
            const double vphi = F * cp;
            if (vphi > 0.0) {
                diag += vphi / dphi;
                trip.emplace_back(row, idx(i, (j + n - 1) % n), -vphi / dphi);
            } else if (vphi < 0.0) {
                diag += -vphi / dphi;
                trip.emplace_back(row, idx(i, (j + 1) % n), vphi / dphi);
            }
            trip.emplace_back(row, row, diag);
            rhs0[row] = S ? S(out.eta[i], out.phi[j]) : 0.0;
        }
    }

    Eigen::SparseMatrix<double> A(nn, nn);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.analyzePattern(A);
    lu.factorize(A);
    if (lu.info() != Eigen::Success)
        throw MilneError("upwind_solve: singular upwind system");

    Eigen::VectorXd f = Eigen::VectorXd::Zero(nn), rhs(nn);
    std::vector<double> fbar(m, 0.0);
    bool converged = false;
    int it = 0;
    for (it = 1; it <= cfg.max_iter; ++it) {
        rhs = rhs0;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t row = idx(i, j);
                if (is_interior[row]) rhs[row] += fbar[i];
            }
        f = lu.solve(rhs);
        double res = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += f[idx(i, j)];
            s /= double(n);
            res = std::max(res, std::abs(s - fbar[i]));
            fbar[i] = s;
        }
        out.residual_history.push_back(res);
        out.residual = res;
        if (res < cfg.tol) { converged = true; break; }
    }

    out.f.assign(f.data(), f.data() + nn);
    out.fbar = fbar;
    out.iterations = std::min(it, cfg.max_iter);
    out.converged = converged;
    out.f_limit = limit_value(out);
    return out;
}

} // namespace milnelab
