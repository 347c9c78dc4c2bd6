#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <sstream>

#include "obsv/errors.hpp"

namespace obsv {

struct SpdSolve {
    Eigen::MatrixXd solution;
    double rcond = 0.0;   // min/max eigenvalue of the (possibly jittered) matrix
    bool jittered = false;
};

/// Smallest and largest eigenvalue of a symmetric matrix.
inline std::pair<double, double> sym_eig_range(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw Error("sym_eig_range: eigensolver failed");
    const auto& ev = es.eigenvalues();
    return {ev.minCoeff(), ev.maxCoeff()};
}

/// Cholesky solve of M s = b for symmetric M. On a failed factorization one
/// retry is made with diagonal jitter 1e-12 * trace(M)/n; a second failure,
/// or a solution violating the backward-error bound, raises GramianSingular.
inline SpdSolve solve_spd(const Eigen::MatrixXd& M, const Eigen::MatrixXd& b) {
    if (M.rows() != M.cols())
        throw Error("solve_spd: matrix is not square");
    if (M.rows() != b.rows())
        throw Error("solve_spd: dimension mismatch");

    SpdSolve result;
    Eigen::MatrixXd Mw = M;
    Eigen::LLT<Eigen::MatrixXd> llt(Mw);
    if (llt.info() != Eigen::Success) {
        const double jitter = 1e-12 * Mw.trace() / static_cast<double>(Mw.rows());
        Mw.diagonal().array() += jitter;
        llt.compute(Mw);
        result.jittered = true;
        if (llt.info() != Eigen::Success) {
            std::ostringstream os;
            os << "solve_spd: Cholesky failed after jitter (trace=" << M.trace()
               << "); Gramian is numerically singular";
            throw GramianSingular(os.str());
        }
    }
    result.solution = llt.solve(b);

    auto [lo, hi] = sym_eig_range(Mw);
    result.rcond = (hi > 0.0) ? lo / hi : 0.0;

    const double resid = (M * result.solution - b).norm();
    const double bound = 1e-10 * (M.norm() * result.solution.norm() + b.norm());
    if (!(resid <= bound) || !result.solution.allFinite()) {
        std::ostringstream os;
        os << "solve_spd: backward error " << resid << " exceeds bound " << bound
           << " (rcond=" << result.rcond << ")";
        throw GramianSingular(os.str());
    }
    return result;
}

}  // namespace obsv
