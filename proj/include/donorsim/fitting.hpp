#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include <cmath>
#include <functional>

#include "donorsim/errors.hpp"

namespace donorsim {

// Solve min ||A x - y||. Rank deficiency surfaces as a FitError.
inline Eigen::VectorXd linear_least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& y) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < a.cols()) throw FitError("linear least squares: design matrix is rank deficient", NAN);
    return qr.solve(y);
}

struct LsqResult {
    Eigen::VectorXd x;
    double residual_rms = 0;
    int iterations = 0;
    bool converged = false;
};

// Minimizes sum r_i(x)^2 with Levenberg–Marquardt and a forward-difference Jacobian.
using ResidualFn = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& r)>;

inline LsqResult levenberg_marquardt(ResidualFn fn, Eigen::VectorXd x0, int n_residuals,
                                     int max_evals = 2000) {
    struct Functor {
        using Scalar = double;
        using InputType = Eigen::VectorXd;
        using ValueType = Eigen::VectorXd;
        using JacobianType = Eigen::MatrixXd;
        enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
        ResidualFn f;
        int m, n;
        int inputs() const { return n; }
        int values() const { return m; }
        int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
            f(x, r);
            return 0;
        }
    };
    const int n = int(x0.size());
    if (n_residuals < n) throw FitError("levenberg_marquardt: fewer residuals than parameters", NAN);
    Eigen::NumericalDiff<Functor> num{Functor{std::move(fn), n_residuals, n}};
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<Functor>> lm(num);
    lm.parameters.maxfev = max_evals;
    lm.parameters.xtol = 1e-12;
    lm.parameters.ftol = 1e-14;
    const auto status = lm.minimize(x0);

    LsqResult out;
    out.x = x0;
    Eigen::VectorXd r(n_residuals);
    num(x0, r);
    out.residual_rms = std::sqrt(r.squaredNorm() / n_residuals);
    out.iterations = int(lm.nfev);
    using S = Eigen::LevenbergMarquardtSpace::Status;
    out.converged = status == S::RelativeReductionTooSmall || status == S::RelativeErrorTooSmall ||
                    status == S::RelativeErrorAndReductionTooSmall || status == S::CosinusTooSmall ||
                    status == S::FtolTooSmall || status == S::XtolTooSmall ||
                    status == S::GtolTooSmall;
    if (!out.x.allFinite()) out.converged = false;
    return out;
}

}  // namespace donorsim
