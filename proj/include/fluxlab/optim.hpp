#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "fluxlab/errors.hpp"

namespace fluxlab::num {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) {
    const double q = std::clamp(p, 1e-12, 1.0 - 1e-12);
    return std::log(q / (1.0 - q));
}

struct LmOptions {
    int max_iter = 400;
    double ftol = 1e-12;    // relative cost change
    double xtol = 1e-12;    // relative step size
    double cost_tol = 0.0;  // stop outright below this cost
    double lambda0 = 1e-3;
};

struct LmResult {
    Eigen::VectorXd params;
    double cost = 0.0;          // sum of squared residuals
    bool converged = false;
    int iterations = 0;
};

/// Levenberg-Marquardt with a forward-difference Jacobian. Bounded problems
/// are handled by the caller mapping through logistic()/exp() transforms.
inline LmResult lm_least_squares(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residuals,
                                 Eigen::VectorXd p, const LmOptions& opt = {}) {
    Eigen::VectorXd r = residuals(p);
    double cost = r.squaredNorm();
    const auto n = p.size();
    double lambda = opt.lambda0;
    LmResult result;

    for (int iter = 0; iter < opt.max_iter; ++iter) {
        result.iterations = iter + 1;
        Eigen::MatrixXd jac(r.size(), n);
        for (Eigen::Index j = 0; j < n; ++j) {
            const double step = std::sqrt(std::numeric_limits<double>::epsilon()) *
                                std::max(std::abs(p[j]), 1.0);
            Eigen::VectorXd pj = p;
            pj[j] += step;
            jac.col(j) = (residuals(pj) - r) / step;
        }
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * r;

        bool accepted = false;
        for (int tries = 0; tries < 30 && !accepted; ++tries) {
            Eigen::MatrixXd a = jtj;
            a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
            const Eigen::VectorXd delta = a.ldlt().solve(-jtr);
            const Eigen::VectorXd p_new = p + delta;
            const Eigen::VectorXd r_new = residuals(p_new);
            const double cost_new = r_new.squaredNorm();
            if (std::isfinite(cost_new) && cost_new < cost) {
                const double dcost = cost - cost_new;
                const double dstep = delta.norm();
                p = p_new;
                r = r_new;
                cost = cost_new;
                lambda = std::max(lambda * 0.3, 1e-14);
                accepted = true;
                if (cost <= opt.cost_tol || dcost <= opt.ftol * std::max(cost, 1e-300) ||
                    dstep <= opt.xtol * (p.norm() + opt.xtol)) {
                    result.converged = true;
                }
            } else {
                lambda *= 10.0;
                if (lambda > 1e14) break;
            }
        }
        if (!accepted || result.converged) {
            result.converged = result.converged || !accepted; // stationary point
            break;
        }
    }
    result.params = std::move(p);
    result.cost = cost;
    return result;
}

/// Golden-section minimization of a unimodal function; exact ties resolve
/// toward the left end of the bracket.
inline std::pair<double, double> golden_minimize(const std::function<double(double)>& f,
                                                 double a, double b, double tol_rel = 1e-10) {
    const double inv_phi = 0.6180339887498949;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while ((b - a) > tol_rel * (std::abs(a) + std::abs(b)) * 0.5) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1; f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2; f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    const double x = f1 <= f2 ? x1 : x2;
    return {x, f(x)};
}

/// Bisection on a bracketed sign change.
inline double bisect(const std::function<double(double)>& f, double lo, double hi,
                     double tol_rel = 1e-12, int max_iter = 200) {
    double flo = f(lo), fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if (flo * fhi > 0.0) throw NumericalError("bisect: endpoints do not bracket a root");
    for (int i = 0; i < max_iter; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0 || (hi - lo) < tol_rel * (std::abs(lo) + std::abs(hi)) * 0.5) return mid;
        if (flo * fm < 0.0) {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    return 0.5 * (lo + hi);
}

} // namespace fluxlab::num
