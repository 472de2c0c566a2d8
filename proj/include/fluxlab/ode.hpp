#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>

#include "fluxlab/errors.hpp"

namespace fluxlab::num {

struct OdeOptions {
    double rtol = 1e-8;
    double atol = 1e-10;
    double h_init = 0.0;          // 0 -> pick from the span
    std::uint64_t max_steps = 200'000'000;
    bool fixed_step = false;      // RK4 with step dt, for reproducibility studies
    double dt = 0.0;
};

namespace detail {

// Scaled RMS error norm over the flattened state.
template <class State>
double error_norm(const State& err, const State& y0, const State& y1, double atol, double rtol) {
    const auto e = err.array().abs();
    const auto sc = atol + rtol * y0.array().abs().max(y1.array().abs());
    return std::sqrt((e / sc).square().sum() / static_cast<double>(err.size()));
}

} // namespace detail

/// Adaptive Dormand-Prince 5(4) with FSAL. `rhs(t, y)` returns dy/dt,
/// `observer(t, y)` fires at t0, every accepted step, and t1. Works for any
/// Eigen vector or matrix state.
template <class State, class Rhs, class Observer>
State integrate_adaptive(Rhs&& rhs, State y, double t0, double t1, const OdeOptions& opt,
                         Observer&& observer) {
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                            a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = b1 - 5179.0 / 57600, e3 = b3 - 7571.0 / 16695,
                            e4 = b4 - 393.0 / 640, e5 = b5 + 92097.0 / 339200,
                            e6 = b6 - 187.0 / 2100, e7 = -1.0 / 40;
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;

    const double span = t1 - t0;
    if (span == 0.0) {
        observer(t0, y);
        return y;
    }

    if (opt.fixed_step) {
        if (!(opt.dt > 0.0)) throw ParameterError("fixed-step integration requires dt > 0");
        double t = t0;
        observer(t, y);
        const auto n = static_cast<std::uint64_t>(std::ceil(span / opt.dt - 1e-12));
        for (std::uint64_t i = 0; i < n; ++i) {
            const double h = std::min(opt.dt, t1 - t);
            State k1 = rhs(t, y);
            State k2 = rhs(t + 0.5 * h, State(y + 0.5 * h * k1));
            State k3 = rhs(t + 0.5 * h, State(y + 0.5 * h * k2));
            State k4 = rhs(t + h, State(y + h * k3));
            y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += h;
            observer(t, y);
        }
        return y;
    }

    double t = t0;
    double h = opt.h_init > 0.0 ? std::min(opt.h_init, span) : span / 100.0;
    observer(t, y);
    State k1 = rhs(t, y);

    for (std::uint64_t step = 0;; ++step) {
        if (step >= opt.max_steps)
            throw NumericalError("ODE step budget exhausted at t = " + std::to_string(t));
        if (t >= t1) break;
        h = std::min(h, t1 - t);
        const double h_floor = 16.0 * std::numeric_limits<double>::epsilon() *
                               std::max(std::abs(t), std::abs(span));
        if (h < h_floor) {
            std::ostringstream msg;
            msg << "step size underflow: t = " << t << ", h = " << h
                << " (problem too stiff for the explicit integrator)";
            throw StiffnessError(msg.str());
        }

        State k2 = rhs(t + c2 * h, State(y + h * (a21 * k1)));
        State k3 = rhs(t + c3 * h, State(y + h * (a31 * k1 + a32 * k2)));
        State k4 = rhs(t + c4 * h, State(y + h * (a41 * k1 + a42 * k2 + a43 * k3)));
        State k5 = rhs(t + c5 * h, State(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)));
        State k6 = rhs(t + h, State(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)));
        State y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        State k7 = rhs(t + h, y_new);
        State err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        const double en = detail::error_norm(err, y, y_new, opt.atol, opt.rtol);
        if (!std::isfinite(en)) {
            std::ostringstream msg;
            msg << "non-finite error estimate at t = " << t << ", h = " << h;
            throw StiffnessError(msg.str());
        }
        if (en <= 1.0) {
            t += h;
            y.swap(y_new);
            k1.swap(k7);
            observer(t, y);
        }
        const double factor = en > 0.0 ? 0.9 * std::pow(en, -0.2) : 5.0;
        h *= std::clamp(factor, 0.2, 5.0);
    }
    return y;
}

template <class State, class Rhs>
State integrate_adaptive(Rhs&& rhs, State y, double t0, double t1, const OdeOptions& opt = {}) {
    return integrate_adaptive(std::forward<Rhs>(rhs), std::move(y), t0, t1, opt,
                              [](double, const State&) {});
}

} // namespace fluxlab::num
