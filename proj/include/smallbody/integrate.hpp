#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include "smallbody/types.hpp"

// Adaptive Dormand-Prince 5(4) integration with the standard quartic dense
// output. Integration runs on time offsets from the initial epoch so that the
// accepted-step sequence of an autonomous system is independent of the epoch
// value; callers add the epoch back when reporting absolute times.

namespace smallbody {

struct IntegratorOptions {
    double rel_tol = 1e-12;
    double abs_tol = 1e-12;
    double initial_step = 0.0;  // 0 -> automatic
    double max_step = std::numeric_limits<double>::infinity();
    long max_steps = 100000000;
};

/// Dense interpolant over one accepted step [t0, t0 + h] (times relative to
/// the integration epoch).
template <int N>
struct DenseStep {
    using Vec = Eigen::Matrix<double, N, 1>;
    double t0 = 0.0;
    double h = 0.0;
    Vec r1, r2, r3, r4, r5;

    Vec at(double t_rel) const {
        const double theta = (t_rel - t0) / h;
        const double th1 = 1.0 - theta;
        return r1 + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)));
    }
    double t_end() const { return t0 + h; }
};

enum class StepControl { Continue, Stop };

namespace dopri5 {
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b_hat (embedded 4th-order error weights)
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
// dense-output weights
inline constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
}  // namespace dopri5

/// Integrates dy/dt = sys(t_abs, y) from relative time 0 to `duration`
/// (negative duration integrates backwards). `on_step` is invoked after every
/// accepted step and may stop the integration early. Returns the final state
/// (at `duration`, or wherever a callback stopped it).
///
/// System signature: void sys(double t_abs, const Vec& y, Vec& dydt)
/// Callback signature: StepControl on_step(const DenseStep<N>&, const Vec& y_end)
template <int N, typename System, typename StepCallback>
Eigen::Matrix<double, N, 1> integrate_adaptive(const System& sys,
                                               Eigen::Matrix<double, N, 1> y, double epoch,
                                               double duration, const IntegratorOptions& opt,
                                               const StepCallback& on_step,
                                               double* t_reached = nullptr) {
    using Vec = Eigen::Matrix<double, N, 1>;
    using namespace dopri5;

    const double dir = duration >= 0.0 ? 1.0 : -1.0;
    double t = 0.0;

    Vec k1, k2, k3, k4, k5, k6, k7, y_new, y_stage, err_vec;
    sys(epoch, y, k1);

    auto error_norm = [&](const Vec& y0, const Vec& y1, const Vec& e) {
        double sum = 0.0;
        for (int i = 0; i < N; ++i) {
            const double sc = opt.abs_tol + opt.rel_tol * std::max(std::abs(y0[i]), std::abs(y1[i]));
            const double q = e[i] / sc;
            sum += q * q;
        }
        return std::sqrt(sum / N);
    };

    // initial step size: h1 from the magnitude of y and f, refined by a
    // forward-Euler probe (Hairer's hinit)
    double h = opt.initial_step;
    if (h == 0.0) {
        double d0 = 0.0, d1 = 0.0;
        for (int i = 0; i < N; ++i) {
            const double sc = opt.abs_tol + opt.rel_tol * std::abs(y[i]);
            d0 += (y[i] / sc) * (y[i] / sc);
            d1 += (k1[i] / sc) * (k1[i] / sc);
        }
        d0 = std::sqrt(d0 / N);
        d1 = std::sqrt(d1 / N);
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h0 = std::min(h0, std::abs(duration));
        sys(epoch + dir * h0, y + dir * h0 * k1, k2);
        double d2 = 0.0;
        for (int i = 0; i < N; ++i) {
            const double sc = opt.abs_tol + opt.rel_tol * std::abs(y[i]);
            const double q = (k2[i] - k1[i]) / sc;
            d2 += q * q;
        }
        d2 = std::sqrt(d2 / N) / h0;
        const double dmax = std::max(d1, d2);
        double h1 = dmax > 1e-15 ? std::pow(0.01 / dmax, 0.2) : std::max(1e-6, h0 * 1e-3);
        h = dir * std::min({100.0 * h0, h1, std::abs(duration), opt.max_step});
    } else {
        h = dir * std::min(std::abs(h), std::abs(duration));
    }

    long steps = 0;
    while (dir * (duration - t) > 0.0) {
        if (++steps > opt.max_steps) throw Error("integrator exceeded the step limit");
        if (dir * (t + h) > dir * duration) h = duration - t;
        if (std::abs(h) < 1e-14 * std::max(1.0, std::abs(t))) {
            throw StepSizeUnderflowError("step size underflow at t = " + std::to_string(epoch + t));
        }

        y_stage = y + h * (a21 * k1);
        sys(epoch + t + c2 * h, y_stage, k2);
        y_stage = y + h * (a31 * k1 + a32 * k2);
        sys(epoch + t + c3 * h, y_stage, k3);
        y_stage = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
        sys(epoch + t + c4 * h, y_stage, k4);
        y_stage = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
        sys(epoch + t + c5 * h, y_stage, k5);
        y_stage = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
        sys(epoch + t + h, y_stage, k6);
        y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        sys(epoch + t + h, y_new, k7);

        err_vec = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        double err = error_norm(y, y_new, err_vec);
        if (!std::isfinite(err)) err = 10.0;  // reject and shrink hard

        if (err <= 1.0) {
            DenseStep<N> step;
            step.t0 = t;
            step.h = h;
            step.r1 = y;
            step.r2 = y_new - y;
            step.r3 = h * k1 - step.r2;
            step.r4 = step.r2 - h * k7 - step.r3;
            step.r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);

            t += h;
            y = y_new;
            k1 = k7;  // FSAL

            const double grow = err < 1e-30 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2)));
            h *= grow;
            if (std::abs(h) > opt.max_step) h = dir * opt.max_step;

            if (on_step(step, y) == StepControl::Stop) break;
        } else {
            // k1 still holds f(t, y); only the trial step is discarded
            h *= std::max(0.1, 0.9 * std::pow(err, -0.2));
        }
    }
    if (t_reached) *t_reached = t;
    return y;
}

/// Convenience wrapper without per-step observation.
template <int N, typename System>
Eigen::Matrix<double, N, 1> integrate(const System& sys, const Eigen::Matrix<double, N, 1>& y0,
                                      double epoch, double duration,
                                      const IntegratorOptions& opt) {
    return integrate_adaptive<N>(
        sys, y0, epoch, duration, opt,
        [](const DenseStep<N>&, const Eigen::Matrix<double, N, 1>&) { return StepControl::Continue; });
}

/// Safeguarded Brent-style root refinement of a scalar function on [a, b]
/// with f(a), f(b) of opposite sign.
inline double refine_root(const std::function<double(double)>& f, double a, double b, double fa,
                          double fb, double xtol, int max_iter = 128) {
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    double c = a, fc = fa;
    double d = b - a, e = d;
    for (int it = 0; it < max_iter; ++it) {
        if ((fb > 0.0) == (fc > 0.0)) {
            c = a;
            fc = fa;
            d = e = b - a;
        }
        if (std::abs(fc) < std::abs(fb)) {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        const double tol = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.5 * xtol;
        const double m = 0.5 * (c - b);
        if (std::abs(m) <= tol || fb == 0.0) return b;
        if (std::abs(e) < tol || std::abs(fa) <= std::abs(fb)) {
            d = e = m;  // bisection
        } else {
            double p, q;
            const double s = fb / fa;
            if (a == c) {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                const double qq = fa / fc;
                const double rr = fb / fc;
                p = s * (2.0 * m * qq * (qq - rr) - (b - a) * (rr - 1.0));
                q = (qq - 1.0) * (rr - 1.0) * (s - 1.0);
            }
            if (p > 0.0) q = -q;
            p = std::abs(p);
            if (2.0 * p < std::min(3.0 * m * q - std::abs(tol * q), std::abs(e * q))) {
                e = d;
                d = p / q;
            } else {
                d = e = m;
            }
        }
        a = b;
        fa = fb;
        b += std::abs(d) > tol ? d : (m > 0.0 ? tol : -tol);
        fb = f(b);
    }
    return b;
}

}  // namespace smallbody
