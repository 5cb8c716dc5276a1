#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "smallbody/gravity.hpp"
#include "smallbody/integrate.hpp"
#include "smallbody/types.hpp"

// Spacecraft motion in the uniformly rotating body-fixed frame: equations of
// motion, Jacobi constant, state-transition dynamics, trajectory propagation
// with section-crossing and collision events.

namespace smallbody {

struct AsteroidParams {
    const GravityModel* gravity = nullptr;
    double spin_rate = 0.0;  // rad/s, rotation about body +z

    AsteroidParams() = default;
    AsteroidParams(const GravityModel& model, double omega) : gravity(&model), spin_rate(omega) {
        if (!(spin_rate > 0.0)) throw Error("spin rate must be positive");
    }
};

/// g(r): gravitational attraction plus centrifugal terms.
inline Vec3 effective_gravity(const Vec3& r, const FieldEvaluation& field,
                              const AsteroidParams& p) {
    const double w2 = p.spin_rate * p.spin_rate;
    return field.attraction + Vec3(w2 * r.x(), w2 * r.y(), 0.0);
}

/// h(v): Coriolis acceleration.
inline Vec3 coriolis(const Vec3& v, const AsteroidParams& p) {
    return Vec3(2.0 * p.spin_rate * v.y(), -2.0 * p.spin_rate * v.x(), 0.0);
}

/// Full six-dimensional state derivative under an applied control
/// acceleration u (km/s^2).
inline Vec6 state_derivative(const State& s, const Vec3& u, const AsteroidParams& p) {
    const FieldEvaluation field = p.gravity->evaluate_field(s.r);
    Vec6 d;
    d.head<3>() = s.v;
    d.tail<3>() = effective_gravity(s.r, field, p) + coriolis(s.v, p) + u;
    return d;
}

/// Conserved scalar of uncontrolled motion in the rotating frame.
inline double jacobi_constant(const State& s, const AsteroidParams& p) {
    const double w2 = p.spin_rate * p.spin_rate;
    const double potential = p.gravity->evaluate_field(s.r).potential;
    return 0.5 * w2 * (s.r.x() * s.r.x() + s.r.y() * s.r.y()) + potential -
           0.5 * s.v.squaredNorm();
}

/// Jacobian A(s) of the uncontrolled flow: [[0, I], [G, C]] with
/// G = grad grad U + omega^2 diag(1,1,0) and C the Coriolis matrix.
inline Mat6 flow_jacobian(const Vec3& r, const FieldEvaluation& field, const AsteroidParams& p) {
    const double w = p.spin_rate;
    Mat6 A = Mat6::Zero();
    A.block<3, 3>(0, 3) = Mat3::Identity();
    Mat3 G = field.gradient_matrix;
    G(0, 0) += w * w;
    G(1, 1) += w * w;
    A.block<3, 3>(3, 0) = G;
    A(3, 4) = 2.0 * w;
    A(4, 3) = -2.0 * w;
    (void)r;
    return A;
}

inline Mat6 flow_jacobian(const State& s, const AsteroidParams& p) {
    return flow_jacobian(s.r, p.gravity->evaluate_field(s.r), p);
}

/// Time derivative of the state-transition matrix: Phi_dot = A(s) Phi.
inline Mat6 variational_derivative(const State& s, const Mat6& phi, const AsteroidParams& p) {
    return flow_jacobian(s, p) * phi;
}

// ---------------------------------------------------------------------------
// System functors for the integrator
// ---------------------------------------------------------------------------

using ControlPolicy = std::function<Vec3(double)>;  // absolute time -> km/s^2

struct BallisticSystem {
    const AsteroidParams& p;
    void operator()(double, const Vec6& y, Vec6& dydt) const {
        const Vec3 r = y.head<3>();
        const Vec3 v = y.tail<3>();
        const FieldEvaluation field = p.gravity->evaluate_field(r);
        dydt.head<3>() = v;
        dydt.tail<3>() = effective_gravity(r, field, p) + coriolis(v, p);
    }
};

struct ControlledSystem {
    const AsteroidParams& p;
    const ControlPolicy& policy;
    void operator()(double t, const Vec6& y, Vec6& dydt) const {
        const Vec3 r = y.head<3>();
        const Vec3 v = y.tail<3>();
        const FieldEvaluation field = p.gravity->evaluate_field(r);
        dydt.head<3>() = v;
        dydt.tail<3>() = effective_gravity(r, field, p) + coriolis(v, p) + policy(t);
    }
};

/// 42-dimensional state + state-transition system, Phi stored column-major
/// after the state.
struct StateStmSystem {
    const AsteroidParams& p;
    using Vec42 = Eigen::Matrix<double, 42, 1>;
    void operator()(double, const Vec42& y, Vec42& dydt) const {
        const Vec3 r = y.head<3>();
        const Vec3 v = y.segment<3>(3);
        const FieldEvaluation field = p.gravity->evaluate_field(r);
        dydt.head<3>() = v;
        dydt.segment<3>(3) = effective_gravity(r, field, p) + coriolis(v, p);
        const Mat6 A = flow_jacobian(r, field, p);
        Eigen::Map<const Mat6> phi(y.data() + 6);
        Eigen::Map<Mat6> phi_dot(dydt.data() + 6);
        phi_dot = A * phi;
    }
};

// ---------------------------------------------------------------------------
// Trajectories and events
// ---------------------------------------------------------------------------

struct TrajectoryEvent {
    enum class Kind { SectionCrossing, Collision };
    Kind kind;
    double t;      // absolute time, s
    Vec6 state;
    int ydot_sign = 0;  // crossing direction for section events
};

struct Trajectory {
    double epoch = 0.0;
    std::vector<double> times;  // absolute, strictly increasing
    std::vector<Vec6> states;
    std::vector<DenseStep<6>> steps;  // dense output, times relative to epoch
    std::vector<TrajectoryEvent> events;

    const Vec6& initial_state() const { return states.front(); }
    const Vec6& final_state() const { return states.back(); }
    double final_time() const { return times.back(); }

    bool collided() const {
        return !events.empty() && events.back().kind == TrajectoryEvent::Kind::Collision;
    }

    /// Dense-output interpolation at an absolute time inside the span.
    Vec6 state_at(double t_abs) const {
        const double t = t_abs - epoch;
        if (steps.empty()) throw Error("trajectory has no dense output");
        std::size_t lo = 0, hi = steps.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (steps[mid].t_end() < t)
                lo = mid + 1;
            else
                hi = mid;
        }
        return steps[lo].at(t);
    }
};

struct PropagationOptions {
    IntegratorOptions integ;
    bool detect_collision = true;
    // collision tests run only inside this multiple of the circumscribing
    // radius; the solid-angle test is O(faces)
    double collision_guard_factor = 1.05;
};

namespace detail {

inline bool collision_at(const Vec3& r, const AsteroidParams& p, double guard_factor) {
    const double guard = guard_factor * p.gravity->geometry().circumscribing_radius;
    if (r.squaredNorm() > guard * guard) return false;
    return p.gravity->is_interior(r);
}

}  // namespace detail

/// Propagates from s0 for tf - s0.t seconds (tf > s0.t) under an optional
/// control policy. A collision truncates the trajectory with an event rather
/// than an error.
inline Trajectory propagate(const State& s0, double tf, const ControlPolicy& policy,
                            const AsteroidParams& p, const PropagationOptions& opt = {}) {
    if (!(tf > s0.t)) throw Error("propagation requires tf > t0");
    Trajectory traj;
    traj.epoch = s0.t;
    traj.times.push_back(s0.t);
    traj.states.push_back(s0.vec());

    auto observer = [&](const DenseStep<6>& step, const Vec6& y) {
        traj.steps.push_back(step);
        traj.times.push_back(s0.t + step.t_end());
        traj.states.push_back(y);
        if (opt.detect_collision &&
            detail::collision_at(y.head<3>(), p, opt.collision_guard_factor)) {
            traj.events.push_back({TrajectoryEvent::Kind::Collision, s0.t + step.t_end(), y, 0});
            return StepControl::Stop;
        }
        return StepControl::Continue;
    };

    if (policy) {
        ControlledSystem sys{p, policy};
        integrate_adaptive<6>(sys, s0.vec(), s0.t, tf - s0.t, opt.integ, observer);
    } else {
        BallisticSystem sys{p};
        integrate_adaptive<6>(sys, s0.vec(), s0.t, tf - s0.t, opt.integ, observer);
    }
    return traj;
}

struct SectionOptions {
    PropagationOptions prop;
    double transversality_min = 1e-8;  // km/s; slower crossings are skipped
    double max_time = 2.0e6;           // s past the epoch before giving up
    double escape_radius = 100.0;      // km
};

namespace detail {

/// Scans accepted steps of y(t) for sign changes of component 1 (the y
/// coordinate) and refines crossing times on the dense interpolant.
class SectionScanner {
public:
    SectionScanner(const Vec6& y0, double transversality_min)
        : transversality_min_(transversality_min) {
        prev_sign_ = sign_of(y0[1] != 0.0 ? y0[1] : y0[4]);
        last_y_ = y0[1];
    }

    /// Returns refined crossing states (relative times) found inside `step`.
    std::vector<std::pair<double, Vec6>> scan(const DenseStep<6>& step, const Vec6& y_end) {
        std::vector<std::pair<double, Vec6>> found;
        // midpoint sample catches a double crossing within one step
        const double tm = step.t0 + 0.5 * step.h;
        const double ym = step.at(tm)[1];
        const double t_pts[3] = {step.t0, tm, step.t_end()};
        const double y_pts[3] = {last_y_, ym, y_end[1]};
        for (int seg = 0; seg < 2; ++seg) {
            const int s0 = seg == 0 ? prev_sign_ : sign_of(y_pts[1]);
            const int s1 = sign_of(y_pts[seg + 1]);
            if (s0 != 0 && s1 != 0 && s0 != s1) {
                auto yfun = [&step](double t) { return step.at(t)[1]; };
                double ta = t_pts[seg];
                double fa = y_pts[seg];
                if (fa == 0.0) {
                    // started exactly on the section; nudge off the departure point
                    ta += 1e-6 * step.h;
                    fa = yfun(ta);
                    if (sign_of(fa) != s0) continue;
                }
                const double tc =
                    refine_root(yfun, ta, t_pts[seg + 1], fa, y_pts[seg + 1],
                                1e-13 * std::max(1.0, std::abs(step.t_end())));
                const Vec6 yc = step.at(tc);
                if (std::abs(yc[4]) > transversality_min_) found.emplace_back(tc, yc);
            }
        }
        prev_sign_ = sign_of(y_end[1]) != 0 ? sign_of(y_end[1]) : prev_sign_;
        last_y_ = y_end[1];
        return found;
    }

private:
    static int sign_of(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }
    int prev_sign_ = 0;
    double last_y_ = 0.0;
    double transversality_min_;
};

}  // namespace detail

/// Propagates the uncontrolled flow until `max_crossings` transversal
/// crossings of the section y = 0 have been recorded. Throws EscapeError if
/// the time bound or escape radius is hit first; collisions throw
/// CollisionError here since the caller asked for a section return.
inline std::pair<Trajectory, std::vector<State>> propagate_to_section(
    const State& s0, const AsteroidParams& p, int max_crossings,
    const SectionOptions& opt = {}) {
    Trajectory traj;
    traj.epoch = s0.t;
    traj.times.push_back(s0.t);
    traj.states.push_back(s0.vec());
    std::vector<State> crossings;

    detail::SectionScanner scanner(s0.vec(), opt.transversality_min);

    auto observer = [&](const DenseStep<6>& step, const Vec6& y) {
        traj.steps.push_back(step);
        traj.times.push_back(s0.t + step.t_end());
        traj.states.push_back(y);
        for (const auto& [tc, yc] : scanner.scan(step, y)) {
            const int sign = yc[4] > 0.0 ? 1 : -1;
            traj.events.push_back({TrajectoryEvent::Kind::SectionCrossing, s0.t + tc, yc, sign});
            crossings.push_back(State::from_vec(yc, s0.t + tc));
            if (static_cast<int>(crossings.size()) >= max_crossings) return StepControl::Stop;
        }
        if (opt.prop.detect_collision &&
            detail::collision_at(y.head<3>(), p, opt.prop.collision_guard_factor)) {
            traj.events.push_back({TrajectoryEvent::Kind::Collision, s0.t + step.t_end(), y, 0});
            return StepControl::Stop;
        }
        if (y.head<3>().norm() > opt.escape_radius) return StepControl::Stop;
        return StepControl::Continue;
    };

    BallisticSystem sys{p};
    integrate_adaptive<6>(sys, s0.vec(), s0.t, opt.max_time, opt.prop.integ, observer);

    if (static_cast<int>(crossings.size()) < max_crossings) {
        if (traj.collided()) {
            throw CollisionError("trajectory hit the body before the requested section crossing");
        }
        throw EscapeError("no section crossing within the configured bound (" +
                          std::to_string(crossings.size()) + " of " +
                          std::to_string(max_crossings) + " found)");
    }
    return {std::move(traj), std::move(crossings)};
}

/// State-transition matrix of the uncontrolled flow over [s0.t, tf],
/// propagated by the variational equations. Returns the final state and STM.
inline std::pair<State, Mat6> propagate_stm(const State& s0, double tf, const AsteroidParams& p,
                                            const IntegratorOptions& opt = {}) {
    using Vec42 = Eigen::Matrix<double, 42, 1>;
    Vec42 y0;
    y0.head<6>() = s0.vec();
    Eigen::Map<Mat6>(y0.data() + 6) = Mat6::Identity();
    StateStmSystem sys{p};
    const Vec42 yf = integrate<42>(sys, y0, s0.t, tf - s0.t, opt);
    Mat6 phi = Eigen::Map<const Mat6>(yf.data() + 6);
    return {State::from_vec(yf.head<6>(), tf), phi};
}

}  // namespace smallbody
