#pragma once

#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "smallbody/ocp.hpp"
#include "smallbody/poincare.hpp"
#include "smallbody/types.hpp"

// Reachable sets on the section and staged transfer planning: one directional
// optimal-control solve per angle-grid node, minimum-distance selection, stage
// chaining and the final fixed-endpoint leg.

namespace smallbody {

struct OcpProblem {
    State x0;                          // departure state (on/near the section)
    double t_f = 0.0;                  // uncontrolled section-return time
    double u_m = 0.0;                  // km/s^2
    std::array<double, 3> phi{0, 0, 0};  // direction angles on S^3
    Vec6 x_n = Vec6::Zero();           // uncontrolled terminal state
    int segments = 6;
};

struct ControlSample {
    double t;       // absolute, s
    Vec3 u;         // km/s^2
    Vec3 lambda_v;  // velocity costate at the sample
};

struct BvpSolution {
    std::vector<State> segment_states;
    std::vector<Costate> segment_costates;
    Vec4 beta = Vec4::Zero();
    std::vector<ControlSample> control;
    std::vector<double> arc_times;  // absolute
    std::vector<Vec6> arc_states;
    Vec6 terminal_state = Vec6::Zero();
    Costate terminal_costate;
    SectionPoint terminal;
    double cost = 0.0;  // reachability: J = -d^2/2; fixed endpoint: control energy
    double residual_continuity = 0.0;
    double residual_terminal = 0.0;
    double residual_transversality = 0.0;
    double hamiltonian_min = 0.0;
    double hamiltonian_max = 0.0;
    double max_control_magnitude = 0.0;
    double t_f = 0.0;
    double u_m = 0.0;
    bool min_energy_law = false;
    Eigen::VectorXd unknowns;  // solver vector, reused for warm starts
};

struct BvpOptions {
    ShootingOptions shooting;
    int cold_retries = 3;
    double cold_scale = 1e-3;  // magnitude of random initial-costate draws
    std::uint64_t seed = 0;
};

namespace detail {

inline double uniform_pm1(std::mt19937_64& rng) {
    return 2.0 * ((rng() >> 11) * 0x1.0p-53) - 1.0;
}

/// Re-propagates converged segments collecting arc states, control samples
/// and Hamiltonian bounds.
inline void collect_arc_diagnostics(BvpSolution& sol, const AugmentedSystem& sys,
                                    const State& x0, const ShootingOptions& opt) {
    const int m = static_cast<int>(sol.segment_states.size());
    const double seg = sol.t_f / m;
    sol.arc_times.clear();
    sol.arc_states.clear();
    sol.control.clear();
    double h_min = std::numeric_limits<double>::infinity();
    double h_max = -h_min;
    double u_err = 0.0;

    auto record = [&](double t_abs, const Vec12& y) {
        sol.arc_times.push_back(t_abs);
        sol.arc_states.push_back(y.head<6>());
        const Vec3 lv = y.tail<3>();
        const Vec3 u = sys.control(lv);
        sol.control.push_back({t_abs, u, lv});
        const double h = sys.hamiltonian(y);
        h_min = std::min(h_min, h);
        h_max = std::max(h_max, h);
        u_err = std::max(u_err, u.norm());
        if (detail::collision_at(y.head<3>(), *sys.p, opt.collision_guard_factor)) {
            throw CollisionError("converged arc passes through the body");
        }
    };

    for (int k = 0; k < m; ++k) {
        const double t_start = x0.t + k * seg;
        Vec12 y0;
        y0 << sol.segment_states[k].vec(), sol.segment_costates[k].vec();
        if (k == 0) record(t_start, y0);
        auto observer = [&](const DenseStep<12>& step, const Vec12& y) {
            record(t_start + step.t_end(), y);
            return StepControl::Continue;
        };
        integrate_adaptive<12>(sys, y0, t_start, seg, opt.integ, observer);
    }
    sol.hamiltonian_min = h_min;
    sol.hamiltonian_max = h_max;
    sol.max_control_magnitude = u_err;
}

inline Vec6 random_costate(std::mt19937_64& rng, double scale) {
    Vec6 l;
    for (int i = 0; i < 6; ++i) l[i] = scale * uniform_pm1(rng);
    return l;
}

/// Physical row weights for the shooting merit: velocity rows count in units
/// of the characteristic speed and position-costate rows in units of the
/// horizon, so equally "wrong" rows weigh equally.
inline Eigen::VectorXd continuity_row_weights(int segments, double t_char, double v_char) {
    Eigen::VectorXd w(12 * (segments - 1));
    int idx = 0;
    for (int k = 1; k < segments; ++k) {
        for (int i = 0; i < 3; ++i) w[idx++] = 1.0;
        for (int i = 0; i < 3; ++i) w[idx++] = 1.0 / v_char;
        for (int i = 0; i < 3; ++i) w[idx++] = t_char;
        for (int i = 0; i < 3; ++i) w[idx++] = 1.0;
    }
    return w;
}

/// Inverse of s3_direction: spherical angles of a unit 4-vector.
inline std::array<double, 3> s3_angles(const Vec4& d) {
    auto clamp1 = [](double v) { return std::max(-1.0, std::min(1.0, v)); };
    const double phi1 = std::acos(clamp1(d[0]));
    const double s1 = std::sin(phi1);
    if (s1 < 1e-12) return {phi1, 0.0, 0.0};
    const double phi2 = std::acos(clamp1(d[1] / s1));
    const double s2 = std::sin(phi2);
    if (s1 * s2 < 1e-12) return {phi1, phi2, 0.0};
    double phi3 = std::atan2(d[3], d[2]);
    if (phi3 < 0.0) phi3 += 2.0 * constants::pi;
    return {phi1, phi2, phi3};
}

inline Vec4 slerp_unit(const Vec4& a, const Vec4& b, double t) {
    const double dot = std::max(-1.0, std::min(1.0, a.dot(b)));
    const double psi = std::acos(dot);
    if (psi < 1e-9) return ((1.0 - t) * a + t * b).normalized();
    return (std::sin((1.0 - t) * psi) * a + std::sin(t * psi) * b) / std::sin(psi);
}

}  // namespace detail

/// Solves the directional reachability problem: maximize the section
/// displacement along n(phi) under the bounded-magnitude control law, with
/// multiple-shooting continuity and the transversality conditions. Throws
/// NonConvergenceError (or propagates collision/degeneracy) on failure.
inline BvpSolution solve_reachability_bvp(const OcpProblem& prob, const AsteroidParams& params,
                                          const BvpOptions& opt = {},
                                          const Eigen::VectorXd* warm_start = nullptr) {
    AugmentedSystem sys{&params, prob.u_m, false};

    // With no control authority the reachable set collapses to the ballistic
    // point and the multiplier system is singular; return the exact ballistic
    // solution instead of iterating.
    if (prob.u_m == 0.0) {
        BvpSolution sol;
        sol.t_f = prob.t_f;
        sol.u_m = 0.0;
        const double seg = prob.t_f / prob.segments;
        Vec12 y;
        y << prob.x0.vec(), Vec6::Zero();
        for (int k = 0; k < prob.segments; ++k) {
            sol.segment_states.push_back(State::from_vec(y.head<6>(), prob.x0.t + k * seg));
            sol.segment_costates.push_back(Costate::from_vec(y.tail<6>()));
            y = integrate<12>(sys, y, prob.x0.t + k * seg, seg, opt.shooting.integ);
        }
        sol.terminal_state = y.head<6>();
        sol.terminal_costate = Costate{};
        sol.beta = Vec4::Zero();
        const Vec4 delta = section_difference(sol.terminal_state, prob.x_n);
        sol.cost = -0.5 * delta.squaredNorm();
        sol.terminal = project_to_section(State::from_vec(sol.terminal_state, prob.x0.t + prob.t_f));
        detail::collect_arc_diagnostics(sol, sys, prob.x0, opt.shooting);
        sol.unknowns = Eigen::VectorXd::Zero(6 + 12 * (prob.segments - 1) + 5);
        return sol;
    }

    const double t_char = prob.t_f;
    const double v_char = params.spin_rate * 1.0;  // km/s per km at the spin rate

    // The ray-constrained system works with the normalized costate
    // lambda/kappa (the control law is homogeneous of degree zero in lambda):
    // extras are the four constraint multipliers plus the scale kappa, and
    // the unit-norm row on the initial costate closes the system.
    // m_offset relaxes the tangent rows during the cold-start homotopy; it is
    // zero for the problem actually being solved.
    Vec3 m_offset = Vec3::Zero();
    ShootingProblem shooting;
    shooting.params = &params;
    shooting.system = sys;
    shooting.x0 = prob.x0;
    shooting.t_f = prob.t_f;
    shooting.segments = prob.segments;
    shooting.extra_count = 5;
    shooting.terminal_rows = 10;
    shooting.normalize_initial_costate = true;
    shooting.terminal = [&prob, &m_offset](const Vec12& endpoint,
                                           const Eigen::VectorXd& extras) {
        Eigen::VectorXd out(10);
        out = terminal_residuals_scaled(endpoint.head<6>(), endpoint.tail<6>(), prob.x_n,
                                        prob.phi, Vec4(extras.head<4>()), extras[4]);
        out.segment<3>(1) -= m_offset;
        return out;
    };
    {
        Eigen::VectorXd w(6 + 12 * (prob.segments - 1) + 5);
        w.head(12 * (prob.segments - 1)) =
            detail::continuity_row_weights(prob.segments, t_char, v_char);
        int idx = 12 * (prob.segments - 1);
        for (int i = 0; i < 4; ++i) w[idx++] = 1.0;                    // m rows
        for (int i = 0; i < 3; ++i) w[idx++] = t_char;                 // trans lambda_r
        for (int i = 0; i < 3; ++i) w[idx++] = 1.0;                    // trans lambda_v
        w[idx++] = 1.0;                                                // norm row
        shooting.residual_weights = w;
    }

    MultipleShootingSolver solver(shooting, opt.shooting);

    std::mt19937_64 rng(opt.seed);
    ShootingResult result;
    bool solved = false;
    std::string last_error = "no attempts";

    if (warm_start && warm_start->size() == solver.unknown_count()) {
        try {
            result = solver.solve(*warm_start);
            solved = true;
        } catch (const Error& e) {
            last_error = e.what();
        }
    }

    // Cold start in two phases. Phase one solves the support problem of the
    // attainable set -- maximize n . delta with the terminal costate pinned at
    // lambda_f = -Q n + beta1 e_y -- whose linear terminal conditions make it
    // the robust entry point; the costate profile comes from a backward sweep
    // of that terminal condition. The support solution is exactly the ray
    // solution for the direction it achieves, so phase two walks the ray
    // system from that direction to the requested angles and polishes.
    const int m_seg = prob.segments;
    const double seg = prob.t_f / m_seg;

    // The support system is solved in costate units of the backward-sweep
    // scale s_hat (lambda_raw = s_hat * lambda_solved), keeping every unknown
    // O(1); beta1 is scaled the same way.
    ShootingProblem support = shooting;
    Vec4 support_dir = s3_direction(prob.phi);
    double support_scale = 1.0;
    support.extra_count = 1;
    support.terminal_rows = 7;
    support.normalize_initial_costate = false;
    support.terminal = [&support_dir, &support_scale](const Vec12& endpoint,
                                                      const Eigen::VectorXd& extras) {
        Eigen::VectorXd out(7);
        out[0] = endpoint[1];  // terminal state on the section
        Vec6 trans =
            endpoint.tail<6>() + embed_section_difference(support_dir) / support_scale;
        trans[1] -= extras[0];
        out.tail<6>() = trans;
        return out;
    };
    {
        Eigen::VectorXd w(6 + 12 * (m_seg - 1) + 1);
        w.head(12 * (m_seg - 1)) = detail::continuity_row_weights(m_seg, t_char, v_char);
        int idx = 12 * (m_seg - 1);
        w[idx++] = 1.0;                                 // y row
        for (int i = 0; i < 3; ++i) w[idx++] = t_char;  // trans lambda_r
        for (int i = 0; i < 3; ++i) w[idx++] = 1.0;     // trans lambda_v
        support.residual_weights = w;
    }

    auto support_guess = [&](double noise) -> Eigen::VectorXd {
        AugmentedSystem gsys = sys;
        gsys.soften = 0.05;  // keeps the backward sweep defined at lambda_v ~ 0
        Vec6 lambda_f = -embed_section_difference(support_dir);
        for (int i = 0; i < 6; ++i) {
            lambda_f[i] += std::max(noise, 0.02) * detail::uniform_pm1(rng);
        }
        std::vector<Vec6> lam(m_seg + 1);
        lam[m_seg] = lambda_f;
        Vec12 y;
        y << prob.x_n, lambda_f;
        for (int k = m_seg - 1; k >= 0; --k) {
            y = integrate<12>(gsys, y, prob.x0.t + (k + 1) * seg, -seg, opt.shooting.integ);
            lam[k] = y.tail<6>();
        }
        support_scale = lam[0].norm();
        for (auto& l : lam) l /= support_scale;
        Eigen::VectorXd z = Eigen::VectorXd::Zero(6 + 12 * (m_seg - 1) + 1);
        z.head<6>() = lam[0];
        Vec12 yf;
        yf << prob.x0.vec(), lam[0];
        for (int k = 0; k + 1 < m_seg; ++k) {
            yf = integrate<12>(gsys, yf, prob.x0.t + k * seg, seg, opt.shooting.integ);
            yf.tail<6>() = lam[k + 1];
            z.segment<12>(6 + 12 * k) = yf;
        }
        return z;
    };

    for (int attempt = 0; attempt < std::max(1, opt.cold_retries) && !solved; ++attempt) {
        try {
            // phase 1: support solve, sharpening the softened law away
            ShootingOptions rung_opt = opt.shooting;
            rung_opt.tol = 1e-7;
            rung_opt.max_iter = 40;
            Eigen::VectorXd zs = support_guess(0.3 * attempt);
            AugmentedSystem rung_sys = sys;
            for (double soften : {0.05, 0.005, 0.0}) {
                rung_sys.soften = soften;
                support.system = rung_sys;
                if (opt.shooting.trace) {
                    std::fprintf(stderr, " support soften=%.3e\n", soften);
                }
                zs = MultipleShootingSolver(support, rung_opt).solve(zs).z;
            }
            support.system = sys;
            MultipleShootingSolver support_solver(support, rung_opt);
            std::vector<Vec12> support_ep;
            support_solver.eval_residual(zs, &support_ep);

            // the support point satisfies the ray system with the tangent
            // rows offset by their achieved values; relax that offset to zero
            const Vec4 delta_s = section_difference(support_ep.back().head<6>(), prob.x_n);
            if (delta_s.norm() < 1e-14) {
                throw NonConvergenceError("support solve reached zero displacement");
            }
            const Vec4 n_node = s3_direction(prob.phi);
            const auto t_node = s3_tangent_basis(n_node);
            const Vec3 r0 = t_node.transpose() * delta_s;

            // re-normalize the support costate so |lambda(t0)| = 1 in the
            // ray system's variables
            const double lam0_norm = zs.head<6>().norm();
            Eigen::VectorXd z = Eigen::VectorXd::Zero(solver.unknown_count());
            z.head<6>() = zs.head<6>() / lam0_norm;
            for (int k = 0; k + 1 < m_seg; ++k) {
                Vec12 node = zs.segment<12>(6 + 12 * k);
                node.tail<6>() /= lam0_norm;
                z.segment<12>(6 + 12 * k) = node;
            }
            // kappa and beta from the ray transversality at the support point
            // (consistent by construction, solved in least squares)
            {
                Eigen::Matrix<double, 6, 5> a;
                a.col(0) = support_ep.back().tail<6>() / lam0_norm;
                a.col(1) = Vec6::Unit(1);
                for (int c = 0; c < 3; ++c) {
                    a.col(2 + c) = embed_section_difference(t_node.col(c));
                }
                const Vec6 rhs = -embed_section_difference(delta_s);
                // the fit returns (kappa, -kappa beta), since
                // kappa lambda_f + (-kappa beta1) e_y + ... = -Q delta
                Eigen::Matrix<double, 5, 1> kb = a.colPivHouseholderQr().solve(rhs);
                if (!(kb[0] > 0.0)) kb[0] = std::abs(kb[0]) + 1e-12;
                z.segment<4>(z.size() - 5) = -kb.tail<4>() / kb[0];  // beta-tilde
                z[z.size() - 1] = kb[0];                             // kappa
            }

            // Phase 2: adaptive homotopy on the tangent-row offset. The
            // support solution for position-dominant directions has
            // lambda_v(t_f) = 0 exactly (free terminal velocity), which is
            // the kink of the normalized law, so the walk runs lightly
            // softened and sharpens at the end.
            ShootingOptions walk_opt = opt.shooting;
            walk_opt.tol = std::max(opt.shooting.tol, 1e-7);
            walk_opt.max_iter = 30;
            AugmentedSystem walk_sys = sys;
            walk_sys.soften = 3e-5;  // normalized-costate units
            shooting.system = walk_sys;
            double s_done = 0.0;
            double ds = 0.25;
            Eigen::VectorXd z_good = z;
            while (s_done < 1.0) {
                const double s_try = std::min(1.0, s_done + ds);
                m_offset = (1.0 - s_try) * r0;
                if (opt.shooting.trace) {
                    std::fprintf(stderr, " homotopy s=%.4f (ds=%.4f)\n", s_try, ds);
                }
                try {
                    z = MultipleShootingSolver(shooting, walk_opt).solve(z_good).z;
                    z_good = z;
                    s_done = s_try;
                    ds = std::min(0.5, 1.6 * ds);
                } catch (const Error&) {
                    ds *= 0.5;
                    if (ds < 1.0 / 128.0) throw;
                }
            }
            m_offset = Vec3::Zero();
            for (double soften : {1e-5, 1e-6, 1e-7}) {
                walk_sys.soften = soften;
                shooting.system = walk_sys;
                if (opt.shooting.trace) std::fprintf(stderr, " sharpen soften=%.1e\n", soften);
                z = MultipleShootingSolver(shooting, walk_opt).solve(z).z;
            }
            if (opt.shooting.trace) std::fprintf(stderr, " polish\n");
            shooting.system = sys;
            result = solver.solve(z);
            solved = true;
        } catch (const Error& e) {
            last_error = e.what();
        }
    }
    if (!solved) throw NonConvergenceError("reachability BVP failed: " + last_error);

    BvpSolution sol;
    sol.t_f = prob.t_f;
    sol.u_m = prob.u_m;
    sol.unknowns = result.z;
    const double kappa = result.z[result.z.size() - 1];
    for (int k = 0; k < prob.segments; ++k) {
        sol.segment_states.push_back(
            State::from_vec(result.nodes[k].head<6>(), prob.x0.t + k * seg));
        sol.segment_costates.push_back(Costate::from_vec(kappa * result.nodes[k].tail<6>()));
    }
    sol.beta = kappa * Vec4(result.z.segment<4>(result.z.size() - 5));
    sol.terminal_state = result.endpoints.back().head<6>();
    sol.terminal_costate =
        Costate::from_vec(kappa * result.endpoints.back().tail<6>());

    const int n_cont = 12 * (prob.segments - 1);
    sol.residual_continuity =
        n_cont > 0 ? result.residual.head(n_cont).lpNorm<Eigen::Infinity>() : 0.0;
    sol.residual_terminal = result.residual.segment(n_cont, 4).lpNorm<Eigen::Infinity>();
    sol.residual_transversality =
        result.residual.segment(n_cont + 4, 6).lpNorm<Eigen::Infinity>();

    const Vec4 delta = section_difference(sol.terminal_state, prob.x_n);
    sol.cost = -0.5 * delta.squaredNorm();
    sol.terminal = project_to_section(State::from_vec(sol.terminal_state, prob.x0.t + prob.t_f));
    detail::collect_arc_diagnostics(sol, sys, prob.x0, opt.shooting);
    return sol;
}

/// Fixed-endpoint transfer under the saturated minimum-energy law. Falls back
/// to a homotopy from the ballistic terminal state toward x_t; if the
/// homotopy cannot reach x_t the transfer is reported infeasible at this
/// control bound.
inline BvpSolution solve_fixed_endpoint_transfer(const State& x0, const Vec6& x_t, double t_f,
                                                 double u_m, const AsteroidParams& params,
                                                 const BvpOptions& opt = {}) {
    AugmentedSystem sys{&params, u_m, true};

    ShootingProblem shooting;
    shooting.params = &params;
    shooting.system = sys;
    shooting.x0 = x0;
    shooting.t_f = t_f;
    shooting.segments = 6;
    shooting.extra_count = 0;

    Vec6 target = x_t;
    shooting.terminal = [&target](const Vec12& endpoint, const Eigen::VectorXd&) {
        Eigen::VectorXd res(6);
        res = endpoint.head<6>() - target;
        return res;
    };

    MultipleShootingSolver solver(shooting, opt.shooting);
    std::mt19937_64 rng(opt.seed);

    auto try_solve = [&](const Eigen::VectorXd& z0, ShootingResult& out) {
        try {
            out = solver.solve(z0);
            return true;
        } catch (const Error&) {
            return false;
        }
    };

    ShootingResult result;
    bool solved = false;

    // direct attempts: ballistic costate then random draws
    Eigen::VectorXd z0 = solver.initial_guess(Vec6::Zero());
    solved = try_solve(z0, result);
    for (int i = 0; i < opt.cold_retries && !solved; ++i) {
        solved = try_solve(
            solver.initial_guess(detail::random_costate(rng, std::max(u_m, 1e-9))), result);
    }

    if (!solved) {
        // homotopy on the terminal state from the ballistic endpoint
        BallisticSystem ball{params};
        const Vec6 x_ballistic =
            integrate<6>(ball, x0.vec(), x0.t, t_f, opt.shooting.integ);
        const Vec6 goal = x_t;
        double s_reached = 0.0;
        Eigen::VectorXd z_warm = solver.initial_guess(Vec6::Zero());
        double s = 0.25;
        double step = 0.25;
        while (step > 0.02) {
            target = (1.0 - s) * x_ballistic + s * goal;
            ShootingResult stage_result;
            if (try_solve(z_warm, stage_result)) {
                s_reached = s;
                z_warm = stage_result.z;
                if (s >= 1.0) {
                    result = stage_result;
                    solved = true;
                    break;
                }
                s = std::min(1.0, s + step);
            } else {
                step *= 0.5;
                s = std::min(1.0, s_reached + step);
            }
        }
        target = goal;
        if (!solved) {
            throw InfeasibleTransferError(
                "fixed-endpoint transfer infeasible at control bound " + std::to_string(u_m) +
                " km/s^2 (homotopy stalled at fraction " + std::to_string(s_reached) + ")");
        }
    }

    BvpSolution sol;
    sol.t_f = t_f;
    sol.u_m = u_m;
    sol.min_energy_law = true;
    sol.unknowns = result.z;
    const double seg = t_f / shooting.segments;
    for (int k = 0; k < shooting.segments; ++k) {
        sol.segment_states.push_back(State::from_vec(result.nodes[k].head<6>(), x0.t + k * seg));
        sol.segment_costates.push_back(Costate::from_vec(result.nodes[k].tail<6>()));
    }
    sol.terminal_state = result.endpoints.back().head<6>();
    sol.terminal_costate = Costate::from_vec(result.endpoints.back().tail<6>());
    const int n_cont = 12 * (shooting.segments - 1);
    sol.residual_continuity = result.residual.head(n_cont).lpNorm<Eigen::Infinity>();
    sol.residual_terminal = result.residual.tail<6>().lpNorm<Eigen::Infinity>();
    detail::collect_arc_diagnostics(sol, sys, x0, opt.shooting);
    // control energy 1/2 integral |u|^2 dt by trapezoid over the samples
    double energy = 0.0;
    for (std::size_t i = 1; i < sol.control.size(); ++i) {
        const double dt = sol.control[i].t - sol.control[i - 1].t;
        energy += 0.25 * dt *
                  (sol.control[i].u.squaredNorm() + sol.control[i - 1].u.squaredNorm());
    }
    sol.cost = energy;
    return sol;
}

// ---------------------------------------------------------------------------
// Reachable-set sweeps over the angle grid
// ---------------------------------------------------------------------------

struct ReachableSetNode {
    std::array<int, 3> idx{0, 0, 0};
    std::array<double, 3> phi{0, 0, 0};
    bool converged = false;
    std::string failure;
    BvpSolution solution;
};

struct ReachableSet {
    State x0;
    double t_f = 0.0;
    double u_m = 0.0;
    Vec6 x_n = Vec6::Zero();
    std::array<int, 3> grid_steps{1, 1, 1};
    std::vector<ReachableSetNode> nodes;  // lexicographic in (i, j, k)

    int linear_index(int i, int j, int k) const {
        return (i * grid_steps[1] + j) * grid_steps[2] + k;
    }
    const ReachableSetNode& at(int i, int j, int k) const {
        return nodes[linear_index(i, j, k)];
    }
    int converged_count() const {
        int n = 0;
        for (const auto& node : nodes) n += node.converged ? 1 : 0;
        return n;
    }
};

inline std::array<double, 3> grid_angles(const std::array<int, 3>& steps, int i, int j, int k) {
    return {constants::pi * i / steps[0], constants::pi * j / steps[1],
            2.0 * constants::pi * k / steps[2]};
}

struct SweepOptions {
    BvpOptions bvp;
    SectionOptions section;  // for the uncontrolled reference leg
    int segments = 6;
    int threads = 1;
};

/// Approximates the reachable set by one directional BVP per grid node.
/// Failures are tagged per node and never abort the sweep. Nodes warm-start
/// only from lexicographically earlier neighbors, so results are
/// deterministic for a fixed seed regardless of the thread count.
inline ReachableSet sweep_reachable_set(const State& x0, const std::array<int, 3>& grid,
                                        double u_m, const AsteroidParams& params,
                                        const SweepOptions& opt = {}) {
    for (int g : grid)
        if (g < 1) throw Error("grid steps must be >= 1");

    ReachableSet set;
    set.x0 = x0;
    set.u_m = u_m;
    set.grid_steps = grid;

    {
        SectionOptions sect = opt.section;
        sect.prop.integ = opt.bvp.shooting.integ;
        auto [traj, crossings] = propagate_to_section(x0, params, 1, sect);
        (void)traj;
        set.t_f = crossings.front().t - x0.t;
        set.x_n = crossings.front().vec();
    }

    const int n_total = grid[0] * grid[1] * grid[2];
    set.nodes.resize(n_total);
    for (int i = 0; i < grid[0]; ++i)
        for (int j = 0; j < grid[1]; ++j)
            for (int k = 0; k < grid[2]; ++k) {
                auto& node = set.nodes[set.linear_index(i, j, k)];
                node.idx = {i, j, k};
                node.phi = grid_angles(grid, i, j, k);
            }

    auto solve_node = [&](ReachableSetNode& node) {
        OcpProblem prob;
        prob.x0 = x0;
        prob.t_f = set.t_f;
        prob.u_m = u_m;
        prob.phi = node.phi;
        prob.x_n = set.x_n;
        prob.segments = opt.segments;

        BvpOptions bvp = opt.bvp;
        bvp.seed = opt.bvp.seed ^ (static_cast<std::uint64_t>(node.idx[0]) << 42) ^
                   (static_cast<std::uint64_t>(node.idx[1]) << 21) ^
                   static_cast<std::uint64_t>(node.idx[2] + 1);

        // nearest earlier neighbors, phi3 direction first
        std::vector<const Eigen::VectorXd*> warm;
        const auto& [i, j, k] = node.idx;
        auto add_warm = [&](int a, int b, int c) {
            if (a < 0 || b < 0 || c < 0) return;
            const auto& n = set.at(a, b, c);
            if (n.converged) warm.push_back(&n.solution.unknowns);
        };
        add_warm(i, j, k - 1);
        add_warm(i, j - 1, k);
        add_warm(i - 1, j, k);

        std::string last_error;
        for (const auto* w : warm) {
            try {
                BvpOptions warm_opt = bvp;
                warm_opt.cold_retries = 0;
                node.solution = solve_reachability_bvp(prob, params, warm_opt, w);
                node.converged = true;
                return;
            } catch (const Error& e) {
                last_error = e.what();
            }
        }
        try {
            node.solution = solve_reachability_bvp(prob, params, bvp, nullptr);
            node.converged = true;
        } catch (const Error& e) {
            node.failure = last_error.empty() ? e.what() : e.what() + (" / " + last_error);
        }
    };

    // wave schedule: nodes in wave s = i+j+k depend only on earlier waves
    const int max_wave = (grid[0] - 1) + (grid[1] - 1) + (grid[2] - 1);
    for (int s = 0; s <= max_wave; ++s) {
        std::vector<int> wave;
        for (int i = 0; i < grid[0]; ++i)
            for (int j = 0; j < grid[1]; ++j) {
                const int k = s - i - j;
                if (k >= 0 && k < grid[2]) wave.push_back(set.linear_index(i, j, k));
            }
        const int n_threads = std::max(1, std::min<int>(opt.threads, static_cast<int>(wave.size())));
        if (n_threads == 1) {
            for (int idx : wave) solve_node(set.nodes[idx]);
        } else {
            std::vector<std::thread> pool;
            pool.reserve(n_threads);
            for (int t = 0; t < n_threads; ++t) {
                pool.emplace_back([&, t]() {
                    for (std::size_t w = t; w < wave.size(); w += n_threads) {
                        solve_node(set.nodes[wave[w]]);
                    }
                });
            }
            for (auto& th : pool) th.join();
        }
    }
    return set;
}

// ---------------------------------------------------------------------------
// Selection and transfer planning
// ---------------------------------------------------------------------------

struct SectionWeights {
    double x = 1.0;
    double z = 1.0;
    double xdot = 1.0;
    double zdot = 1.0;
};

/// Weighted distance between section points:
/// d = sqrt(kx dx^2 + kz dz^2 + kxd dxdot^2 + kzd dzdot^2).
inline double distance_on_section(const SectionPoint& p, const SectionPoint& target,
                                  const SectionWeights& k = {}) {
    if (k.x < 0.0 || k.z < 0.0 || k.xdot < 0.0 || k.zdot < 0.0 ||
        (k.x == 0.0 && k.z == 0.0 && k.xdot == 0.0 && k.zdot == 0.0)) {
        throw Error("distance weights must be non-negative and not all zero");
    }
    const double dx = p.x - target.x;
    const double dz = p.z - target.z;
    const double dxd = p.xdot - target.xdot;
    const double dzd = p.zdot - target.zdot;
    return std::sqrt(k.x * dx * dx + k.z * dz * dz + k.xdot * dxd * dxd + k.zdot * dzd * dzd);
}

struct SelectedNode {
    std::array<int, 3> idx{0, 0, 0};
    std::array<double, 3> phi{0, 0, 0};
    SectionPoint point;
    double distance = 0.0;
};

/// Exhaustive minimum of the weighted distance over converged nodes;
/// lexicographic angle order breaks ties.
inline SelectedNode select_next_stage(const ReachableSet& set, const SectionPoint& target,
                                      const SectionWeights& k = {}) {
    const ReachableSetNode* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& node : set.nodes) {  // lexicographic storage order
        if (!node.converged) continue;
        const double d = distance_on_section(node.solution.terminal, target, k);
        if (d < best_d) {
            best_d = d;
            best = &node;
        }
    }
    if (!best) throw EmptySetError("reachable set has no converged nodes");
    return {best->idx, best->phi, best->solution.terminal, best_d};
}

enum class TransferStatus { TargetReached, StageCapExceeded };

struct TransferStage {
    ReachableSet set;
    SelectedNode selected;
};

struct TransferPlan {
    std::vector<TransferStage> stages;
    TransferStatus status = TransferStatus::StageCapExceeded;
    SectionPoint target;
    double initial_distance = 0.0;
    bool final_leg_attempted = false;
    bool final_leg_converged = false;
    std::string final_leg_failure;
    BvpSolution final_leg;
    double final_t_f = 0.0;

    /// Selected distance after each stage.
    std::vector<double> stage_distances() const {
        std::vector<double> d;
        for (const auto& s : stages) d.push_back(s.selected.distance);
        return d;
    }

    /// Controlled arcs of every stage plus the final leg, in absolute time.
    std::vector<std::pair<double, Vec6>> concatenated_arc() const {
        std::vector<std::pair<double, Vec6>> arc;
        for (const auto& s : stages) {
            const auto& sol =
                s.set.nodes[s.set.linear_index(s.selected.idx[0], s.selected.idx[1],
                                               s.selected.idx[2])].solution;
            for (std::size_t i = 0; i < sol.arc_times.size(); ++i) {
                arc.emplace_back(sol.arc_times[i], sol.arc_states[i]);
            }
        }
        if (final_leg_converged) {
            for (std::size_t i = 0; i < final_leg.arc_times.size(); ++i) {
                arc.emplace_back(final_leg.arc_times[i], final_leg.arc_states[i]);
            }
        }
        return arc;
    }
};

struct TransferConfig {
    double u_m = 1.0e-7;  // km/s^2
    std::array<int, 3> grid{10, 10, 10};
    SectionWeights weights;
    int stage_cap = 4;
    double d_threshold = 1e-2;  // weighted section distance
    int segments = 6;
    int threads = 1;
    std::uint64_t seed = 0;
    double sweep_min_converged_fraction = 0.5;
    BvpOptions bvp;
    SectionOptions section;
};

/// Repeats sweep -> select -> re-seed until the selected distance drops below
/// the threshold or the stage cap is hit, then attempts the fixed-endpoint
/// leg onto the target state. A plan is returned in both outcomes, with the
/// status recording whether the threshold was met.
inline TransferPlan plan_transfer(const PeriodicOrbit& orbit_i, const PeriodicOrbit& orbit_t,
                                  const AsteroidParams& params, const TransferConfig& cfg = {}) {
    if (cfg.stage_cap < 1) throw Error("stage cap must be >= 1");
    TransferPlan plan;
    plan.target = project_to_section(orbit_t.initial);

    State current = orbit_i.initial;
    double d = distance_on_section(project_to_section(current), plan.target, cfg.weights);
    plan.initial_distance = d;

    for (int stage = 0; stage < cfg.stage_cap && d >= cfg.d_threshold; ++stage) {
        SweepOptions sweep_opt;
        sweep_opt.bvp = cfg.bvp;
        sweep_opt.bvp.seed = cfg.bvp.seed + 0x9e3779b97f4a7c15ull * (stage + 1) + cfg.seed;
        sweep_opt.section = cfg.section;
        sweep_opt.segments = cfg.segments;
        sweep_opt.threads = cfg.threads;

        ReachableSet set = sweep_reachable_set(current, cfg.grid, cfg.u_m, params, sweep_opt);
        const double frac =
            static_cast<double>(set.converged_count()) / static_cast<double>(set.nodes.size());
        if (frac < cfg.sweep_min_converged_fraction) {
            throw NonConvergenceError("stage " + std::to_string(stage) + " sweep converged on " +
                                      std::to_string(set.converged_count()) + "/" +
                                      std::to_string(set.nodes.size()) + " nodes");
        }
        SelectedNode sel = select_next_stage(set, plan.target, cfg.weights);
        current = sel.point.full_state;  // exact chaining of stages
        d = sel.distance;
        plan.stages.push_back({std::move(set), sel});
    }
    plan.status = d < cfg.d_threshold ? TransferStatus::TargetReached
                                      : TransferStatus::StageCapExceeded;

    const Vec6 x_t = orbit_t.initial.vec();
    if ((current.vec() - x_t).norm() < 1e-12) {
        // already at the target state; nothing to solve
        plan.final_leg_attempted = false;
        plan.final_leg_converged = true;
        return plan;
    }

    plan.final_leg_attempted = true;
    try {
        // horizon: one full revolution (two crossings) so the leg arrives on
        // the same side of the section as the target
        SectionOptions sect = cfg.section;
        sect.prop.integ = cfg.bvp.shooting.integ;
        plan.final_t_f = propagate_to_section(current, params, 2, sect).second.back().t - current.t;
        BvpOptions bvp = cfg.bvp;
        bvp.seed = cfg.bvp.seed ^ 0xfeedfacecafebeefull;
        plan.final_leg =
            solve_fixed_endpoint_transfer(current, x_t, plan.final_t_f, cfg.u_m, params, bvp);
        plan.final_leg_converged = true;
    } catch (const Error& e) {
        plan.final_leg_converged = false;
        plan.final_leg_failure = e.what();
    }
    return plan;
}

}  // namespace smallbody
