#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <vector>

#include "smallbody/dynamics.hpp"
#include "smallbody/poincare.hpp"
#include "smallbody/types.hpp"

// Indirect optimal control machinery: costate dynamics, the bounded-control
// laws, terminal conditions on the section, and a multiple-shooting Newton
// solver over segment states, costates and terminal multipliers.

namespace smallbody {

using Vec12 = Eigen::Matrix<double, 12, 1>;

struct Costate {
    Vec3 lambda_r{Vec3::Zero()};
    Vec3 lambda_v{Vec3::Zero()};

    Vec6 vec() const {
        Vec6 y;
        y << lambda_r, lambda_v;
        return y;
    }
    static Costate from_vec(const Vec6& y) {
        Costate c;
        c.lambda_r = y.head<3>();
        c.lambda_v = y.tail<3>();
        return c;
    }
};

/// Constant-magnitude law of the reachability legs: u = -u_m lambda_v/|lambda_v|.
inline Vec3 control_from_costate(const Vec3& lambda_v, double u_m) {
    const double n = lambda_v.norm();
    if (n <= 1e-14) {
        throw DegenerateCostateError("velocity costate vanished; thrust direction undefined");
    }
    return (-u_m / n) * lambda_v;
}

/// Minimum-energy law with saturation, used by the fixed-endpoint leg:
/// u = -lambda_v clipped to the control bound.
inline Vec3 saturated_min_energy_control(const Vec3& lambda_v, double u_m) {
    const double n = lambda_v.norm();
    if (n <= u_m) return -lambda_v;
    return (-u_m / n) * lambda_v;
}

// ---------------------------------------------------------------------------
// S^3 direction parameterization of the section difference vector
// ---------------------------------------------------------------------------

/// Unit direction on S^3 for angles phi1, phi2 in [0, pi), phi3 in [0, 2 pi).
inline Vec4 s3_direction(const std::array<double, 3>& phi) {
    const double s1 = std::sin(phi[0]), c1 = std::cos(phi[0]);
    const double s2 = std::sin(phi[1]), c2 = std::cos(phi[1]);
    const double s3 = std::sin(phi[2]), c3 = std::cos(phi[2]);
    return Vec4(c1, s1 * c2, s1 * s2 * c3, s1 * s2 * s3);
}

/// Orthonormal basis of the orthogonal complement of n in R^4, via the
/// Householder reflector taking n to (minus) the first axis.
inline Eigen::Matrix<double, 4, 3> s3_tangent_basis(const Vec4& n) {
    Vec4 w = n;
    w[0] += n[0] >= 0.0 ? 1.0 : -1.0;
    w /= w.norm();
    Eigen::Matrix<double, 4, 3> t;
    for (int c = 0; c < 3; ++c) {
        Vec4 col = -2.0 * w[c + 1] * w;
        col[c + 1] += 1.0;
        t.col(c) = col;
    }
    return t;
}

/// Section components (x, z, xdot, zdot) of a 6-state difference.
inline Vec4 section_difference(const Vec6& x_f, const Vec6& x_n) {
    const Vec6 d = x_f - x_n;
    return Vec4(d[0], d[2], d[3], d[5]);
}

inline Vec6 embed_section_difference(const Vec4& d) {
    Vec6 y = Vec6::Zero();
    y[0] = d[0];
    y[2] = d[1];
    y[3] = d[2];
    y[5] = d[3];
    return y;
}

// ---------------------------------------------------------------------------
// Augmented state/costate dynamics
// ---------------------------------------------------------------------------

struct AugmentedSystem {
    const AsteroidParams* p = nullptr;
    double u_m = 0.0;
    bool min_energy = false;  // false: constant-magnitude reachability law
    // smoothing of the normalized law, u = -u_m lambda_v / sqrt(|lambda_v|^2
    // + soften^2); used only as a continuation device, solutions are always
    // polished at soften = 0
    double soften = 0.0;

    Vec3 control(const Vec3& lambda_v) const {
        if (min_energy) return saturated_min_energy_control(lambda_v, u_m);
        if (u_m == 0.0) return Vec3::Zero();
        if (soften > 0.0) {
            const double denom = std::sqrt(lambda_v.squaredNorm() + soften * soften);
            return (-u_m / denom) * lambda_v;
        }
        return control_from_costate(lambda_v, u_m);
    }

    void operator()(double, const Vec12& y, Vec12& dy) const {
        const Vec3 r = y.head<3>();
        const Vec3 v = y.segment<3>(3);
        const Vec3 lr = y.segment<3>(6);
        const Vec3 lv = y.tail<3>();
        const FieldEvaluation field = p->gravity->evaluate_field(r);
        const double w = p->spin_rate;

        dy.head<3>() = v;
        dy.segment<3>(3) = effective_gravity(r, field, *p) + coriolis(v, *p) + control(lv);

        Mat3 big_g = field.gradient_matrix;
        big_g(0, 0) += w * w;
        big_g(1, 1) += w * w;
        dy.segment<3>(6) = -big_g * lv;  // big_g is symmetric
        dy.tail<3>() = -lr + Vec3(2.0 * w * lv.y(), -2.0 * w * lv.x(), 0.0);
    }

    /// Hamiltonian along the arc (constant for the autonomous system).
    double hamiltonian(const Vec12& y) const {
        const Vec3 r = y.head<3>();
        const Vec3 v = y.segment<3>(3);
        const Vec3 lr = y.segment<3>(6);
        const Vec3 lv = y.tail<3>();
        const FieldEvaluation field = p->gravity->evaluate_field(r);
        const Vec3 u = control(lv);
        double h = lr.dot(v) + lv.dot(effective_gravity(r, field, *p) + coriolis(v, *p) + u);
        if (min_energy) h += 0.5 * u.squaredNorm();
        return h;
    }
};

/// Exact Jacobian of the augmented dynamics with respect to (x, lambda).
inline Eigen::Matrix<double, 12, 12> augmented_jacobian(const AugmentedSystem& sys,
                                                        const Vec12& y) {
    const AsteroidParams& p = *sys.p;
    const Vec3 r = y.head<3>();
    const Vec3 lv = y.tail<3>();
    const double w = p.spin_rate;
    const FieldEvaluation field = p.gravity->evaluate_field(r);

    Mat3 big_g = field.gradient_matrix;
    big_g(0, 0) += w * w;
    big_g(1, 1) += w * w;
    Mat3 coriolis_m = Mat3::Zero();
    coriolis_m(0, 1) = 2.0 * w;
    coriolis_m(1, 0) = -2.0 * w;

    Mat3 du_dlv = Mat3::Zero();
    if (sys.min_energy) {
        const double n = lv.norm();
        if (n <= sys.u_m) {
            du_dlv = -Mat3::Identity();
        } else {
            du_dlv = -(sys.u_m / n) * (Mat3::Identity() - (lv * lv.transpose()) / (n * n));
        }
    } else if (sys.u_m > 0.0) {
        const double s2 = lv.squaredNorm() + sys.soften * sys.soften;
        const double s = std::sqrt(s2);
        if (s <= 1e-14) {
            throw DegenerateCostateError("velocity costate vanished in the Jacobian");
        }
        du_dlv = -(sys.u_m / s) * (Mat3::Identity() - (lv * lv.transpose()) / s2);
    }

    Eigen::Matrix<double, 12, 12> a = Eigen::Matrix<double, 12, 12>::Zero();
    a.block<3, 3>(0, 3) = Mat3::Identity();
    a.block<3, 3>(3, 0) = big_g;
    a.block<3, 3>(3, 3) = coriolis_m;
    a.block<3, 3>(3, 9) = du_dlv;
    a.block<3, 3>(6, 0) = -p.gravity->gradient_matrix_directional_derivative(r, lv);
    a.block<3, 3>(6, 9) = -big_g;
    a.block<3, 3>(9, 6) = -Mat3::Identity();
    a.block<3, 3>(9, 9) = -coriolis_m.transpose();
    return a;
}

/// Augmented state plus its 12x12 sensitivity matrix, used for exact
/// shooting Jacobians.
struct AugmentedSensitivitySystem {
    AugmentedSystem aug;
    using Vec156 = Eigen::Matrix<double, 156, 1>;
    using Mat12 = Eigen::Matrix<double, 12, 12>;
    void operator()(double t, const Vec156& y, Vec156& dy) const {
        Vec12 head = y.head<12>(), dhead;
        aug(t, head, dhead);
        dy.head<12>() = dhead;
        const Mat12 a = augmented_jacobian(aug, head);
        Eigen::Map<const Mat12> phi(y.data() + 12);
        Eigen::Map<Mat12> phi_dot(dy.data() + 12);
        phi_dot = a * phi;
    }
};

/// Time derivative of the 12-dimensional augmented state under the
/// reachability control law.
inline Vec12 augmented_derivative(const State& s, const Costate& lambda,
                                  const AsteroidParams& p, double u_m) {
    AugmentedSystem sys{&p, u_m, false};
    Vec12 y, dy;
    y << s.vec(), lambda.vec();
    sys(s.t, y, dy);
    return dy;
}

/// Augmented arc plus the 6x6 state-transition matrix of the state block,
/// propagated with the state Jacobian of the controlled trajectory. Used by
/// the costate/STM duality diagnostics.
struct AugmentedStmSystem {
    AugmentedSystem aug;
    using Vec48 = Eigen::Matrix<double, 48, 1>;
    void operator()(double t, const Vec48& y, Vec48& dy) const {
        Vec12 head = y.head<12>(), dhead;
        aug(t, head, dhead);
        dy.head<12>() = dhead;
        const Mat6 a = flow_jacobian(State::from_vec(head.head<6>(), t), *aug.p);
        Eigen::Map<const Mat6> phi(y.data() + 12);
        Eigen::Map<Mat6> phi_dot(dy.data() + 12);
        phi_dot = a * phi;
    }
};

// ---------------------------------------------------------------------------
// Terminal conditions
// ---------------------------------------------------------------------------

/// Stacked terminal residual of the reachability problem: the four section
/// constraints (y = 0 plus the three tangent-space components of the
/// difference vector, which force it onto the ray n(phi)), followed by the
/// six transversality components. beta holds the four constraint multipliers.
inline Eigen::Matrix<double, 10, 1> terminal_residuals(const Vec6& x_f, const Vec6& lambda_f,
                                                       const Vec6& x_n,
                                                       const std::array<double, 3>& phi,
                                                       const Vec4& beta) {
    const Vec4 n = s3_direction(phi);
    const Eigen::Matrix<double, 4, 3> t = s3_tangent_basis(n);
    const Vec4 delta = section_difference(x_f, x_n);

    Eigen::Matrix<double, 10, 1> res;
    res[0] = x_f[1];  // terminal state on the section
    res.segment<3>(1) = t.transpose() * delta;

    Vec6 trans = lambda_f + embed_section_difference(delta);  // lambda_f - dJ/dx
    trans[1] -= beta[0];                                      // y-constraint multiplier
    trans -= embed_section_difference(t * beta.tail<3>());
    res.tail<6>() = trans;
    return res;
}

/// Transversality block with an explicit costate scale kappa: the control law
/// is scale-free in lambda, so the solver works with a normalized costate
/// lambda_t = lambda / kappa and recovers the physical one afterwards.
inline Eigen::Matrix<double, 10, 1> terminal_residuals_scaled(
    const Vec6& x_f, const Vec6& lambda_f_scaled, const Vec6& x_n,
    const std::array<double, 3>& phi, const Vec4& beta_scaled, double kappa) {
    const Vec4 n = s3_direction(phi);
    const Eigen::Matrix<double, 4, 3> t = s3_tangent_basis(n);
    const Vec4 delta = section_difference(x_f, x_n);

    Eigen::Matrix<double, 10, 1> res;
    res[0] = x_f[1];
    res.segment<3>(1) = t.transpose() * delta;

    Vec6 trans = lambda_f_scaled + embed_section_difference(delta) / kappa;
    trans[1] -= beta_scaled[0];
    trans -= embed_section_difference(t * beta_scaled.tail<3>());
    res.tail<6>() = trans;
    return res;
}

// ---------------------------------------------------------------------------
// Multiple shooting
// ---------------------------------------------------------------------------

struct ShootingOptions {
    int max_iter = 50;
    double tol = 1e-11;  // infinity norm of the full residual
    IntegratorOptions integ{1e-12, 1e-12};
    double collision_guard_factor = 1.05;
    // The potential is defined everywhere off the wireframe, so intermediate
    // iterates may legally pass through the body; only converged arcs are
    // screened for collision (see the BVP wrappers).
    bool check_collision = false;
    bool trace = false;  // per-iteration diagnostics on stderr
};

/// A multiple-shooting problem over M uniform segments: unknowns are the
/// initial costate, interior segment states/costates and any terminal
/// multipliers; residuals are patch-point continuity plus a caller-supplied
/// terminal block of size 6 + extra_count.
struct ShootingProblem {
    const AsteroidParams* params = nullptr;
    AugmentedSystem system;
    State x0;
    double t_f = 0.0;
    int segments = 6;
    int extra_count = 0;    // terminal multipliers appended to the unknowns
    int terminal_rows = 6;  // rows produced by `terminal`
    // adds the unit-norm constraint |lambda0|^2 = 1 as the last residual row
    bool normalize_initial_costate = false;
    std::function<Eigen::VectorXd(const Vec12&, const Eigen::VectorXd&)> terminal;
    // optional physical row weights for the least-squares merit; empty = ones.
    // Mixing km, km/s and costate rows unweighted creates spurious stationary
    // points of |F|^2.
    Eigen::VectorXd residual_weights;
};

struct ShootingResult {
    Eigen::VectorXd z;
    std::vector<Vec12> nodes;      // segment-start augmented states (size M)
    std::vector<Vec12> endpoints;  // segment endpoints (size M)
    Eigen::VectorXd residual;
    int iterations = 0;
};

class MultipleShootingSolver {
public:
    MultipleShootingSolver(const ShootingProblem& prob, const ShootingOptions& opt)
        : prob_(prob), opt_(opt) {
        if (prob_.segments < 1) throw Error("multiple shooting needs at least one segment");
        if (!(prob_.t_f > 0.0)) throw Error("multiple shooting needs a positive horizon");
        n_unknowns_ = 6 + 12 * (prob_.segments - 1) + prob_.extra_count;
        const int rows = 12 * (prob_.segments - 1) + prob_.terminal_rows +
                         (prob_.normalize_initial_costate ? 1 : 0);
        if (rows != n_unknowns_) {
            throw Error("shooting problem is not square: " + std::to_string(rows) +
                        " residual rows vs " + std::to_string(n_unknowns_) + " unknowns");
        }
    }

    int unknown_count() const { return n_unknowns_; }

    /// Unknown vector from an initial costate guess: interior nodes are
    /// filled by propagating the augmented system, extras start at zero.
    Eigen::VectorXd initial_guess(const Vec6& lambda0) const {
        Eigen::VectorXd z = Eigen::VectorXd::Zero(n_unknowns_);
        z.head<6>() = lambda0;
        Vec12 y;
        y << prob_.x0.vec(), lambda0;
        for (int k = 0; k + 1 < prob_.segments; ++k) {
            y = propagate_segment(k, y);
            z.segment<12>(6 + 12 * k) = y;
        }
        return z;
    }

    Vec12 node_state(const Eigen::VectorXd& z, int k) const {
        if (k == 0) {
            Vec12 y;
            y << prob_.x0.vec(), z.head<6>();
            return y;
        }
        return z.segment<12>(6 + 12 * (k - 1));
    }

    Eigen::VectorXd extras(const Eigen::VectorXd& z) const { return z.tail(prob_.extra_count); }

    /// One segment of the augmented flow, with collision guarding.
    Vec12 propagate_segment(int k, const Vec12& y0) const {
        const double seg = prob_.t_f / prob_.segments;
        const double t_start = prob_.x0.t + k * seg;
        auto observer = [&](const DenseStep<12>& step, const Vec12& y) {
            if (opt_.check_collision &&
                detail::collision_at(y.head<3>(), *prob_.params, opt_.collision_guard_factor)) {
                throw CollisionError("shooting segment " + std::to_string(k) + " hit the body");
            }
            (void)step;
            return StepControl::Continue;
        };
        return integrate_adaptive<12>(prob_.system, y0, t_start, seg, opt_.integ, observer);
    }

    Eigen::VectorXd eval_residual(const Eigen::VectorXd& z, std::vector<Vec12>* endpoints_out =
                                                               nullptr) const {
        const int m = prob_.segments;
        std::vector<Vec12> ep(m);
        for (int k = 0; k < m; ++k) ep[k] = propagate_segment(k, node_state(z, k));
        Eigen::VectorXd f(n_unknowns_);
        for (int k = 1; k < m; ++k) {
            f.segment<12>(12 * (k - 1)) = ep[k - 1] - node_state(z, k);
        }
        f.segment(12 * (m - 1), prob_.terminal_rows) = prob_.terminal(ep[m - 1], extras(z));
        if (prob_.normalize_initial_costate) {
            f[n_unknowns_ - 1] = z.head<6>().squaredNorm() - 1.0;
        }
        if (endpoints_out) *endpoints_out = std::move(ep);
        return f;
    }

    /// Damped Gauss-Newton (Levenberg-Marquardt) iteration on the shooting
    /// residual with physical row weights, column equilibration and the
    /// Nielsen gain-ratio update of the diagonal shift. The costate block
    /// leaves the plain Newton system extremely ill-conditioned (the control
    /// law is scale-free in lambda), which is what the scaling layers tame.
    ShootingResult solve(const Eigen::VectorXd& z0) const {
        const int m = prob_.segments;
        const int n = n_unknowns_;
        Eigen::VectorXd w_row = prob_.residual_weights.size() == n
                                    ? prob_.residual_weights
                                    : Eigen::VectorXd::Ones(n);
        Eigen::VectorXd z = z0;
        std::vector<Vec12> endpoints;
        Eigen::VectorXd f = eval_residual(z, &endpoints);
        double mu = -1.0;  // initialized from the first scaled normal matrix
        double nu = 2.0;

        if (opt_.trace) {
            int worst = 0;
            f.cwiseAbs().maxCoeff(&worst);
            std::fprintf(stderr, "  shoot start: |F|2=%.3e |F|inf=%.3e worst_row=%d\n", f.norm(),
                         f.lpNorm<Eigen::Infinity>(), worst);
        }
        for (int iter = 0; iter < opt_.max_iter; ++iter) {
            if (f.lpNorm<Eigen::Infinity>() < opt_.tol) {
                ShootingResult out;
                out.z = z;
                out.endpoints = endpoints;
                out.nodes.resize(m);
                for (int k = 0; k < m; ++k) out.nodes[k] = node_state(z, k);
                out.residual = f;
                out.iterations = iter;
                return out;
            }

            const Eigen::MatrixXd jac_w = w_row.asDiagonal() * build_jacobian(z, f, endpoints);
            const Eigen::VectorXd f_w = w_row.asDiagonal() * f;
            Eigen::VectorXd col_scale(n);
            double max_col = 0.0;
            for (int j = 0; j < n; ++j) max_col = std::max(max_col, jac_w.col(j).norm());
            for (int j = 0; j < n; ++j)
                col_scale[j] = std::max(jac_w.col(j).norm(), 1e-10 * max_col);
            const Eigen::MatrixXd jac_s = jac_w * col_scale.cwiseInverse().asDiagonal();
            const Eigen::MatrixXd jtj = jac_s.transpose() * jac_s;
            const Eigen::VectorXd jtf = jac_s.transpose() * f_w;
            if (mu < 0.0) mu = 1e-6 * jtj.diagonal().maxCoeff();

            bool accepted = false;
            double dz_norm = 0.0;
            for (int inner = 0; inner < 30 && !accepted; ++inner) {
                Eigen::MatrixXd lhs = jtj;
                lhs.diagonal().array() += mu;
                const Eigen::VectorXd w = lhs.ldlt().solve(-jtf);
                const Eigen::VectorXd dz = col_scale.cwiseInverse().asDiagonal() * w;
                dz_norm = dz.norm();
                if (!dz.allFinite()) {
                    mu *= nu;
                    nu *= 2.0;
                    continue;
                }
                const double predicted =
                    f_w.squaredNorm() - (f_w + jac_w * dz).squaredNorm();
                try {
                    std::vector<Vec12> trial_ep;
                    const Eigen::VectorXd f_trial = eval_residual(z + dz, &trial_ep);
                    const double actual =
                        f_w.squaredNorm() -
                        (w_row.asDiagonal() * f_trial).squaredNorm();
                    if (f_trial.allFinite() && actual > 0.0) {
                        const double rho = predicted > 0.0 ? actual / predicted : 1.0;
                        z += dz;
                        f = f_trial;
                        endpoints = std::move(trial_ep);
                        mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
                        nu = 2.0;
                        accepted = true;
                    } else {
                        mu *= nu;
                        nu *= 2.0;
                    }
                } catch (const Error&) {
                    // collision / singular control / step underflow: damp harder
                    mu *= nu;
                    nu *= 2.0;
                }
            }
            if (opt_.trace) {
                int worst = 0;
                f.cwiseAbs().maxCoeff(&worst);
                std::fprintf(
                    stderr,
                    "  shoot iter %2d: |F|2=%.3e |F|inf=%.3e mu=%.2e |dz|=%.3e worst_row=%d%s\n",
                    iter, f.norm(), f.lpNorm<Eigen::Infinity>(), mu, dz_norm, worst,
                    accepted ? "" : " (stalled)");
            }
            if (!accepted) {
                if (opt_.trace) {
                    const Eigen::MatrixXd jac_dump =
                        w_row.asDiagonal() * build_jacobian(z, f, endpoints);
                    Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac_dump, Eigen::ComputeFullU |
                                                                        Eigen::ComputeFullV);
                    std::fprintf(stderr, "  STALL svd: max %.2e min %.2e ; null z-comps:",
                                 svd.singularValues()(0), svd.singularValues()(n - 1));
                    const Eigen::VectorXd v = svd.matrixV().col(n - 1);
                    for (int i = 0; i < n; ++i) {
                        if (std::abs(v[i]) > 0.2) std::fprintf(stderr, " z[%d]=%.2f", i, v[i]);
                    }
                    std::fprintf(stderr, "\n  null F-rows:");
                    const Eigen::VectorXd u = svd.matrixU().col(n - 1);
                    for (int i = 0; i < n; ++i) {
                        if (std::abs(u[i]) > 0.2) std::fprintf(stderr, " F[%d]=%.2f", i, u[i]);
                    }
                    int wr = 0, wc = 0;
                    u.cwiseAbs().maxCoeff(&wr);
                    v.cwiseAbs().maxCoeff(&wc);
                    std::fprintf(stderr, "\n  row %d norm=%.3e col %d norm=%.3e f[%d]=%.3e\n", wr,
                                 jac_dump.row(wr).norm(), wc, jac_dump.col(wc).norm(), wr, f[wr]);
                    // finite-difference audit of the worst row
                    const Eigen::MatrixXd jac_raw = build_jacobian(z, f, endpoints);
                    double worst_rel = 0.0;
                    int worst_col = -1;
                    for (int j = 0; j < n; ++j) {
                        const double h = 1e-6 * std::abs(z[j]) + 1e-8;
                        Eigen::VectorXd zp = z;
                        zp[j] += h;
                        double fd = 0.0;
                        try {
                            fd = (eval_residual(zp)[wr] - f[wr]) / h;
                        } catch (const Error&) {
                            continue;
                        }
                        const double rel = std::abs(fd - jac_raw(wr, j)) /
                                           std::max(1e-4 * jac_raw.row(wr).norm(), std::abs(fd));
                        if (rel > worst_rel) {
                            worst_rel = rel;
                            worst_col = j;
                            std::fprintf(stderr, "   col %d: fd=%.6e jac=%.6e\n", j, fd,
                                         jac_raw(wr, j));
                        }
                    }
                    std::fprintf(stderr, "  row %d FD audit: worst rel err %.3e at col %d\n", wr,
                                 worst_rel, worst_col);
                }
                std::ostringstream os;
                os << "shooting iteration stalled at residual " << f.norm();
                throw NonConvergenceError(os.str());
            }
        }
        std::ostringstream os;
        os << "multiple shooting did not converge in " << opt_.max_iter
           << " iterations (residual " << f.lpNorm<Eigen::Infinity>() << ")";
        throw NonConvergenceError(os.str());
    }

    /// Sensitivity of one segment's endpoint to its initial augmented state,
    /// via the exact variational equations.
    Eigen::Matrix<double, 12, 12> segment_stm(int k, const Vec12& y0) const {
        using Vec156 = AugmentedSensitivitySystem::Vec156;
        const double seg = prob_.t_f / prob_.segments;
        Vec156 y;
        y.head<12>() = y0;
        Eigen::Map<Eigen::Matrix<double, 12, 12>>(y.data() + 12).setIdentity();
        AugmentedSensitivitySystem sys{prob_.system};
        const Vec156 yf =
            integrate<156>(sys, y, prob_.x0.t + k * seg, seg, opt_.integ);
        return Eigen::Map<const Eigen::Matrix<double, 12, 12>>(yf.data() + 12);
    }

    Eigen::MatrixXd build_jacobian(const Eigen::VectorXd& z, const Eigen::VectorXd& f,
                                   const std::vector<Vec12>& endpoints) const {
        const int m = prob_.segments;
        const int n = n_unknowns_;
        const int term_rows = prob_.terminal_rows;
        const int term_offset = 12 * (m - 1);
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
        const Eigen::VectorXd beta = extras(z);

        // terminal block sensitivity to the final endpoint (cheap algebra,
        // differenced componentwise)
        Eigen::MatrixXd term_dep(term_rows, 12);
        {
            const Vec12& ep = endpoints[m - 1];
            const Eigen::VectorXd base = f.segment(term_offset, term_rows);
            for (int c = 0; c < 12; ++c) {
                const double h = 1e-7 * std::abs(ep[c]) + 1e-9;
                Vec12 ep_pert = ep;
                ep_pert[c] += h;
                term_dep.col(c) = (prob_.terminal(ep_pert, beta) - base) / h;
            }
        }

        for (int k = 0; k < m; ++k) {
            const Eigen::Matrix<double, 12, 12> stm = segment_stm(k, node_state(z, k));
            const int col0 = k == 0 ? 0 : 6 + 12 * (k - 1);
            const int ncols = k == 0 ? 6 : 12;
            // for the initial segment only the costate half varies
            Eigen::MatrixXd cols;
            if (k == 0) {
                cols = stm.rightCols<6>();
            } else {
                cols = stm;
            }
            if (k + 1 < m) {
                jac.block(12 * k, col0, 12, ncols) = cols;
            } else {
                jac.block(term_offset, col0, term_rows, ncols) = term_dep * cols;
            }
            if (k >= 1) {
                jac.block(12 * (k - 1), col0, 12, 12) -=
                    Eigen::Matrix<double, 12, 12>::Identity();
            }
        }

        // terminal multipliers: only the terminal block depends on them
        for (int c = 0; c < prob_.extra_count; ++c) {
            const int col = n - prob_.extra_count + c;
            const double h = 1e-7 * std::abs(z[col]) + 1e-9;
            Eigen::VectorXd beta_pert = beta;
            beta_pert[c] += h;
            const Eigen::VectorXd term = prob_.terminal(endpoints[m - 1], beta_pert);
            jac.block(term_offset, col, term_rows, 1) =
                (term - f.segment(term_offset, term_rows)) / h;
        }

        if (prob_.normalize_initial_costate) {
            jac.block(n - 1, 0, 1, 6) = 2.0 * z.head<6>().transpose();
        }
        return jac;
    }

private:
    const ShootingProblem& prob_;
    const ShootingOptions& opt_;
    int n_unknowns_;
};

}  // namespace smallbody
