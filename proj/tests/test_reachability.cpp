#include <catch2/catch.hpp>

#include <random>

#include "helpers.hpp"
#include "smallbody/reachability.hpp"

using namespace smallbody;
using testutil::cube_params;

namespace {

struct CubeScenario {
    PeriodicOrbit orbit;
    double t_f;
    Vec6 x_n;
};

const CubeScenario& scenario() {
    static const CubeScenario sc = [] {
        State seed;
        seed.r = Vec3(1.5, 0.0, 0.01);
        const AsteroidParams& p = cube_params();
        seed.v = Vec3(0.0, -std::sqrt(p.gravity->mu() / 1.5) - p.spin_rate * 1.5, 0.0);
        CorrectorOptions copt;
        copt.tol = 1e-11;
        copt.integ = {1e-12, 1e-13};
        CubeScenario out;
        out.orbit = correct_periodic_orbit(seed, p, copt);
        auto [traj, crossings] = propagate_to_section(out.orbit.initial, p, 1);
        (void)traj;
        out.t_f = crossings.front().t - out.orbit.initial.t;
        out.x_n = crossings.front().vec();
        return out;
    }();
    return sc;
}

OcpProblem cube_problem(double u_m, std::array<double, 3> phi) {
    OcpProblem prob;
    prob.x0 = scenario().orbit.initial;
    prob.t_f = scenario().t_f;
    prob.u_m = u_m;
    prob.phi = phi;
    prob.x_n = scenario().x_n;
    prob.segments = 6;
    return prob;
}

constexpr double kUm = 1e-7;  // km/s^2

}  // namespace

TEST_CASE("optimal control law from the velocity costate") {
    const Vec3 u = control_from_costate(Vec3(0, 0, 2), kUm);
    CHECK((u - Vec3(0, 0, -kUm)).norm() < 1e-22);

    std::mt19937_64 rng(5);
    for (int i = 0; i < 50; ++i) {
        Vec3 lv(testutil::uniform(rng, -1, 1), testutil::uniform(rng, -1, 1),
                testutil::uniform(rng, -1, 1));
        if (lv.norm() < 1e-3) continue;
        const Vec3 u1 = control_from_costate(lv, kUm);
        CHECK(u1.norm() == Approx(kUm).epsilon(1e-15));
        const Vec3 u2 = control_from_costate(10.0 * lv, kUm);
        CHECK((u1 - u2).norm() < 1e-21);
    }
    CHECK_THROWS_AS(control_from_costate(Vec3(0, 0, 1e-15), kUm), DegenerateCostateError);
}

TEST_CASE("S^3 direction parameterization and tangent basis") {
    CHECK((s3_direction({0, 0, 0}) - Vec4(1, 0, 0, 0)).norm() < 1e-15);
    std::mt19937_64 rng(17);
    for (int i = 0; i < 40; ++i) {
        const std::array<double, 3> phi = {testutil::uniform(rng, 0, constants::pi),
                                           testutil::uniform(rng, 0, constants::pi),
                                           testutil::uniform(rng, 0, 2 * constants::pi)};
        const Vec4 n = s3_direction(phi);
        CHECK(n.norm() == Approx(1.0).epsilon(1e-14));
        const auto t = s3_tangent_basis(n);
        CHECK((t.transpose() * t - Eigen::Matrix3d::Identity()).norm() < 1e-13);
        CHECK((t.transpose() * n).norm() < 1e-13);
    }
}

TEST_CASE("Hamiltonian is conserved along augmented arcs") {
    const AsteroidParams& p = cube_params();
    AugmentedSystem sys{&p, kUm, false};
    Vec12 y0;
    y0 << scenario().orbit.initial.vec(), 1e-3 * Vec6::Ones().eval();
    const double h0 = sys.hamiltonian(y0);

    double h_min = h0, h_max = h0;
    auto observer = [&](const DenseStep<12>& step, const Vec12& y) {
        (void)step;
        const double h = sys.hamiltonian(y);
        h_min = std::min(h_min, h);
        h_max = std::max(h_max, h);
        return StepControl::Continue;
    };
    integrate_adaptive<12>(sys, y0, 0.0, 2500.0, IntegratorOptions{1e-12, 1e-13}, observer);
    CHECK((h_max - h_min) / std::max(std::abs(h0), 1e-300) < 1e-9);
}

TEST_CASE("costate dynamics decouple in the force-free limit") {
    static const GravityModel feather(make_cube(1.0), 1e-3);  // nearly massless body
    static const AsteroidParams p(feather, 1e-12);
    State s;
    s.r = Vec3(1.5, 0.2, 0.1);
    s.v = Vec3(1e-4, 0, 0);
    Costate lambda;
    lambda.lambda_r = Vec3::Zero();
    lambda.lambda_v = Vec3(0.3, -0.4, 0.5);
    const Vec12 dy = augmented_derivative(s, lambda, p, kUm);
    CHECK(dy.segment<3>(6).norm() < 1e-20);  // lambda_r_dot ~ G sigma
    CHECK(dy.tail<3>().norm() < 1e-12);      // lambda_v_dot ~ omega
}

TEST_CASE("costate and state-transition propagation stay dual") {
    const AsteroidParams& p = cube_params();
    AugmentedStmSystem sys{{&p, kUm, false}};
    Eigen::Matrix<double, 48, 1> y0;
    y0.setZero();
    y0.head<6>() = scenario().orbit.initial.vec();
    y0.segment<6>(6) << 2e-3, -1e-3, 5e-4, 1e-3, 2e-3, -5e-4;
    Eigen::Map<Mat6>(y0.data() + 12) = Mat6::Identity();

    Vec6 dx0;
    dx0 << 1e-6, -2e-6, 1e-6, 1e-9, 2e-9, -1e-9;
    const double pairing0 = y0.segment<6>(6).dot(dx0);

    std::vector<double> pairings;
    auto observer = [&](const DenseStep<48>& step, const Eigen::Matrix<double, 48, 1>& y) {
        (void)step;
        const Vec6 lambda = y.segment<6>(6);
        const Mat6 phi = Eigen::Map<const Mat6>(y.data() + 12);
        pairings.push_back(lambda.dot(phi * dx0));
        return StepControl::Continue;
    };
    integrate_adaptive<48>(sys, y0, 0.0, 3000.0, IntegratorOptions{1e-12, 1e-13}, observer);
    REQUIRE(!pairings.empty());
    for (double v : pairings) {
        CHECK(std::abs(v - pairing0) <= 1e-6 * std::max(std::abs(pairing0), 1e-12));
    }
}

TEST_CASE("terminal residuals at the ballistic point and on a constructed ray") {
    Vec6 x_n;
    x_n << 1.5, 0.0, 0.02, 1e-4, -9e-4, 2e-5;

    const std::array<double, 3> phi = {0.7, 1.1, 2.3};
    const auto res0 = terminal_residuals(x_n, Vec6::Zero(), x_n, phi, Vec4::Zero());
    CHECK(res0.head<4>().norm() < 1e-15);  // coincident states: all constraints zero

    const Vec4 n = s3_direction(phi);
    const Vec6 x_f = x_n + embed_section_difference(0.37 * n);
    const auto res1 = terminal_residuals(x_f, Vec6::Zero(), x_n, phi, Vec4::Zero());
    CHECK(res1.segment<3>(1).norm() < 1e-12);  // difference lies on the ray

    // transversality rows: finite-difference dJ/dx_f against -Q(x_f - x_n)
    const Mat6 q = section_projection_matrix();
    auto cost = [&](const Vec6& x) {
        const Vec6 d = x - x_n;
        return -0.5 * d.dot(q * d);
    };
    for (int c = 0; c < 6; ++c) {
        const double h = 1e-6;
        Vec6 xp = x_f, xm = x_f;
        xp[c] += h;
        xm[c] -= h;
        const double fd = (cost(xp) - cost(xm)) / (2.0 * h);
        const Vec6 analytic = -(q * (x_f - x_n));
        CHECK(std::abs(fd - analytic[c]) < 1e-8);
    }
}

TEST_CASE("with no control authority the solver returns the ballistic point") {
    const BvpSolution sol = solve_reachability_bvp(cube_problem(0.0, {0.4, 0.9, 1.7}),
                                                   cube_params());
    CHECK((sol.terminal_state - scenario().x_n).norm() < 1e-9);
    CHECK(std::abs(sol.cost) < 1e-12);
    for (const auto& c : sol.control) CHECK(c.u.norm() == 0.0);
}

TEST_CASE("converged reachability solutions satisfy every necessary condition") {
    BvpOptions opt;
    opt.shooting.integ = {1e-12, 1e-12};
    opt.seed = 1;

    std::mt19937_64 rng(23);
    for (const std::array<double, 3> phi :
         {std::array<double, 3>{0.0, 0.0, 0.0}, {1.2566, 0.6283, 3.7699}, {2.5133, 2.1991, 0.6283}}) {
        const BvpSolution sol = solve_reachability_bvp(cube_problem(kUm, phi), cube_params(), opt);

        // control magnitude pinned at the bound everywhere
        for (const auto& c : sol.control) {
            CHECK(std::abs(c.u.norm() - kUm) <= 1e-12 * kUm);
        }
        // terminal state on the section
        CHECK(std::abs(sol.terminal_state[1]) < 1e-8);
        // patch-point continuity
        CHECK(sol.residual_continuity < 1e-10);
        // Hamiltonian constancy
        const double h_scale =
            std::max({std::abs(sol.hamiltonian_min), std::abs(sol.hamiltonian_max), 1e-300});
        CHECK((sol.hamiltonian_max - sol.hamiltonian_min) / h_scale < 1e-8);
        // strictly negative cost: the set expanded away from the ballistic point
        CHECK(sol.cost < 0.0);

        // pointwise minimum principle against random admissible controls
        for (std::size_t s = 0; s < sol.control.size(); s += std::max<std::size_t>(1, sol.control.size() / 20)) {
            const auto& c = sol.control[s];
            const double h_opt = c.lambda_v.dot(c.u);
            for (int k = 0; k < 20; ++k) {
                Vec3 u_rand(testutil::uniform(rng, -1, 1), testutil::uniform(rng, -1, 1),
                            testutil::uniform(rng, -1, 1));
                if (u_rand.norm() > 1.0) {
                    u_rand.normalize();
                }
                u_rand *= kUm;
                CHECK(h_opt <= c.lambda_v.dot(u_rand));
            }
        }
    }
}

TEST_CASE("shrinking the control bound shrinks the reachable displacement") {
    BvpOptions opt;
    opt.seed = 3;
    const std::array<double, 3> phi = {1.2566, 0.6283, 0.6283};
    double previous = 0.0;
    for (double u_m : {0.25e-7, 0.5e-7, 1e-7}) {
        const BvpSolution sol = solve_reachability_bvp(cube_problem(u_m, phi), cube_params(), opt);
        CHECK(std::abs(sol.cost) > previous);
        previous = std::abs(sol.cost);
    }
}

TEST_CASE("a degenerate grid sweep equals a single solve") {
    SweepOptions opt;
    opt.bvp.seed = 9;
    const ReachableSet set =
        sweep_reachable_set(scenario().orbit.initial, {1, 1, 1}, kUm, cube_params(), opt);
    REQUIRE(set.nodes.size() == 1);
    REQUIRE(set.nodes[0].converged);
    CHECK(set.t_f == Approx(scenario().t_f).epsilon(1e-12));

    const BvpSolution direct =
        solve_reachability_bvp(cube_problem(kUm, {0, 0, 0}), cube_params(), {});
    CHECK(std::abs(set.nodes[0].solution.terminal.x - direct.terminal.x) < 1e-6);
    CHECK(std::abs(set.nodes[0].solution.terminal.zdot - direct.terminal.zdot) < 1e-6);
}

TEST_CASE("ballistic sweep collapses to one section point") {
    const ReachableSet set =
        sweep_reachable_set(scenario().orbit.initial, {2, 2, 2}, 0.0, cube_params(), {});
    REQUIRE(set.converged_count() == 8);
    for (const auto& node : set.nodes) {
        CHECK(std::abs(node.solution.terminal.x - set.nodes[0].solution.terminal.x) < 1e-9);
        CHECK(std::abs(node.solution.terminal.zdot - set.nodes[0].solution.terminal.zdot) < 1e-9);
        CHECK(std::abs(node.solution.cost) < 1e-12);
    }
}

TEST_CASE("distance metric on the section") {
    SectionPoint a, b;
    a.x = 1.0;
    a.z = 2.0;
    a.xdot = 0.1;
    a.zdot = 0.2;
    b = a;
    CHECK(distance_on_section(a, b) == 0.0);

    b.x += 3.0;
    b.z += 4.0;
    CHECK(distance_on_section(a, b) == Approx(5.0).epsilon(1e-15));

    SectionWeights doubled{2, 2, 2, 2};
    CHECK(distance_on_section(a, b, doubled) ==
          Approx(std::sqrt(2.0) * 5.0).epsilon(1e-15));
    CHECK_THROWS_AS(distance_on_section(a, b, SectionWeights{0, 0, 0, 0}), Error);
}

TEST_CASE("selection equals the brute-force minimum") {
    SweepOptions opt;
    opt.bvp.seed = 11;
    opt.threads = 2;
    const ReachableSet set =
        sweep_reachable_set(scenario().orbit.initial, {2, 2, 2}, kUm, cube_params(), opt);
    REQUIRE(set.converged_count() >= 1);

    SectionPoint target;
    target.x = 1.7;
    target.z = 0.0;
    target.xdot = 0.0;
    target.zdot = -9.5e-4;

    const SelectedNode sel = select_next_stage(set, target);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& node : set.nodes) {
        if (!node.converged) continue;
        best = std::min(best, distance_on_section(node.solution.terminal, target));
    }
    CHECK(sel.distance == best);  // exact equality with the exhaustive oracle

    ReachableSet empty = set;
    for (auto& node : empty.nodes) node.converged = false;
    CHECK_THROWS_AS(select_next_stage(empty, target), EmptySetError);
}

TEST_CASE("fixed-endpoint solver accepts the ballistic solution") {
    const State x0 = scenario().orbit.initial;
    const double tf = scenario().t_f;
    BallisticSystem sys{cube_params()};
    const Vec6 x_t = integrate<6>(sys, x0.vec(), x0.t, tf, IntegratorOptions{1e-12, 1e-12});

    const BvpSolution sol = solve_fixed_endpoint_transfer(x0, x_t, tf, kUm, cube_params(), {});
    CHECK(sol.residual_terminal < 1e-8);
    CHECK(sol.max_control_magnitude < 1e-12 * kUm);
    CHECK(sol.cost < 1e-30);
}

TEST_CASE("fixed-endpoint solver respects the control bound and detects infeasibility") {
    const State x0 = scenario().orbit.initial;
    const double tf = scenario().t_f;
    BallisticSystem sys{cube_params()};
    Vec6 x_t = integrate<6>(sys, x0.vec(), x0.t, tf, IntegratorOptions{1e-12, 1e-12});
    x_t[0] += 0.05;
    x_t[2] += 0.02;

    const BvpSolution sol = solve_fixed_endpoint_transfer(x0, x_t, tf, kUm, cube_params(), {});
    CHECK(sol.residual_terminal < 1e-8);
    CHECK((sol.terminal_state - x_t).norm() < 1e-8);
    CHECK(sol.max_control_magnitude <= kUm * (1.0 + 1e-12));

    CHECK_THROWS_AS(
        solve_fixed_endpoint_transfer(x0, x_t, tf, 1e-12, cube_params(), {}),
        NonConvergenceError);
}

TEST_CASE("identity transfer needs zero stages") {
    TransferConfig cfg;
    cfg.grid = {1, 1, 1};
    cfg.stage_cap = 1;
    const TransferPlan plan =
        plan_transfer(scenario().orbit, scenario().orbit, cube_params(), cfg);
    CHECK(plan.stages.empty());
    CHECK(plan.initial_distance == 0.0);
    CHECK(plan.status == TransferStatus::TargetReached);
    CHECK(plan.final_leg_converged);
    CHECK_FALSE(plan.final_leg_attempted);
}
