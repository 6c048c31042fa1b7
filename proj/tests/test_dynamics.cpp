#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tled/dynamics.hpp"
#include "tled/fem.hpp"

#include <cmath>

using namespace tled;

namespace {

MaterialParams brain_like() {
    MaterialParams p;
    p.E = 3000;
    p.nu = 0.49;
    return p;
}

// Linear springs between chain neighbours; callers pin node 0 through the
// constraint set.
ForceFn spring_chain(int springs, double k) {
    return [springs, k](const Field3 &u, Field3 &f) {
        f.setZero();
        for (int s = 0; s < springs; ++s) {
            const double ext = u(s + 1, 0) - u(s, 0);
            f(s, 0) -= k * ext;
            f(s + 1, 0) += k * ext;
        }
    };
}

Constraints pinned_origin() {
    Constraints c;
    c.prescribedNodes = {0};
    c.prescribedTargets = Field3::Zero(1, 3);
    c.rampTime = 0.05;
    return c;
}

} // namespace

TEST_CASE("ramp factor") {
    CHECK(ramp_factor(0.0, 2.0) == 0.0);
    CHECK(ramp_factor(2.0, 2.0) == 1.0);
    CHECK(ramp_factor(5.0, 2.0) == 1.0);
    CHECK(ramp_factor(1.0, 2.0) == doctest::Approx(0.5).epsilon(1e-14));
    // Zero end-point slope.
    const double h = 1e-5;
    CHECK(std::abs(ramp_factor(h, 1.0) - ramp_factor(0.0, 1.0)) / h < 1e-8);
    CHECK(std::abs(ramp_factor(1.0, 1.0) - ramp_factor(1.0 - h, 1.0)) / h < 1e-8);
    CHECK_THROWS_AS(ramp_factor(0.5, 0.0), Error);
}

TEST_CASE("critical time step") {
    const std::vector<RegionLaw> laws = make_region_laws({brain_like()});

    SUBCASE("single unit hex") {
        const Mesh mesh = make_box_hex_mesh(1, 1, 1, 1, 1, 1);
        const double cd = std::sqrt((50000.0 + 4.0 / 3.0 * 3000 / 2.98) / 1000.0);
        CHECK(critical_time_step(mesh, laws, {1000}) ==
              doctest::Approx(1.0 / cd).epsilon(1e-12));
    }

    SUBCASE("scaling laws") {
        const Mesh small = make_box_hex_mesh(2, 2, 2, 1, 1, 1);
        const Mesh big = make_box_hex_mesh(2, 2, 2, 2, 2, 2);
        const double dt1 = critical_time_step(small, laws, {1000});
        CHECK(critical_time_step(big, laws, {1000}) ==
              doctest::Approx(2 * dt1).epsilon(1e-12));
        MaterialParams stiff = brain_like();
        stiff.E *= 100;
        CHECK(critical_time_step(small, make_region_laws({stiff}), {1000}) ==
              doctest::Approx(dt1 / 10).epsilon(1e-12));
    }

    SUBCASE("tets use the minimum altitude") {
        Mesh mesh;
        mesh.nodes = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
        mesh.tets.push_back({0, 1, 2, 3});
        // V = 1/6, largest face is the diagonal one with area sqrt(3)/2.
        const double altitude = 3.0 * (1.0 / 6.0) / (std::sqrt(3.0) / 2.0);
        const double cd = dilatational_wave_speed(laws[0], 1000);
        CHECK(critical_time_step(mesh, laws, {1000}) ==
              doctest::Approx(altitude / cd).epsilon(1e-12));
    }
}

TEST_CASE("explicit step basics") {
    Constraints none;

    SUBCASE("no forces, no motion") {
        SolverState st;
        st.init(3, 0.1, VecX::Constant(3, 2.0));
        explicit_step(st, 0.0, none, 1.0);
        CHECK(st.u.norm() == 0.0);
        CHECK(st.t == doctest::Approx(0.1));
    }

    SUBCASE("constant force reproduces uniform acceleration") {
        const double F = 3.0, m = 2.0, dt = 0.01;
        SolverState st;
        st.init(1, dt, VecX::Constant(1, m));
        const double a = F / m;
        st.uPrev(0, 0) = 0.5 * a * dt * dt; // exact position at t = -dt
        st.fExt(0, 0) = F;
        for (int n = 1; n <= 100; ++n) {
            explicit_step(st, 0.0, none, 1e9);
            const double exact = 0.5 * a * st.t * st.t;
            CHECK(std::abs(st.u(0, 0) - exact) <= 1e-12 * exact);
        }
    }

    SUBCASE("oscillator period within 1%") {
        const double k = 40.0, m = 0.9;
        const double period = 2 * M_PI * std::sqrt(m / k);
        const double dtCrit = 2.0 * std::sqrt(m / k);
        const double dt = dtCrit / 20;
        SolverState st;
        st.init(1, dt, VecX::Constant(1, m));
        st.u(0, 0) = st.uPrev(0, 0) = 1e-3;
        double prev = st.u(0, 0);
        int crossings = 0;
        double lastCross = 0, firstCross = 0;
        for (int n = 0; n < 4000 && crossings < 11; ++n) {
            st.fInt(0, 0) = k * st.u(0, 0);
            explicit_step(st, 0.0, none, 1e9);
            if (prev > 0 && st.u(0, 0) <= 0) {
                const double t = st.t - dt * st.u(0, 0) / (st.u(0, 0) - prev);
                if (crossings == 0) firstCross = t;
                lastCross = t;
                ++crossings;
            }
            prev = st.u(0, 0);
        }
        REQUIRE(crossings == 11);
        const double measured = (lastCross - firstCross) / 10;
        CHECK(std::abs(measured - period) <= 0.01 * period);
    }

    SUBCASE("divergence detector") {
        SolverState st;
        st.init(1, 1.0, VecX::Constant(1, 1.0));
        st.fExt(0, 0) = 1e12;
        Constraints c;
        CHECK_THROWS_AS(explicit_step(st, 0.0, c, 1.0), InstabilityError);
    }
}

TEST_CASE("prescribed displacements are overwritten, not integrated") {
    SolverState st;
    st.init(2, 0.05, VecX::Constant(2, 1.0));
    Constraints c;
    c.prescribedNodes = {1};
    c.prescribedTargets = Field3::Zero(1, 3);
    c.prescribedTargets(0, 2) = -0.4;
    c.rampTime = 1.0;
    st.fExt.setConstant(7.0); // would accelerate a free node
    for (int n = 0; n < 30; ++n) {
        explicit_step(st, 0.0, c, 1e9);
        CHECK(st.u(1, 2) == ramp_factor(st.t, 1.0) * -0.4); // bitwise
        CHECK(st.u(1, 0) == ramp_factor(st.t, 1.0) * 0.0);
    }
}

TEST_CASE("per-component masks leave free axes integrated") {
    SolverState st;
    st.init(1, 0.1, VecX::Constant(1, 1.0));
    Constraints c;
    c.prescribedNodes = {0};
    c.prescribedTargets = Field3::Zero(1, 3);
    c.prescribedTargets(0, 2) = 1.0;
    c.prescribedAxes = {{false, false, true}};
    c.rampTime = 1.0;
    st.fExt(0, 0) = 2.0; // pushes along the free x axis
    explicit_step(st, 0.0, c, 1e9);
    explicit_step(st, 0.0, c, 1e9);
    CHECK(st.u(0, 2) == ramp_factor(st.t, 1.0) * 1.0);
    CHECK(st.u(0, 0) > 0.0);

    Constraints bad = c;
    bad.prescribedAxes.push_back({true, true, true});
    CHECK_THROWS_AS(explicit_step(st, 0.0, bad, 1e9), Error);
}

TEST_CASE("dynamic relaxation") {
    SUBCASE("zero load converges immediately") {
        const ForceFn forces = spring_chain(4, 10.0);
        const Constraints c = pinned_origin();
        DRParams params;
        params.tolerance = 1e-10;
        Field3 u = Field3::Zero(5, 3);
        const auto rep = dynamic_relaxation_solve(forces, VecX::Constant(5, 1.0), 0.01,
                                                  c, params, u, 1.0);
        CHECK(rep.converged);
        // Settle steps plus the (zero-amplitude) ramp of the pinned node.
        CHECK(rep.iterations <= params.settleSteps + 6);
        CHECK(u.norm() == 0.0);
    }

    SUBCASE("spring chain matches the direct solve") {
        const int springs = 10;
        const double k = 25.0, load = 0.5;
        const ForceFn forces = spring_chain(springs, k);
        Field3 fExt = Field3::Zero(springs + 1, 3);
        fExt(springs, 0) = load;
        const Constraints c = pinned_origin();
        DRParams params;
        params.tolerance = 1e-13;
        params.autoMassScaling = false;
        Field3 u = Field3::Zero(springs + 1, 3);
        const auto rep = dynamic_relaxation_solve(forces, VecX::Constant(springs + 1, 1.0),
                                                  0.01, c, params, u, 1.0, &fExt);
        REQUIRE(rep.converged);
        // In series, every spring carries the end load.
        for (int n = 1; n <= springs; ++n)
            CHECK(u(n, 0) == doctest::Approx(n * load / k).epsilon(1e-8));
    }

    SUBCASE("residual history is monotone after the adaptive phase settles") {
        const ForceFn forces = spring_chain(10, 25.0);
        Field3 fExt = Field3::Zero(11, 3);
        fExt(10, 0) = 0.5;
        const Constraints c = pinned_origin();
        DRParams params;
        params.tolerance = 1e-10;
        Field3 u = Field3::Zero(11, 3);
        const auto rep = dynamic_relaxation_solve(forces, VecX::Constant(11, 1.0), 0.01,
                                                  c, params, u, 1.0, &fExt);
        REQUIRE(rep.converged);
        const auto &r = rep.residualHistory;
        const std::size_t tail = r.size() / 2;
        for (std::size_t i = tail; i + 50 < r.size(); ++i)
            CHECK(r[i + 50] <= r[i] * (1 + 1e-12));
    }
}

TEST_CASE("stability bracket on the unit hex") {
    const Mesh mesh = make_box_hex_mesh(1, 1, 1, 1, 1, 1);
    const ElementPrecomp pre = precompute_elements(mesh);
    const std::vector<RegionLaw> laws = make_region_laws({brain_like()});
    const VecX mass = lumped_mass(mesh, 1000.0);
    const double dtc = critical_time_step(mesh, laws, {1000});
    const ForceFn forces = [&](const Field3 &u, Field3 &f) {
        internal_forces(pre, mesh.nodes, u, laws, f);
    };
    Constraints c;
    c.prescribedNodes = mesh.nodeSets.at("z0");
    c.prescribedTargets = Field3::Zero(4, 3);
    c.prescribedTargets.col(2).setConstant(-0.05);
    c.rampTime = 0.5;
    DRParams params;
    params.tolerance = 1e-8;

    SUBCASE("0.9 dt_crit converges") {
        Field3 u = Field3::Zero(8, 3);
        const auto rep = dynamic_relaxation_solve(forces, mass, 0.9 * dtc, c, params, u, 2.0);
        CHECK(rep.converged);
        CHECK(u.cwiseAbs().maxCoeff() < 0.1);
    }

    SUBCASE("1.5 dt_crit diverges") {
        Field3 u = Field3::Zero(8, 3);
        params.maxIterations = 20000;
        bool unstable = false;
        try {
            const auto rep =
                dynamic_relaxation_solve(forces, mass, 1.5 * dtc, c, params, u, 2.0);
            unstable = !rep.converged;
        } catch (const Error &) {
            unstable = true; // inversion or the divergence detector
        }
        CHECK(unstable);
    }
}

TEST_CASE("time accurate solve") {
    SUBCASE("zero loading gives zero snapshots") {
        const ForceFn forces = spring_chain(3, 5.0);
        Constraints c;
        const auto traj = time_accurate_solve(forces, VecX::Constant(4, 1.0), 0.01, c,
                                              0.2, {0.0, 0.1, 0.2}, 1.0);
        REQUIRE(traj.size() == 3);
        for (const auto &s : traj) CHECK(s.u.norm() == 0.0);
    }

    SUBCASE("repeated runs are bit-identical") {
        const Mesh mesh = make_box_hex_mesh(2, 2, 2, 1, 1, 1);
        const ElementPrecomp pre = precompute_elements(mesh);
        const std::vector<RegionLaw> laws = make_region_laws({brain_like()});
        const ForceFn forces = [&](const Field3 &u, Field3 &f) {
            internal_forces(pre, mesh.nodes, u, laws, f);
        };
        Constraints c;
        c.prescribedNodes = mesh.nodeSets.at("z1");
        c.prescribedTargets = Field3::Zero(9, 3);
        c.prescribedTargets.col(2).setConstant(-0.02);
        c.rampTime = 1.0;
        const VecX mass = lumped_mass(mesh, 1000.0);
        const double dt = 0.5 * critical_time_step(mesh, laws, {1000});
        const auto a = time_accurate_solve(forces, mass, dt, c, 0.5, {0.25, 0.5}, 2.0);
        const auto b = time_accurate_solve(forces, mass, dt, c, 0.5, {0.25, 0.5}, 2.0);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK((a[i].u - b[i].u).norm() == 0.0);
    }

    SUBCASE("oscillator energy drift under 1% across 100 periods") {
        const double k = 12.0, m = 0.4;
        const double dt = (2.0 * std::sqrt(m / k)) / 20;
        const double period = 2 * M_PI * std::sqrt(m / k);
        SolverState st;
        st.init(1, dt, VecX::Constant(1, m));
        const double u0 = 1e-3;
        st.u(0, 0) = u0;
        // Exact history for a cosine start.
        st.uPrev(0, 0) = u0 * std::cos(std::sqrt(k / m) * dt);
        Constraints none;
        const double E0 = 0.5 * k * u0 * u0;
        double maxDrift = 0;
        for (double t = 0; t < 100 * period; t = st.t) {
            st.fInt(0, 0) = k * st.u(0, 0);
            explicit_step(st, 0.0, none, 1e9);
            const double v = (st.u(0, 0) - st.uPrev(0, 0)) / dt; // midpoint velocity
            const double uMid = 0.5 * (st.u(0, 0) + st.uPrev(0, 0));
            const double E = 0.5 * m * v * v + 0.5 * k * uMid * uMid;
            maxDrift = std::max(maxDrift, std::abs(E - E0) / E0);
        }
        CHECK(maxDrift <= 0.01);
    }
}
