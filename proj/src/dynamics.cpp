#include "tled/dynamics.hpp"

#include <cmath>
#include <cstdint>

namespace tled {

void SolverState::init(int numNodes, double dt_, const VecX &mass_) {
    if (!(dt_ > 0)) throw Error("time step must be positive");
    if (mass_.size() != numNodes) throw Error("mass vector length mismatch");
    if (mass_.minCoeff() <= 0) throw Error("nodal masses must be positive");
    u = Field3::Zero(numNodes, 3);
    uPrev = Field3::Zero(numNodes, 3);
    fInt = Field3::Zero(numNodes, 3);
    fExt = Field3::Zero(numNodes, 3);
    t = 0;
    dt = dt_;
    mass = mass_;
}

double ramp_factor(double t, double T) {
    if (!(T > 0)) throw Error("ramp duration must be positive");
    const double tau = std::clamp(t / T, 0.0, 1.0);
    return tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau));
}

double dilatational_wave_speed(const RegionLaw &law, double rho) {
    if (!(rho > 0)) throw Error("non-positive density");
    return std::sqrt((law.kappa + 4.0 * law.mu / 3.0) / rho);
}

namespace {

double region_density(const std::vector<double> &rho, int region) {
    if (region < 0 || region >= static_cast<int>(rho.size()))
        throw Error("no density for region " + std::to_string(region));
    return rho[region];
}

} // namespace

double critical_time_step(const Mesh &mesh, const std::vector<RegionLaw> &laws,
                          const std::vector<double> &densityPerRegion) {
    static const int hexEdges[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0},
                                        {4, 5}, {5, 6}, {6, 7}, {7, 4},
                                        {0, 4}, {1, 5}, {2, 6}, {3, 7}};
    double dt = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < mesh.hexes.size(); ++e) {
        const int region = mesh.hexRegions.empty() ? 0 : mesh.hexRegions[e];
        const double c = dilatational_wave_speed(laws.at(region),
                                                 region_density(densityPerRegion, region));
        const auto &h = mesh.hexes[e];
        for (const auto &ed : hexEdges)
            dt = std::min(dt, (mesh.nodes[h[ed[0]]] - mesh.nodes[h[ed[1]]]).norm() / c);
    }
    for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
        const int region = mesh.tetRegions.empty() ? 0 : mesh.tetRegions[e];
        const double c = dilatational_wave_speed(laws.at(region),
                                                 region_density(densityPerRegion, region));
        // Characteristic length of a tet is its minimum altitude 3V/A_max;
        // edges overestimate the stable step for flat elements.
        const auto &t = mesh.tets[e];
        const double V = std::abs(tet_volume(mesh.nodes[t[0]], mesh.nodes[t[1]],
                                             mesh.nodes[t[2]], mesh.nodes[t[3]]));
        static const int faces[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
        double maxArea = 0;
        for (const auto &f : faces) {
            const Vec3 a = mesh.nodes[t[f[1]]] - mesh.nodes[t[f[0]]];
            const Vec3 b = mesh.nodes[t[f[2]]] - mesh.nodes[t[f[0]]];
            maxArea = std::max(maxArea, 0.5 * a.cross(b).norm());
        }
        dt = std::min(dt, 3.0 * V / maxArea / c);
    }
    return dt;
}

double critical_time_step(const PointCloud &cloud, const std::vector<RegionLaw> &laws,
                          const std::vector<double> &densityPerRegion) {
    const int n = cloud.num_nodes();
    double dt = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        double nearest = std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j)
            if (j != i)
                nearest = std::min(nearest, (cloud.nodes[j] - cloud.nodes[i]).squaredNorm());
        const int region = cloud.region(i);
        const double c = dilatational_wave_speed(laws.at(region),
                                                 region_density(densityPerRegion, region));
        dt = std::min(dt, std::sqrt(nearest) / c);
    }
    return dt;
}

void Constraints::apply_prescribed(Field3 &u, double t) const {
    if (prescribedNodes.empty()) return;
    if (!prescribedAxes.empty() && prescribedAxes.size() != prescribedNodes.size())
        throw Error("component mask length does not match the prescribed node set");
    const double r = ramp_factor(t, rampTime);
    for (std::size_t k = 0; k < prescribedNodes.size(); ++k) {
        if (prescribedAxes.empty()) {
            u.row(prescribedNodes[k]) = r * prescribedTargets.row(k);
        } else {
            for (int a = 0; a < 3; ++a)
                if (prescribedAxes[k][a])
                    u(prescribedNodes[k], a) = r * prescribedTargets(k, a);
        }
    }
}

void explicit_step(SolverState &state, double damping, const Constraints &constraints,
                   double domainDiameter) {
    const double dt = state.dt;
    const double a = 1.0 + 0.5 * damping * dt;
    const double b = 1.0 - 0.5 * damping * dt;

    Field3 uNext(state.u.rows(), 3);
    for (Eigen::Index i = 0; i < state.u.rows(); ++i) {
        const Eigen::RowVector3d accel =
            (state.fExt.row(i) - state.fInt.row(i)) / state.mass[i];
        uNext.row(i) =
            (2.0 * state.u.row(i) - b * state.uPrev.row(i) + dt * dt * accel) / a;
    }

    const double tNext = state.t + dt;
    constraints.apply_prescribed(uNext, tNext);

    state.uPrev = state.u;
    state.u = uNext;
    state.t = tNext;
    if (constraints.hook) constraints.hook(state.u, state.uPrev, state.t);

    const double limit = domainDiameter * 1e3;
    if (!state.u.allFinite() || state.u.cwiseAbs().maxCoeff() > limit)
        throw InstabilityError("instability detected at t = " + std::to_string(state.t) +
                    " (displacements exceed " + std::to_string(limit) + " m)");
}

namespace {

// Dominant frequency of M^-1 K around the undeformed state, from power
// iteration on finite-difference force increments. Deterministic start
// vector; converges from below, so callers add a margin.
double estimate_peak_frequency(const ForceFn &forces, const VecX &mass,
                               double lengthScale) {
    const Eigen::Index n = mass.size();
    Field3 x(n, 3);
    std::uint64_t seed = 0x9e3779b97f4a7c15ull;
    for (Eigen::Index i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) {
            seed = seed * 6364136223846793005ull + 1442695040888963407ull;
            x(i, j) = static_cast<double>(seed >> 11) * 0x1p-53 - 0.5;
        }
    Field3 f0(n, 3), f1(n, 3);
    forces(Field3::Zero(n, 3), f0);
    const double h = 1e-7 * lengthScale;
    double lambda = 0;
    for (int it = 0; it < 60; ++it) {
        x /= std::sqrt(x.array().square().sum());
        forces((h * x).eval(), f1);
        Field3 y = (f1 - f0) / h;
        for (Eigen::Index i = 0; i < n; ++i) y.row(i) /= mass[i];
        lambda = (x.array() * y.array()).sum();
        x = y;
    }
    return std::sqrt(std::max(lambda, 0.0));
}

struct DampingEstimator {
    // Rayleigh-quotient estimate of the lowest eigenvalue of M^{-1}K from
    // consecutive displacement and internal-force increments.
    double lambda = 0;
    bool seeded = false;

    void update(const Field3 &du, const Field3 &dfInt, const VecX &mass) {
        double num = 0, den = 0;
        for (Eigen::Index i = 0; i < du.rows(); ++i) {
            num += du.row(i).dot(dfInt.row(i));
            den += mass[i] * du.row(i).squaredNorm();
        }
        if (den <= 0) return;
        const double raw = num / den;
        if (raw <= 0) return;
        lambda = seeded ? 0.7 * lambda + 0.3 * raw : raw;
        seeded = true;
    }
    double damping() const { return seeded ? 2.0 * std::sqrt(lambda) : 0.0; }
};

} // namespace

ConvergenceReport dynamic_relaxation_solve(const ForceFn &forces, const VecX &mass,
                                           double dt, const Constraints &constraints,
                                           const DRParams &params, Field3 &u,
                                           double domainDiameter,
                                           const Field3 *externalForce) {
    if (!(params.tolerance > 0)) throw Error("convergence tolerance must be positive");

    SolverState state;
    state.init(static_cast<int>(mass.size()), dt, mass * params.massScaling);
    if (params.autoMassScaling) {
        const double w = estimate_peak_frequency(forces, state.mass, domainDiameter);
        const double s = 0.25 * dt * w * dt * w * 1.21; // 10% frequency margin
        // The compensation is capped at the worst optimism observed for the
        // edge-length step estimate (50% in frequency), so a deliberately
        // over-critical step still diverges instead of being rescued.
        if (s > 1.0) state.mass *= std::min(s, 2.25);
    }
    if (u.rows() == state.u.rows()) state.u = state.uPrev = u;

    DampingEstimator estimator;
    ConvergenceReport report;
    Field3 fPrev = Field3::Zero(state.u.rows(), 3);
    Field3 uOld = state.u;
    int settled = 0;
    bool haveIncrement = false;

    for (int it = 0; it < params.maxIterations; ++it) {
        // External loads follow the same ramp as prescribed displacements.
        if (externalForce)
            state.fExt = ramp_factor(state.t + dt, constraints.rampTime) * *externalForce;
        forces(state.u, state.fInt);

        double damping = params.fixedDamping;
        if (params.adaptiveDamping) {
            if (haveIncrement) estimator.update(state.u - uOld, state.fInt - fPrev,
                                                state.mass);
            damping = estimator.damping();
        }
        report.dampingUsed = damping;
        fPrev = state.fInt;
        uOld = state.u;
        haveIncrement = true;

        explicit_step(state, damping, constraints, domainDiameter);

        const double residual = (state.u - uOld).cwiseAbs().maxCoeff();
        report.residualHistory.push_back(residual);
        report.iterations = it + 1;
        report.finalResidual = residual;

        // Do not declare convergence while the load ramp is still moving.
        const bool rampDone =
            state.t >= constraints.rampTime ||
            (constraints.prescribedNodes.empty() && !constraints.hook &&
             externalForce == nullptr);
        settled = (rampDone && residual < params.tolerance) ? settled + 1 : 0;
        if (settled >= params.settleSteps) {
            report.converged = true;
            break;
        }
    }
    u = state.u;
    return report;
}

std::vector<Snapshot> time_accurate_solve(const ForceFn &forces, const VecX &mass,
                                          double dt, const Constraints &constraints,
                                          double duration,
                                          const std::vector<double> &snapshotTimes,
                                          double domainDiameter,
                                          const Field3 *externalForce) {
    SolverState state;
    state.init(static_cast<int>(mass.size()), dt, mass);
    if (externalForce) state.fExt = *externalForce;

    std::vector<double> wanted = snapshotTimes;
    std::sort(wanted.begin(), wanted.end());
    std::vector<Snapshot> out;
    std::size_t next = 0;
    while (next < wanted.size() && wanted[next] <= 0) {
        out.push_back({0.0, state.u});
        ++next;
    }
    while (state.t < duration) {
        forces(state.u, state.fInt);
        explicit_step(state, 0.0, constraints, domainDiameter);
        while (next < wanted.size() && state.t >= wanted[next]) {
            out.push_back({state.t, state.u});
            ++next;
        }
    }
    return out;
}

} // namespace tled
