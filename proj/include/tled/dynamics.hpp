#ifndef TLED_DYNAMICS_HPP_
#define TLED_DYNAMICS_HPP_

#include "tled/fem.hpp"
#include "tled/geometry.hpp"

#include <array>
#include <functional>
#include <vector>

namespace tled {

// Evaluates assembled internal forces for the current displacement field.
using ForceFn = std::function<void(const Field3 &u, Field3 &fInt)>;

// Applied after each integration step (EBCIEM correction, contact
// projection); may adjust uPrev so projections do not inject velocity.
using StepHook = std::function<void(Field3 &u, Field3 &uPrev, double t)>;

struct SolverState {
    Field3 u;     // nodal displacements (m)
    Field3 uPrev; // previous-step displacements
    double t = 0; // s
    double dt = 0;
    Field3 fInt;
    Field3 fExt;
    VecX mass; // kg, strictly positive

    void init(int numNodes, double dt_, const VecX &mass_);
};

// Quintic smoothstep ramp: zero end-point velocity and acceleration.
double ramp_factor(double t, double T);

// Stability limit: min over elements of characteristic length over
// dilatational wave speed sqrt((kappa + 4 mu / 3) / rho).
double dilatational_wave_speed(const RegionLaw &law, double rho);
double critical_time_step(const Mesh &mesh, const std::vector<RegionLaw> &laws,
                          const std::vector<double> &densityPerRegion);
double critical_time_step(const PointCloud &cloud, const std::vector<RegionLaw> &laws,
                          const std::vector<double> &densityPerRegion);

struct Constraints {
    std::vector<int> prescribedNodes;
    Field3 prescribedTargets; // final values, scaled by the ramp
    // Per-node component mask; empty means every component is prescribed.
    std::vector<std::array<bool, 3>> prescribedAxes;
    double rampTime = 1.0;
    StepHook hook; // optional

    // Overwrite prescribed rows with their ramped targets.
    void apply_prescribed(Field3 &u, double t) const;
};

// One (optionally damped) central-difference step; forces must already be
// evaluated at state.u. Throws on the divergence detector.
void explicit_step(SolverState &state, double damping, const Constraints &constraints,
                   double domainDiameter);

struct DRParams {
    double tolerance = 1e-5;    // m, on the max nodal increment per step
    int maxIterations = 100000;
    int settleSteps = 10;       // consecutive steps under tolerance
    bool adaptiveDamping = true;
    double fixedDamping = 0;    // 1/s, used when adaptiveDamping is false
    double massScaling = 1;     // uniform factor; steady state is mass-independent
    // Uniform automatic scaling keeping the peak frequency (estimated by
    // power iteration on the linearized forces) inside the stability limit;
    // the min-edge step estimate alone sits marginally above it on
    // assembled meshes. Steady state is unaffected.
    bool autoMassScaling = true;
};

struct ConvergenceReport {
    bool converged = false;
    int iterations = 0;
    double finalResidual = 0;
    std::vector<double> residualHistory;
    double dampingUsed = 0;
};

// Damped explicit iteration to steady state. The damping coefficient is
// re-estimated from a Rayleigh quotient of the displacement and force
// increments (vectors only) when adaptiveDamping is set.
ConvergenceReport dynamic_relaxation_solve(const ForceFn &forces, const VecX &mass,
                                           double dt, const Constraints &constraints,
                                           const DRParams &params, Field3 &u,
                                           double domainDiameter,
                                           const Field3 *externalForce = nullptr);

struct Snapshot {
    double t;
    Field3 u;
};

// Undamped central-difference trajectory with snapshots at the requested
// times (each snapshot is taken at the first step reaching that time).
std::vector<Snapshot> time_accurate_solve(const ForceFn &forces, const VecX &mass,
                                          double dt, const Constraints &constraints,
                                          double duration,
                                          const std::vector<double> &snapshotTimes,
                                          double domainDiameter,
                                          const Field3 *externalForce = nullptr);

} // namespace tled

#endif // TLED_DYNAMICS_HPP_
