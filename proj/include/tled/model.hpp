#ifndef TLED_MODEL_HPP_
#define TLED_MODEL_HPP_

#include "tled/dynamics.hpp"
#include "tled/geometry.hpp"
#include "tled/materials.hpp"
#include "tled/meshless.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tled {

enum class Discretization { Fem, Meshless };
enum class SolverType { DynamicRelaxation, TimeAccurate };

struct RunConfig {
    std::string configDir; // directory of the config file; paths resolve against it

    // geometry
    std::string meshPath;
    Discretization discretization = Discretization::Fem;
    Eigen::Vector3i backgroundCells{8, 8, 8}; // meshless integration grid
    MmlsConfig mmls;

    // materials, indexed by region
    std::vector<MaterialParams> materials;
    std::vector<double> densities; // kg/m^3

    // loading
    std::string loadNodeSet;
    Vec3 loadDisplacement = Vec3::Zero();     // uniform target, in meters
    std::vector<Vec3> loadPerNode;            // optional per-node targets (meters)
    double rampTime = 1.0;                    // s (pseudo-time under DR)

    // contact
    std::optional<std::string> contactMeshPath;
    std::string contactSlaveSet;

    // solver
    SolverType solver = SolverType::DynamicRelaxation;
    double dtSafety = 0.9;
    DRParams dr;
    double duration = 0;               // time-accurate only
    std::vector<double> snapshotTimes; // time-accurate only

    // warp
    std::string sourceVolumePath;
    int warpLevels = 3;
    double warpInitialSpacing = 0; // mm; 0 = quarter of the domain extent

    std::string outputDir = ".";
};

RunConfig load_run_config(const std::string &path);

// Hourglass coefficient for solves and verify suites: default 0.1,
// overridable through TLED_HOURGLASS_COEFF (fault-injection hook).
double hourglass_coefficient();

struct SolveOutputs {
    Field3 u; // final nodal displacements (m)
    ConvergenceReport report;
    double maxDisplacement = 0; // m
    int numNodes = 0;
    double dt = 0;
};

// Precompute -> ramped DR (or time-accurate loop) with EBCIEM/contact hooks
// -> displacements.csv, deformed.mesh, report.json in config.outputDir.
// Throws InstabilityError on divergence; a non-converged DR still writes
// its partial outputs before returning report.converged = false.
SolveOutputs run_solve(const RunConfig &config);

// Fits the backward transform from the solve outputs, warps the source
// volume onto its own grid, writes transform.json + warped.json.
void run_warp(const RunConfig &config);

} // namespace tled

#endif // TLED_MODEL_HPP_
