#ifndef TLED_MESHLESS_HPP_
#define TLED_MESHLESS_HPP_

#include "tled/fem.hpp"
#include "tled/geometry.hpp"

#include <Eigen/Sparse>

#include <vector>

namespace tled {

struct MmlsConfig {
    int order = 1;                 // polynomial basis order, 1 or 2
    double dilationLinear = 1.8;   // support radius / local node spacing
    double dilationQuadratic = 2.4;
    double ridgeScale = 1e-10;     // quadratic-term regularization, relative
    double integrationTol = 1e-3;  // adaptive quadrature relative accuracy
    int maxDepth = 6;              // octasection depth limit
};

// One MMLS evaluation: supporting nodes, shape values, reference gradients.
struct ShapePoint {
    Vec3 x;
    double w = 0; // integration weight (m^3), zero for plain evaluations
    int region = 0;
    std::vector<int> support;
    VecX phi;
    Eigen::Matrix<double, Eigen::Dynamic, 3> dphi;
};

struct ShapeFunctionTable {
    std::vector<ShapePoint> points;
    double domainVolume = 0;
    int numNodes = 0;
    std::vector<std::string> warnings; // depth-limit notices
};

// Per-node support radius: dilation times the distance to the
// third-nearest neighbour.
std::vector<double> support_radii(const PointCloud &cloud, const MmlsConfig &cfg);

// Modified MLS shape functions at one point. The quadratic basis carries a
// small ridge penalty so the moment matrix stays invertible with
// linear-sufficient support counts; order-1 reproduction stays exact.
ShapePoint mmls_shape_functions(const PointCloud &cloud,
                                const std::vector<double> &radii, const Vec3 &x,
                                const MmlsConfig &cfg);

// Adaptive background-cell quadrature: recursive octasection driven by the
// sum of squared shape functions, stopping at the prescribed relative
// accuracy. Emits the final integration points with MMLS data attached.
ShapeFunctionTable adaptive_integration(const PointCloud &cloud, const MmlsConfig &cfg);

// MTLED internal force: F = I + sum_i u_i (x) dphi_i at each point, nodal
// force accumulates w * (F S) dphi_i. Overwrites f.
void mtled_internal_forces(const ShapeFunctionTable &table, const Field3 &u,
                           const std::vector<RegionLaw> &laws, Field3 &f);

double mtled_total_energy(const ShapeFunctionTable &table, const Field3 &u,
                          const std::vector<RegionLaw> &laws);

// Nodal masses from the quadrature: each point's mass rho*w is apportioned
// to its supporting nodes by (non-negative, normalized) shape values.
VecX lumped_mass(const ShapeFunctionTable &table, const PointCloud &cloud,
                 const std::vector<double> &densityPerRegion);

// Constant essential-boundary correction operator: the displacement field
// reconstructed at every constrained node is projected onto the prescribed
// values by a precomputed minimal-norm update of the nodal parameters.
struct CorrectionOperator {
    std::vector<int> constrainedNodes;
    Eigen::SparseMatrix<double> Phi; // reconstruction at constrained points
    Eigen::LLT<Eigen::MatrixXd> gram; // factor of Phi Phi^T
    bool identity = false;           // empty constraint set

    // u <- u + Phi^T (Phi Phi^T)^{-1} (prescribed - Phi u)
    void apply(Field3 &u, const Field3 &prescribed) const;
    // Same correction restricted to one displacement component, for
    // constraints that fix a single axis (e.g. a lubricated platen).
    void apply_axis(Field3 &u, const VecX &prescribed, int axis) const;
    // Reconstructed displacement at constrained point c.
    Field3 reconstruct(const Field3 &u) const;
};

CorrectionOperator ebciem_build(const PointCloud &cloud,
                                const std::vector<double> &radii,
                                const std::vector<int> &constrainedNodes,
                                const MmlsConfig &cfg);

} // namespace tled

#endif // TLED_MESHLESS_HPP_
