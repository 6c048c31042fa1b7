#ifndef TLED_FEM_HPP_
#define TLED_FEM_HPP_

#include "tled/geometry.hpp"
#include "tled/materials.hpp"

#include <array>
#include <vector>

namespace tled {

// Per-region constitutive data resolved once before the time loop.
struct RegionLaw {
    MaterialModel model;
    double mu;
    double kappa;
    MaterialParams params;
};

std::vector<RegionLaw> make_region_laws(const std::vector<MaterialParams> &materials);

struct HexPrecomp {
    std::array<int, 8> nodes;
    Eigen::Matrix<double, 8, 3> dNdX; // centroid shape-function gradients
    double V0;
    Eigen::Matrix<double, 8, 4> gamma; // hourglass base vectors, one per mode
    double khg;                        // hourglass stiffness, per mode and axis
    int region;
};

struct TetPrecomp {
    std::array<int, 4> nodes;
    Eigen::Matrix<double, 4, 3> dNdX; // constant gradients
    double V0;
    int region;
};

struct ElementPrecomp {
    std::vector<HexPrecomp> hexes;
    std::vector<TetPrecomp> tets;
    VecX anpNodalV0; // per-node reference volume, sum of V0/4 over incident tets
    double hourglassCoeff;
};

// All geometry-dependent quantities of the Total Lagrangian force
// evaluation; constant for the life of the simulation.
ElementPrecomp precompute_elements(const Mesh &mesh, double hourglassCoeff = 0.1);

// Single-point TL force plus stiffness hourglass control. Accumulates into f.
void hex_internal_forces(const ElementPrecomp &pre, const std::vector<Vec3> &X,
                         const Field3 &u, const std::vector<RegionLaw> &laws,
                         Field3 &f);

// Average-nodal-pressure tetrahedra: deviatoric stress from the element F,
// pressure from nodal volume ratios gathered back to elements. With
// anp = false every tet uses its own volumetric stress (locking baseline).
void tet_internal_forces(const ElementPrecomp &pre, const std::vector<Vec3> &X,
                         const Field3 &u, const std::vector<RegionLaw> &laws,
                         Field3 &f, bool anp = true);

// Assembled internal force of the whole mesh (overwrites f).
void internal_forces(const ElementPrecomp &pre, const std::vector<Vec3> &X,
                     const Field3 &u, const std::vector<RegionLaw> &laws,
                     Field3 &f, bool anp = true);

// Total strain energy consistent with internal_forces (hourglass and ANP
// terms included); the finite-difference force oracle differentiates this.
double total_energy(const ElementPrecomp &pre, const std::vector<Vec3> &X,
                    const Field3 &u, const std::vector<RegionLaw> &laws,
                    bool anp = true);

// Deformation gradient at a hex centroid / in a tet.
Mat3 hex_deformation_gradient(const HexPrecomp &hex, const Field3 &u);
Mat3 tet_deformation_gradient(const TetPrecomp &tet, const Field3 &u);

// Smallest element edge length, used for the critical time step.
double min_edge_length(const Mesh &mesh);

} // namespace tled

#endif // TLED_FEM_HPP_
