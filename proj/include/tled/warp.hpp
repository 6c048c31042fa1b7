#ifndef TLED_WARP_HPP_
#define TLED_WARP_HPP_

#include "tled/geometry.hpp"
#include "tled/types.hpp"

#include <string>
#include <vector>

namespace tled {

// Scattered displacement samples in the image frame (mm).
struct ScatteredSamples {
    std::vector<Vec3> positions;
    std::vector<Vec3> values;
};

struct BSplineLevel {
    Vec3 origin;            // domain corner the lattice is anchored to (mm)
    Vec3 spacing;           // control spacing (mm)
    Eigen::Vector3i cells;  // spans per axis; control counts are cells + 3
    std::vector<Vec3> coeffs; // x-fastest control displacements

    Eigen::Vector3i counts() const {
        return cells + Eigen::Vector3i::Constant(3);
    }
    std::size_t index(int i, int j, int k) const {
        const auto n = counts();
        return static_cast<std::size_t>(i) +
               n[0] * (static_cast<std::size_t>(j) + n[1] * static_cast<std::size_t>(k));
    }
    Vec3 evaluate(const Vec3 &x) const; // raw spline, x clamped to the domain
};

// Coarse-to-fine hierarchy of cubic B-spline lattices, each level halving
// the control spacing and fitting the residual of the levels before it.
struct BSplineTransform {
    Eigen::AlignedBox3d domain;
    std::vector<BSplineLevel> levels;
    double falloffBand = 0; // mm; displacement fades to zero outside the domain
    std::vector<double> levelResiduals; // max residual at samples after each level

    Vec3 displacement(const Vec3 &x) const;
    Vec3 apply(const Vec3 &x) const { return x + displacement(x); }
};

// Least-squares control-point fit per level with a light second-difference
// regularizer (vanishes on affine control nets, so constant and linear
// fields are reproduced exactly).
BSplineTransform fit_multilevel_bspline(const ScatteredSamples &samples,
                                        const Eigen::AlignedBox3d &domain, int levels,
                                        double initialSpacing);

// Samples of the approximate inverse: value -u placed at the deformed
// position x + u. Fitting them yields the backward transform.
ScatteredSamples build_backward_samples(const std::vector<Vec3> &positions,
                                        const std::vector<Vec3> &displacements);

// Fixed-point polish of a source position: x_S <- x_T - u_fwd(x_S).
Vec3 refine_source_position(const BSplineTransform &forward, const Vec3 &xT, Vec3 xS,
                            int iterations);

// Resample `source` on the target grid: each target voxel center is pushed
// through the backward transform and sampled trilinearly.
Volume warp_volume(const Volume &source, const BSplineTransform &backward,
                   const Eigen::Vector3i &dims, const Vec3 &spacing, const Vec3 &origin);

void save_transform(const std::string &headerPath, const BSplineTransform &T);
BSplineTransform load_transform(const std::string &headerPath);

} // namespace tled

#endif // TLED_WARP_HPP_
