#ifndef TLED_METRICS_HPP_
#define TLED_METRICS_HPP_

#include "tled/types.hpp"

#include <string>
#include <vector>

namespace tled {

struct PointSet {
    std::vector<Vec3> points; // mm
    std::string label;
};

PointSet load_point_csv(const std::string &path);
void write_point_csv(const std::string &path, const PointSet &set);

// Distance from each point of A to its nearest point of B (grid-indexed;
// ties broken toward the lowest index).
std::vector<double> directed_distances(const PointSet &A, const PointSet &B);

// Symmetric percentile Hausdorff distance: the p-th percentile of the
// pooled directed distances d(a,B) and d(b,A). p = 100 is the classical
// Hausdorff distance.
double hausdorff_percentile(const PointSet &A, const PointSet &B, double p);

struct SuccessCurvePoint {
    double threshold; // mm
    double percentile; // largest percentile with HD(p) <= threshold
};

std::vector<SuccessCurvePoint>
registration_success_curve(const PointSet &A, const PointSet &B,
                           const std::vector<double> &thresholds = {1.7});

} // namespace tled

#endif // TLED_METRICS_HPP_
