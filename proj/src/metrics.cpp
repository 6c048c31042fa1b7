#include "tled/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace tled {

PointSet load_point_csv(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open point set: " + path);
    PointSet set;
    set.label = path;
    std::string line;
    int lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty() || line[0] == '#') continue;
        double x, y, z;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &x, &y, &z) != 3 &&
            std::sscanf(line.c_str(), "%lf %lf %lf", &x, &y, &z) != 3)
            throw ParseError(path, lineNo, "expected 'x,y,z'");
        set.points.emplace_back(x, y, z);
    }
    return set;
}

void write_point_csv(const std::string &path, const PointSet &set) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write point set: " + path);
    char buf[128];
    for (const auto &p : set.points) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", p[0], p[1], p[2]);
        out << buf;
    }
}

namespace {

// Uniform bucket grid over a point set, same indexing scheme as the
// contact master surface.
class PointGrid {
public:
    explicit PointGrid(const std::vector<Vec3> &points) : points_(points) {
        lo_ = hi_ = points[0];
        for (const auto &p : points) {
            lo_ = lo_.cwiseMin(p);
            hi_ = hi_.cwiseMax(p);
        }
        const double diag = std::max((hi_ - lo_).norm(), 1e-12);
        const double cell = diag / std::max(2.0, std::cbrt(static_cast<double>(points.size())));
        const Vec3 extent = (hi_ - lo_).array() + 0.5 * cell;
        for (int d = 0; d < 3; ++d) {
            dims_[d] = std::max(1, std::min(128, static_cast<int>(std::ceil(extent[d] / cell))));
            cellSize_[d] = std::max(extent[d] / dims_[d], 1e-12);
        }
        buckets_.resize(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2]);
        for (int i = 0; i < static_cast<int>(points.size()); ++i)
            buckets_[bucket(cell_of(points[i]))].push_back(i);
    }

    // Index of the nearest point; ties go to the lowest index.
    int nearest(const Vec3 &p) const {
        const Eigen::Vector3i c = cell_of(p);
        double bestD2 = std::numeric_limits<double>::infinity();
        int bestIdx = -1;
        const int maxRing = dims_.maxCoeff();
        for (int ring = 0; ring <= maxRing; ++ring) {
            for (int k = std::max(0, c[2] - ring); k <= std::min(dims_[2] - 1, c[2] + ring); ++k)
                for (int j = std::max(0, c[1] - ring); j <= std::min(dims_[1] - 1, c[1] + ring); ++j)
                    for (int i = std::max(0, c[0] - ring); i <= std::min(dims_[0] - 1, c[0] + ring); ++i) {
                        const bool onShell = ring == 0 || std::abs(i - c[0]) == ring ||
                                             std::abs(j - c[1]) == ring ||
                                             std::abs(k - c[2]) == ring;
                        if (!onShell) continue;
                        for (int idx : buckets_[bucket({i, j, k})]) {
                            const double d2 = (points_[idx] - p).squaredNorm();
                            if (d2 < bestD2 || (d2 == bestD2 && idx < bestIdx)) {
                                bestD2 = d2;
                                bestIdx = idx;
                            }
                        }
                    }
            if (bestIdx >= 0) {
                double margin = std::numeric_limits<double>::infinity();
                bool inside = true;
                for (int d = 0; d < 3; ++d) {
                    const double boxLo = lo_[d] + (c[d] - ring) * cellSize_[d];
                    const double boxHi = lo_[d] + (c[d] + ring + 1) * cellSize_[d];
                    if (p[d] < boxLo || p[d] > boxHi) inside = false;
                    margin = std::min(margin, std::min(p[d] - boxLo, boxHi - p[d]));
                }
                const bool coversAll =
                    c[0] - ring <= 0 && c[1] - ring <= 0 && c[2] - ring <= 0 &&
                    c[0] + ring >= dims_[0] - 1 && c[1] + ring >= dims_[1] - 1 &&
                    c[2] + ring >= dims_[2] - 1;
                if (coversAll || (inside && bestD2 <= margin * margin)) break;
            }
        }
        return bestIdx;
    }

private:
    Eigen::Vector3i cell_of(const Vec3 &p) const {
        Eigen::Vector3i c;
        for (int d = 0; d < 3; ++d)
            c[d] = std::clamp(static_cast<int>((p[d] - lo_[d]) / cellSize_[d]), 0,
                              dims_[d] - 1);
        return c;
    }
    std::size_t bucket(const Eigen::Vector3i &c) const {
        return static_cast<std::size_t>(c[0]) +
               dims_[0] * (static_cast<std::size_t>(c[1]) + dims_[1] * static_cast<std::size_t>(c[2]));
    }

    const std::vector<Vec3> &points_;
    Vec3 lo_, hi_, cellSize_;
    Eigen::Vector3i dims_;
    std::vector<std::vector<int>> buckets_;
};

double percentile_of_sorted(const std::vector<double> &sorted, double p) {
    const auto n = static_cast<long>(sorted.size());
    long idx = static_cast<long>(std::ceil(p / 100.0 * n)) - 1;
    idx = std::clamp(idx, 0L, n - 1);
    return sorted[idx];
}

} // namespace

std::vector<double> directed_distances(const PointSet &A, const PointSet &B) {
    if (B.points.empty()) throw Error("empty target point set");
    PointGrid grid(B.points);
    std::vector<double> d(A.points.size());
    for (std::size_t i = 0; i < A.points.size(); ++i)
        d[i] = (A.points[i] - B.points[grid.nearest(A.points[i])]).norm();
    return d;
}

double hausdorff_percentile(const PointSet &A, const PointSet &B, double p) {
    if (!(p > 0 && p <= 100)) throw Error("percentile must lie in (0, 100]");
    if (A.points.empty() || B.points.empty()) throw Error("empty point set");
    std::vector<double> pooled = directed_distances(A, B);
    const std::vector<double> ba = directed_distances(B, A);
    pooled.insert(pooled.end(), ba.begin(), ba.end());
    std::sort(pooled.begin(), pooled.end());
    return percentile_of_sorted(pooled, p);
}

std::vector<SuccessCurvePoint>
registration_success_curve(const PointSet &A, const PointSet &B,
                           const std::vector<double> &thresholds) {
    if (A.points.empty() || B.points.empty()) throw Error("empty point set");
    std::vector<double> pooled = directed_distances(A, B);
    const std::vector<double> ba = directed_distances(B, A);
    pooled.insert(pooled.end(), ba.begin(), ba.end());
    std::sort(pooled.begin(), pooled.end());

    std::vector<SuccessCurvePoint> curve;
    curve.reserve(thresholds.size());
    for (double thr : thresholds) {
        const auto upper = std::upper_bound(pooled.begin(), pooled.end(), thr);
        const double frac = static_cast<double>(upper - pooled.begin()) /
                            static_cast<double>(pooled.size());
        curve.push_back({thr, 100.0 * frac});
    }
    return curve;
}

} // namespace tled
