#include "tled/contact.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace tled {

namespace {

// Closest point on triangle abc (Ericson, Real-Time Collision Detection).
// feature: 0..2 vertex a/b/c, 3..5 edge ab/bc/ca, 6 face interior.
Vec3 closest_on_triangle(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c,
                         int &feature) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) { feature = 0; return a; }

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) { feature = 1; return b; }

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) {
        feature = 3;
        return a + (d1 / (d1 - d3)) * ab;
    }

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) { feature = 2; return c; }

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) {
        feature = 5;
        return a + (d2 / (d2 - d6)) * ac;
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
        feature = 4;
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
    }

    feature = 6;
    const double denom = 1.0 / (va + vb + vc);
    return a + (vb * denom) * ab + (vc * denom) * ac;
}

} // namespace

std::size_t MasterSurface::bucket_index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           gridDims_[0] * (static_cast<std::size_t>(j) +
                           gridDims_[1] * static_cast<std::size_t>(k));
}

MasterSurface::MasterSurface(std::vector<Vec3> vertices,
                             std::vector<std::array<int, 3>> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
    if (triangles_.empty()) throw Error("master surface has no triangles");

    // Closedness and consistent winding: every directed edge exactly once.
    std::map<std::pair<int, int>, int> directed;
    for (const auto &t : triangles_)
        for (int e = 0; e < 3; ++e) {
            const auto key = std::make_pair(t[e], t[(e + 1) % 3]);
            if (++directed[key] > 1)
                throw Error("master surface has inconsistent winding at edge " +
                            std::to_string(key.first) + "-" + std::to_string(key.second));
        }
    std::ostringstream open;
    int openCount = 0;
    for (const auto &[key, n] : directed) {
        (void)n;
        if (!directed.count({key.second, key.first})) {
            if (openCount < 8) open << " " << key.first << "-" << key.second;
            ++openCount;
        }
    }
    if (openCount > 0)
        throw Error("master surface is not closed; " + std::to_string(openCount) +
                    " open edges:" + open.str());

    faceNormals_.resize(triangles_.size());
    vertexNormals_.assign(vertices_.size(), Vec3::Zero());
    std::map<std::pair<int, int>, Vec3> edgeNormalSum;
    double edgeLenSum = 0;
    std::vector<double> edgeLens;

    for (std::size_t ti = 0; ti < triangles_.size(); ++ti) {
        const auto &t = triangles_[ti];
        const Vec3 &a = vertices_[t[0]], &b = vertices_[t[1]], &c = vertices_[t[2]];
        Vec3 n = (b - a).cross(c - a);
        const double area2 = n.norm();
        if (area2 <= 0) throw Error("degenerate master triangle " + std::to_string(ti));
        n /= area2;
        faceNormals_[ti] = n;

        for (int e = 0; e < 3; ++e) {
            const int v0 = t[e], v1 = t[(e + 1) % 3], v2 = t[(e + 2) % 3];
            // Angle-weighted vertex normal contribution at v0.
            const Vec3 e1 = (vertices_[v1] - vertices_[v0]).normalized();
            const Vec3 e2 = (vertices_[v2] - vertices_[v0]).normalized();
            const double angle = std::acos(std::clamp(e1.dot(e2), -1.0, 1.0));
            vertexNormals_[v0] += angle * n;

            const auto key = std::minmax(v0, v1);
            edgeNormalSum[{key.first, key.second}] += n;
            edgeLens.push_back((vertices_[v1] - vertices_[v0]).norm());
            edgeLenSum += edgeLens.back();
        }
    }
    for (auto &vn : vertexNormals_) vn.normalize();

    edgeNormals_.resize(triangles_.size());
    for (std::size_t ti = 0; ti < triangles_.size(); ++ti) {
        const auto &t = triangles_[ti];
        for (int e = 0; e < 3; ++e) {
            const auto key = std::minmax(t[e], t[(e + 1) % 3]);
            edgeNormals_[ti][e] = edgeNormalSum[{key.first, key.second}].normalized();
        }
    }

    // Bucket grid sized to the median edge length.
    std::nth_element(edgeLens.begin(), edgeLens.begin() + edgeLens.size() / 2,
                     edgeLens.end());
    const double cell = std::max(edgeLens[edgeLens.size() / 2], 1e-12);
    Vec3 lo = vertices_[0], hi = vertices_[0];
    for (const auto &v : vertices_) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    gridLo_ = lo - Vec3::Constant(0.5 * cell);
    const Vec3 extent = hi - gridLo_ + Vec3::Constant(0.5 * cell);
    for (int d = 0; d < 3; ++d)
        gridDims_[d] = std::max(1, std::min(256, static_cast<int>(std::ceil(extent[d] / cell))));
    cellSize_ = extent.cwiseQuotient(gridDims_.cast<double>());
    buckets_.resize(static_cast<std::size_t>(gridDims_[0]) * gridDims_[1] * gridDims_[2]);

    for (std::size_t ti = 0; ti < triangles_.size(); ++ti) {
        const auto &t = triangles_[ti];
        Vec3 tlo = vertices_[t[0]], thi = vertices_[t[0]];
        for (int k = 1; k < 3; ++k) {
            tlo = tlo.cwiseMin(vertices_[t[k]]);
            thi = thi.cwiseMax(vertices_[t[k]]);
        }
        Eigen::Vector3i ilo, ihi;
        for (int d = 0; d < 3; ++d) {
            ilo[d] = std::clamp(static_cast<int>((tlo[d] - gridLo_[d]) / cellSize_[d]), 0,
                                gridDims_[d] - 1);
            ihi[d] = std::clamp(static_cast<int>((thi[d] - gridLo_[d]) / cellSize_[d]), 0,
                                gridDims_[d] - 1);
        }
        for (int k = ilo[2]; k <= ihi[2]; ++k)
            for (int j = ilo[1]; j <= ihi[1]; ++j)
                for (int i = ilo[0]; i <= ihi[0]; ++i)
                    buckets_[bucket_index(i, j, k)].push_back(static_cast<int>(ti));
    }
}

ClosestPoint MasterSurface::classify(const Vec3 &p, int tri) const {
    const auto &t = triangles_[tri];
    int feature;
    ClosestPoint cp;
    cp.triangle = tri;
    cp.point = closest_on_triangle(p, vertices_[t[0]], vertices_[t[1]], vertices_[t[2]],
                                   feature);
    cp.distance = (p - cp.point).norm();
    Vec3 normal;
    if (feature == 6)
        normal = faceNormals_[tri];
    else if (feature >= 3)
        normal = edgeNormals_[tri][feature - 3];
    else
        normal = vertexNormals_[t[feature]];
    cp.outside = (p - cp.point).dot(normal) > 0;
    return cp;
}

ClosestPoint MasterSurface::closest_point_brute_force(const Vec3 &p) const {
    ClosestPoint best;
    best.distance = std::numeric_limits<double>::infinity();
    for (int ti = 0; ti < static_cast<int>(triangles_.size()); ++ti) {
        const ClosestPoint cand = classify(p, ti);
        if (cand.distance < best.distance) best = cand;
    }
    return best;
}

ClosestPoint MasterSurface::closest_point(const Vec3 &p) const {
    Eigen::Vector3i c;
    for (int d = 0; d < 3; ++d)
        c[d] = std::clamp(static_cast<int>((p[d] - gridLo_[d]) / cellSize_[d]), 0,
                          gridDims_[d] - 1);

    ClosestPoint best;
    best.distance = std::numeric_limits<double>::infinity();
    const int maxRing = gridDims_.maxCoeff();
    std::vector<char> seen(triangles_.size(), 0);

    for (int ring = 0; ring <= maxRing; ++ring) {
        bool any = false;
        for (int k = std::max(0, c[2] - ring); k <= std::min(gridDims_[2] - 1, c[2] + ring); ++k)
            for (int j = std::max(0, c[1] - ring); j <= std::min(gridDims_[1] - 1, c[1] + ring); ++j)
                for (int i = std::max(0, c[0] - ring); i <= std::min(gridDims_[0] - 1, c[0] + ring); ++i) {
                    const bool onShell = ring == 0 ||
                        std::abs(i - c[0]) == ring || std::abs(j - c[1]) == ring ||
                        std::abs(k - c[2]) == ring;
                    if (!onShell) continue;
                    any = true;
                    for (int ti : buckets_[bucket_index(i, j, k)]) {
                        if (seen[ti]) continue;
                        seen[ti] = 1;
                        const ClosestPoint cand = classify(p, ti);
                        if (cand.distance < best.distance ||
                            (cand.distance == best.distance && cand.triangle < best.triangle))
                            best = cand;
                    }
                }
        if (best.triangle >= 0) {
            // Geometric lower bound of anything beyond the searched box.
            Vec3 boxLo = gridLo_ + Vec3((c[0] - ring) * cellSize_[0],
                                        (c[1] - ring) * cellSize_[1],
                                        (c[2] - ring) * cellSize_[2]);
            Vec3 boxHi = gridLo_ + Vec3((c[0] + ring + 1) * cellSize_[0],
                                        (c[1] + ring + 1) * cellSize_[1],
                                        (c[2] + ring + 1) * cellSize_[2]);
            double margin = std::numeric_limits<double>::infinity();
            bool inside = true;
            for (int d = 0; d < 3; ++d) {
                if (p[d] < boxLo[d] || p[d] > boxHi[d]) inside = false;
                margin = std::min(margin, std::min(p[d] - boxLo[d], boxHi[d] - p[d]));
            }
            // Also stop when the searched box covers the whole grid.
            const bool coversAll = c[0] - ring <= 0 && c[1] - ring <= 0 && c[2] - ring <= 0 &&
                                   c[0] + ring >= gridDims_[0] - 1 &&
                                   c[1] + ring >= gridDims_[1] - 1 &&
                                   c[2] + ring >= gridDims_[2] - 1;
            if (coversAll || (inside && best.distance <= margin)) break;
        }
        (void)any;
    }
    return best;
}

MasterSurface build_master_surface(const std::vector<Vec3> &vertices,
                                   const std::vector<std::array<int, 3>> &triangles) {
    return MasterSurface(vertices, triangles);
}

ContactReport enforce_contact(const std::vector<Vec3> &referenceNodes, Field3 &u,
                              Field3 &uPrev, const std::vector<int> &slaves,
                              const MasterSurface &master) {
    ContactReport report;
    // Penetrations below the floating-point noise floor of the projection
    // are treated as resting contact, which keeps projection idempotent.
    Vec3 lo = master.vertices()[0], hi = master.vertices()[0];
    for (const auto &v : master.vertices()) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    const double eps = 1e-12 * (hi - lo).norm();
    for (int s : slaves) {
        const Vec3 x = referenceNodes[s] + u.row(s).transpose();
        const ClosestPoint cp = master.closest_point(x);
        if (!cp.outside || cp.distance <= eps) continue;
        const Vec3 correction = cp.point - x;
        u.row(s) += correction.transpose();
        uPrev.row(s) += correction.transpose();
        ++report.projectedNodes;
        report.maxPenetration = std::max(report.maxPenetration, cp.distance);
    }
    return report;
}

void make_icosphere(int subdivisions, double radius, std::vector<Vec3> &vertices,
                    std::vector<std::array<int, 3>> &triangles) {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1},
    };
    std::vector<std::array<int, 3>> f = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
    };
    for (auto &p : v) p.normalize();

    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = midpoint.find({key.first, key.second});
            if (it != midpoint.end()) return it->second;
            v.push_back(((v[a] + v[b]) * 0.5).normalized());
            const int idx = static_cast<int>(v.size()) - 1;
            midpoint[{key.first, key.second}] = idx;
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(f.size() * 4);
        for (const auto &t : f) {
            const int ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
            next.push_back({t[0], ab, ca});
            next.push_back({t[1], bc, ab});
            next.push_back({t[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        f = std::move(next);
    }
    vertices.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) vertices[i] = radius * v[i];
    triangles = f;
}

} // namespace tled
