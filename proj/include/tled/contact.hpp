#ifndef TLED_CONTACT_HPP_
#define TLED_CONTACT_HPP_

#include "tled/types.hpp"

#include <array>
#include <vector>

namespace tled {

struct ClosestPoint {
    Vec3 point;
    int triangle = -1;
    double distance = 0;
    bool outside = false; // positive side of the outward pseudo-normal
};

// Rigid, closed, consistently oriented triangulated surface with a uniform
// grid index for closest-point queries.
class MasterSurface {
public:
    MasterSurface(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> triangles);

    // Exact closest point over the whole surface plus the signed side from
    // angle-weighted pseudo-normals.
    ClosestPoint closest_point(const Vec3 &p) const;
    // Reference implementation scanning every triangle; queries must agree.
    ClosestPoint closest_point_brute_force(const Vec3 &p) const;

    const std::vector<Vec3> &vertices() const { return vertices_; }
    const std::vector<std::array<int, 3>> &triangles() const { return triangles_; }

private:
    ClosestPoint classify(const Vec3 &p, int tri) const;

    std::vector<Vec3> vertices_;
    std::vector<std::array<int, 3>> triangles_;
    std::vector<Vec3> faceNormals_;
    std::vector<Vec3> vertexNormals_;              // angle-weighted
    std::vector<std::array<Vec3, 3>> edgeNormals_; // per tri, edge (a,b),(b,c),(c,a)

    // Uniform bucket grid over the surface bounding box.
    Vec3 gridLo_, cellSize_;
    Eigen::Vector3i gridDims_;
    std::vector<std::vector<int>> buckets_;
    std::size_t bucket_index(int i, int j, int k) const;
};

MasterSurface build_master_surface(const std::vector<Vec3> &vertices,
                                   const std::vector<std::array<int, 3>> &triangles);

struct ContactReport {
    int projectedNodes = 0;
    double maxPenetration = 0; // m, before projection
};

// Projects penetrating slave nodes (outside the closed master surface) to
// the closest surface point. uPrev receives the same correction so the
// projection does not turn into velocity on the next step. Purely
// kinematic; nodes inside the surface are untouched.
ContactReport enforce_contact(const std::vector<Vec3> &referenceNodes, Field3 &u,
                              Field3 &uPrev, const std::vector<int> &slaves,
                              const MasterSurface &master);

// Unit icosphere used by tests and the verify suites.
void make_icosphere(int subdivisions, double radius, std::vector<Vec3> &vertices,
                    std::vector<std::array<int, 3>> &triangles);

} // namespace tled

#endif // TLED_CONTACT_HPP_
