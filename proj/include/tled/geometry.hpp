#ifndef TLED_GEOMETRY_HPP_
#define TLED_GEOMETRY_HPP_

#include "tled/types.hpp"

#include <array>
#include <map>
#include <string>
#include <vector>

namespace tled {

// Reference-configuration mixed hex/tet mesh. Coordinates in meters.
// Immutable after load; all solver quantities are precomputed from it.
struct Mesh {
    std::vector<Vec3> nodes;
    std::vector<std::array<int, 8>> hexes;
    std::vector<std::array<int, 4>> tets;
    std::vector<std::array<int, 3>> surfaceTris;
    std::map<std::string, std::vector<int>> nodeSets;
    // Per-element material region (empty means region 0 everywhere).
    std::vector<int> hexRegions;
    std::vector<int> tetRegions;

    int num_nodes() const { return static_cast<int>(nodes.size()); }
};

// Meshless discretization: nodes plus an axis-aligned background
// integration grid covering the domain.
struct PointCloud {
    struct Cell {
        Vec3 lo;
        Vec3 hi;
        double volume() const { return (hi - lo).prod(); }
    };

    std::vector<Vec3> nodes;
    std::vector<int> regionLabel; // empty means region 0 everywhere
    std::vector<Cell> backgroundCells;
    std::map<std::string, std::vector<int>> boundaryNodes;

    int num_nodes() const { return static_cast<int>(nodes.size()); }
    int region(int node) const {
        return regionLabel.empty() ? 0 : regionLabel[node];
    }
};

// 3D scalar image. Image-space quantities are in millimeters.
struct Volume {
    Eigen::Vector3i dims;
    Vec3 spacing; // mm per voxel
    Vec3 origin;  // mm, center of voxel (0,0,0)
    std::vector<float> scalars; // x-fastest order
    float background = 0.f;

    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               dims[0] * (static_cast<std::size_t>(j) + dims[1] * static_cast<std::size_t>(k));
    }
    float at(int i, int j, int k) const { return scalars[index(i, j, k)]; }
    float &at(int i, int j, int k) { return scalars[index(i, j, k)]; }
    Vec3 voxel_center(int i, int j, int k) const {
        return origin + Vec3(i * spacing[0], j * spacing[1], k * spacing[2]);
    }
    // Trilinear sample at a point in mm; background outside the grid.
    float sample(const Vec3 &x_mm) const;
};

struct ValidationReport {
    struct ElementInfo {
        bool isHex;
        int index;
        double volume;
        int jacobianSign;
    };
    bool ok = true;
    std::vector<ElementInfo> elements;
    std::vector<int> unreferencedNodes;           // warning only
    std::vector<std::pair<bool, int>> degenerate; // (isHex, index), volume <= 0
    std::vector<std::pair<bool, int>> fixableByRewinding; // negative tets
    std::vector<std::string> duplicateElements;
    std::vector<std::string> messages;
};

double tet_volume(const Vec3 &a, const Vec3 &b, const Vec3 &c, const Vec3 &d);
// Single-point (centroid) Jacobian volume of a trilinear hex.
double hex_volume(const std::array<Vec3, 8> &x);

Mesh load_mesh(const std::string &path);
void write_mesh(const std::string &path, const Mesh &mesh);

ValidationReport validate_mesh(const Mesh &mesh);

// Lumped nodal masses: each element spreads rho*V0 equally over its nodes.
VecX lumped_mass(const Mesh &mesh, const std::vector<double> &densityPerRegion);
inline VecX lumped_mass(const Mesh &mesh, double density) {
    return lumped_mass(mesh, std::vector<double>{density});
}

Volume load_volume(const std::string &headerPath);
void write_volume(const std::string &headerPath, const Volume &v);

// Structured box helpers used by tests, verify suites and bundled examples.
Mesh make_box_hex_mesh(int nx, int ny, int nz, double lx, double ly, double lz);
Mesh make_box_tet_mesh(int nx, int ny, int nz, double lx, double ly, double lz);
PointCloud make_box_cloud(int nx, int ny, int nz, double lx, double ly, double lz,
                          int cellsPerAxis);

} // namespace tled

#endif // TLED_GEOMETRY_HPP_
