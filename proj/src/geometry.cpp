#include "tled/geometry.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace tled {

double tet_volume(const Vec3 &a, const Vec3 &b, const Vec3 &c, const Vec3 &d) {
    return (b - a).cross(c - a).dot(d - a) / 6.0;
}

namespace {

// Natural coordinates of the 8 trilinear hex nodes.
constexpr double kHexSign[8][3] = {
    {-1, -1, -1}, {+1, -1, -1}, {+1, +1, -1}, {-1, +1, -1},
    {-1, -1, +1}, {+1, -1, +1}, {+1, +1, +1}, {-1, +1, +1},
};

Eigen::Matrix3d hex_centroid_jacobian(const std::array<Vec3, 8> &x) {
    // J_ij = d x_i / d xi_j at the element centroid.
    Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
    for (int a = 0; a < 8; ++a)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                J(i, j) += 0.125 * kHexSign[a][j] * x[a][i];
    return J;
}

} // namespace

double hex_volume(const std::array<Vec3, 8> &x) {
    return 8.0 * hex_centroid_jacobian(x).determinant();
}

float Volume::sample(const Vec3 &x_mm) const {
    Vec3 g = (x_mm - origin).cwiseQuotient(spacing);
    // The volume extends half a voxel beyond the outermost centers;
    // interpolation is clamped to the center grid over that margin.
    for (int d = 0; d < 3; ++d) {
        if (g[d] < -0.5 || g[d] > dims[d] - 0.5) return background;
        g[d] = std::clamp(g[d], 0.0, static_cast<double>(dims[d] - 1));
    }
    int i0 = static_cast<int>(std::floor(g[0]));
    int j0 = static_cast<int>(std::floor(g[1]));
    int k0 = static_cast<int>(std::floor(g[2]));
    i0 = std::min(i0, dims[0] - 2);
    j0 = std::min(j0, dims[1] - 2);
    k0 = std::min(k0, dims[2] - 2);
    i0 = std::max(i0, 0);
    j0 = std::max(j0, 0);
    k0 = std::max(k0, 0);
    const double fx = g[0] - i0, fy = g[1] - j0, fz = g[2] - k0;
    const int i1 = std::min(i0 + 1, dims[0] - 1);
    const int j1 = std::min(j0 + 1, dims[1] - 1);
    const int k1 = std::min(k0 + 1, dims[2] - 1);
    double v = 0.0;
    for (int dk = 0; dk < 2; ++dk)
        for (int dj = 0; dj < 2; ++dj)
            for (int di = 0; di < 2; ++di) {
                const double w = (di ? fx : 1 - fx) * (dj ? fy : 1 - fy) * (dk ? fz : 1 - fz);
                v += w * at(di ? i1 : i0, dj ? j1 : j0, dk ? k1 : k0);
            }
    return static_cast<float>(v);
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct LineReader {
    std::ifstream in;
    std::string path;
    int lineNo = 0;

    explicit LineReader(const std::string &p) : in(p), path(p) {
        if (!in) throw Error("cannot open mesh file: " + p);
    }
    // Next non-empty, non-comment line; false at EOF.
    bool next(std::string &out) {
        std::string line;
        while (std::getline(in, line)) {
            ++lineNo;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto ws = line.find_first_not_of(" \t\r\n");
            if (ws == std::string::npos) continue;
            out = line;
            return true;
        }
        return false;
    }
    [[noreturn]] void fail(const std::string &msg) const {
        throw ParseError(path, lineNo, msg);
    }
};

void check_index(LineReader &r, long idx, std::size_t numNodes) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= numNodes)
        r.fail("node index " + std::to_string(idx) + " out of range (have " +
               std::to_string(numNodes) + " nodes)");
}

} // namespace

Mesh load_mesh(const std::string &path) {
    LineReader r(path);
    Mesh mesh;
    std::string line;
    while (r.next(line)) {
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (keyword == "nodes") {
            long n = -1;
            if (!(ls >> n) || n < 0) r.fail("expected 'nodes N'");
            mesh.nodes.reserve(n);
            for (long i = 0; i < n; ++i) {
                if (!r.next(line)) r.fail("unexpected EOF in nodes block");
                double x, y, z;
                if (std::sscanf(line.c_str(), "%lf %lf %lf", &x, &y, &z) != 3)
                    r.fail("expected 'x y z'");
                mesh.nodes.emplace_back(x, y, z);
            }
        } else if (keyword == "hexes" || keyword == "tets" || keyword == "tris") {
            long n = -1;
            if (!(ls >> n) || n < 0) r.fail("expected '" + keyword + " N'");
            const int arity = keyword == "hexes" ? 8 : keyword == "tets" ? 4 : 3;
            for (long i = 0; i < n; ++i) {
                if (!r.next(line)) r.fail("unexpected EOF in " + keyword + " block");
                std::istringstream es(line);
                std::array<long, 8> idx{};
                for (int k = 0; k < arity; ++k) {
                    if (!(es >> idx[k])) r.fail("expected " + std::to_string(arity) + " indices");
                    check_index(r, idx[k], mesh.nodes.size());
                }
                if (arity == 8) {
                    std::array<int, 8> h;
                    for (int k = 0; k < 8; ++k) h[k] = static_cast<int>(idx[k]);
                    mesh.hexes.push_back(h);
                } else if (arity == 4) {
                    std::array<int, 4> t;
                    for (int k = 0; k < 4; ++k) t[k] = static_cast<int>(idx[k]);
                    mesh.tets.push_back(t);
                } else {
                    mesh.surfaceTris.push_back({static_cast<int>(idx[0]),
                                                static_cast<int>(idx[1]),
                                                static_cast<int>(idx[2])});
                }
            }
        } else if (keyword == "set") {
            std::string name;
            long n = -1;
            if (!(ls >> name >> n) || n < 0) r.fail("expected 'set <name> K'");
            std::vector<int> &ids = mesh.nodeSets[name];
            std::set<int> seen;
            while (static_cast<long>(ids.size()) < n) {
                if (!r.next(line)) r.fail("unexpected EOF in set block");
                std::istringstream ss(line);
                long idx;
                while (ss >> idx) {
                    check_index(r, idx, mesh.nodes.size());
                    if (!seen.insert(static_cast<int>(idx)).second)
                        r.fail("duplicate index " + std::to_string(idx) + " in set '" + name + "'");
                    ids.push_back(static_cast<int>(idx));
                }
            }
            if (static_cast<long>(ids.size()) != n) r.fail("set '" + name + "' has too many indices");
        } else if (keyword == "hexregions" || keyword == "tetregions") {
            const bool forHex = keyword == "hexregions";
            long n = -1;
            if (!(ls >> n) || n < 0) r.fail("expected '" + keyword + " N'");
            std::vector<int> &regions = forHex ? mesh.hexRegions : mesh.tetRegions;
            while (static_cast<long>(regions.size()) < n) {
                if (!r.next(line)) r.fail("unexpected EOF in " + keyword + " block");
                std::istringstream ss(line);
                long v;
                while (ss >> v) regions.push_back(static_cast<int>(v));
            }
        } else {
            r.fail("unknown keyword '" + keyword + "'");
        }
    }

    // Reject degenerate elements; rewind fixable (negative) tets.
    for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
        auto &t = mesh.tets[e];
        double v = tet_volume(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]], mesh.nodes[t[3]]);
        if (v < 0) {
            std::swap(t[1], t[2]);
            v = -v;
        }
        if (v <= 0)
            throw Error("degenerate element: tet " + std::to_string(e) + " in " + path);
    }
    for (std::size_t e = 0; e < mesh.hexes.size(); ++e) {
        std::array<Vec3, 8> x;
        for (int a = 0; a < 8; ++a) x[a] = mesh.nodes[mesh.hexes[e][a]];
        double v = hex_volume(x);
        if (v < 0) {
            // Mirror the natural coordinates: swap bottom and top faces.
            auto &h = mesh.hexes[e];
            std::array<int, 8> rew = {h[4], h[5], h[6], h[7], h[0], h[1], h[2], h[3]};
            h = rew;
            v = -v;
        }
        if (v <= 0)
            throw Error("degenerate element: hex " + std::to_string(e) + " in " + path);
    }
    if (!mesh.hexRegions.empty() && mesh.hexRegions.size() != mesh.hexes.size())
        throw Error("hexregions count mismatch in " + path);
    if (!mesh.tetRegions.empty() && mesh.tetRegions.size() != mesh.tets.size())
        throw Error("tetregions count mismatch in " + path);
    return mesh;
}

void write_mesh(const std::string &path, const Mesh &mesh) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write mesh file: " + path);
    out << "nodes " << mesh.nodes.size() << "\n";
    for (const auto &n : mesh.nodes)
        out << fmt_double(n[0]) << " " << fmt_double(n[1]) << " " << fmt_double(n[2]) << "\n";
    if (!mesh.hexes.empty()) {
        out << "hexes " << mesh.hexes.size() << "\n";
        for (const auto &h : mesh.hexes) {
            for (int k = 0; k < 8; ++k) out << h[k] << (k == 7 ? "\n" : " ");
        }
    }
    if (!mesh.tets.empty()) {
        out << "tets " << mesh.tets.size() << "\n";
        for (const auto &t : mesh.tets) {
            for (int k = 0; k < 4; ++k) out << t[k] << (k == 3 ? "\n" : " ");
        }
    }
    if (!mesh.surfaceTris.empty()) {
        out << "tris " << mesh.surfaceTris.size() << "\n";
        for (const auto &t : mesh.surfaceTris) {
            for (int k = 0; k < 3; ++k) out << t[k] << (k == 2 ? "\n" : " ");
        }
    }
    if (!mesh.hexRegions.empty()) {
        out << "hexregions " << mesh.hexRegions.size() << "\n";
        for (std::size_t i = 0; i < mesh.hexRegions.size(); ++i)
            out << mesh.hexRegions[i] << (i + 1 == mesh.hexRegions.size() ? "\n" : " ");
    }
    if (!mesh.tetRegions.empty()) {
        out << "tetregions " << mesh.tetRegions.size() << "\n";
        for (std::size_t i = 0; i < mesh.tetRegions.size(); ++i)
            out << mesh.tetRegions[i] << (i + 1 == mesh.tetRegions.size() ? "\n" : " ");
    }
    for (const auto &[name, ids] : mesh.nodeSets) {
        out << "set " << name << " " << ids.size() << "\n";
        for (std::size_t i = 0; i < ids.size(); ++i)
            out << ids[i] << (i + 1 == ids.size() ? "\n" : " ");
    }
}

ValidationReport validate_mesh(const Mesh &mesh) {
    ValidationReport rep;
    std::vector<char> referenced(mesh.nodes.size(), 0);
    std::set<std::array<int, 8>> seenHex;
    std::set<std::array<int, 4>> seenTet;

    for (std::size_t e = 0; e < mesh.hexes.size(); ++e) {
        const auto &h = mesh.hexes[e];
        std::array<Vec3, 8> x;
        for (int a = 0; a < 8; ++a) {
            referenced[h[a]] = 1;
            x[a] = mesh.nodes[h[a]];
        }
        const double v = hex_volume(x);
        rep.elements.push_back({true, static_cast<int>(e), v, v > 0 ? 1 : (v < 0 ? -1 : 0)});
        if (v <= 0) {
            rep.ok = false;
            rep.degenerate.emplace_back(true, static_cast<int>(e));
            rep.messages.push_back("hex " + std::to_string(e) + " has non-positive volume");
        }
        auto sorted = h;
        std::sort(sorted.begin(), sorted.end());
        if (!seenHex.insert(sorted).second) {
            rep.duplicateElements.push_back("hex " + std::to_string(e));
            rep.ok = false;
        }
    }
    for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
        const auto &t = mesh.tets[e];
        for (int a = 0; a < 4; ++a) referenced[t[a]] = 1;
        const double v =
            tet_volume(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]], mesh.nodes[t[3]]);
        rep.elements.push_back({false, static_cast<int>(e), v, v > 0 ? 1 : (v < 0 ? -1 : 0)});
        if (v < 0) {
            rep.ok = false;
            rep.degenerate.emplace_back(false, static_cast<int>(e));
            rep.fixableByRewinding.emplace_back(false, static_cast<int>(e));
            rep.messages.push_back("tet " + std::to_string(e) +
                                   " is inverted; swapping nodes 1 and 2 fixes the winding");
        } else if (v == 0) {
            rep.ok = false;
            rep.degenerate.emplace_back(false, static_cast<int>(e));
            rep.messages.push_back("tet " + std::to_string(e) + " has zero volume");
        }
        auto sorted = t;
        std::sort(sorted.begin(), sorted.end());
        if (!seenTet.insert(sorted).second) {
            rep.duplicateElements.push_back("tet " + std::to_string(e));
            rep.ok = false;
        }
    }
    for (std::size_t i = 0; i < referenced.size(); ++i)
        if (!referenced[i]) {
            rep.unreferencedNodes.push_back(static_cast<int>(i));
            rep.messages.push_back("unreferenced node " + std::to_string(i));
        }
    for (const auto &[name, ids] : mesh.nodeSets) {
        std::set<int> uniq(ids.begin(), ids.end());
        if (uniq.size() != ids.size()) {
            rep.ok = false;
            rep.messages.push_back("node set '" + name + "' contains duplicates");
        }
    }
    return rep;
}

VecX lumped_mass(const Mesh &mesh, const std::vector<double> &densityPerRegion) {
    for (double rho : densityPerRegion)
        if (!(rho > 0)) throw Error("non-positive density");
    auto density = [&](int region) {
        if (region < 0 || region >= static_cast<int>(densityPerRegion.size()))
            throw Error("no density for region " + std::to_string(region));
        return densityPerRegion[region];
    };
    VecX mass = VecX::Zero(mesh.num_nodes());
    for (std::size_t e = 0; e < mesh.hexes.size(); ++e) {
        std::array<Vec3, 8> x;
        for (int a = 0; a < 8; ++a) x[a] = mesh.nodes[mesh.hexes[e][a]];
        const double v = hex_volume(x);
        if (v <= 0) throw Error("degenerate element: hex " + std::to_string(e));
        const double m = v * density(mesh.hexRegions.empty() ? 0 : mesh.hexRegions[e]) / 8.0;
        for (int a = 0; a < 8; ++a) mass[mesh.hexes[e][a]] += m;
    }
    for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
        const auto &t = mesh.tets[e];
        const double v =
            tet_volume(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]], mesh.nodes[t[3]]);
        if (v <= 0) throw Error("degenerate element: tet " + std::to_string(e));
        const double m = v * density(mesh.tetRegions.empty() ? 0 : mesh.tetRegions[e]) / 4.0;
        for (int a = 0; a < 4; ++a) mass[t[a]] += m;
    }
    return mass;
}

namespace {

std::string raw_path_for(const std::string &headerPath, const nlohmann::json &hdr) {
    if (hdr.contains("raw")) {
        std::string raw = hdr["raw"].get<std::string>();
        const auto slash = headerPath.find_last_of('/');
        if (slash != std::string::npos && raw.find('/') == std::string::npos)
            raw = headerPath.substr(0, slash + 1) + raw;
        return raw;
    }
    std::string raw = headerPath;
    const auto dot = raw.find_last_of('.');
    if (dot != std::string::npos) raw.erase(dot);
    return raw + ".raw";
}

} // namespace

Volume load_volume(const std::string &headerPath) {
    std::ifstream in(headerPath);
    if (!in) throw Error("cannot open volume header: " + headerPath);
    nlohmann::json hdr = nlohmann::json::parse(in);

    Volume v;
    for (int i = 0; i < 3; ++i) {
        v.dims[i] = hdr.at("dims")[i].get<int>();
        v.spacing[i] = hdr.at("spacing_mm")[i].get<double>();
        v.origin[i] = hdr.at("origin_mm")[i].get<double>();
        if (v.dims[i] <= 0) throw Error("non-positive dims in " + headerPath);
        if (!(v.spacing[i] > 0)) throw Error("non-positive spacing in " + headerPath);
    }
    if (hdr.at("dtype").get<std::string>() != "f32")
        throw Error("unsupported dtype in " + headerPath + " (only f32)");
    v.background = hdr.value("background", 0.f);

    const std::string rawPath = raw_path_for(headerPath, hdr);
    std::ifstream raw(rawPath, std::ios::binary);
    if (!raw) throw Error("cannot open volume payload: " + rawPath);
    raw.seekg(0, std::ios::end);
    const std::size_t bytes = static_cast<std::size_t>(raw.tellg());
    raw.seekg(0);
    const std::size_t expected =
        static_cast<std::size_t>(v.dims[0]) * v.dims[1] * v.dims[2];
    if (bytes != expected * sizeof(float))
        throw Error("volume payload length mismatch: header declares " +
                     std::to_string(expected) + " voxels, payload holds " +
                     std::to_string(bytes / sizeof(float)));
    v.scalars.resize(expected);
    raw.read(reinterpret_cast<char *>(v.scalars.data()),
             static_cast<std::streamsize>(bytes));
    if (!raw) throw Error("short read on volume payload: " + rawPath);
    return v;
}

void write_volume(const std::string &headerPath, const Volume &v) {
    nlohmann::json hdr;
    hdr["dims"] = {v.dims[0], v.dims[1], v.dims[2]};
    hdr["spacing_mm"] = {v.spacing[0], v.spacing[1], v.spacing[2]};
    hdr["origin_mm"] = {v.origin[0], v.origin[1], v.origin[2]};
    hdr["dtype"] = "f32";
    hdr["background"] = v.background;
    std::string rawPath = headerPath;
    const auto dot = rawPath.find_last_of('.');
    if (dot != std::string::npos) rawPath.erase(dot);
    rawPath += ".raw";

    std::ofstream out(headerPath);
    if (!out) throw Error("cannot write volume header: " + headerPath);
    out << hdr.dump(2) << "\n";
    std::ofstream raw(rawPath, std::ios::binary);
    if (!raw) throw Error("cannot write volume payload: " + rawPath);
    raw.write(reinterpret_cast<const char *>(v.scalars.data()),
              static_cast<std::streamsize>(v.scalars.size() * sizeof(float)));
}

Mesh make_box_hex_mesh(int nx, int ny, int nz, double lx, double ly, double lz) {
    Mesh mesh;
    auto id = [&](int i, int j, int k) { return i + (nx + 1) * (j + (ny + 1) * k); };
    for (int k = 0; k <= nz; ++k)
        for (int j = 0; j <= ny; ++j)
            for (int i = 0; i <= nx; ++i)
                mesh.nodes.emplace_back(lx * i / nx, ly * j / ny, lz * k / nz);
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i)
                mesh.hexes.push_back({id(i, j, k), id(i + 1, j, k), id(i + 1, j + 1, k),
                                      id(i, j + 1, k), id(i, j, k + 1), id(i + 1, j, k + 1),
                                      id(i + 1, j + 1, k + 1), id(i, j + 1, k + 1)});
    auto &x0 = mesh.nodeSets["x0"]; auto &x1 = mesh.nodeSets["x1"];
    auto &y0 = mesh.nodeSets["y0"]; auto &y1 = mesh.nodeSets["y1"];
    auto &z0 = mesh.nodeSets["z0"]; auto &z1 = mesh.nodeSets["z1"];
    auto &boundary = mesh.nodeSets["boundary"];
    for (int k = 0; k <= nz; ++k)
        for (int j = 0; j <= ny; ++j)
            for (int i = 0; i <= nx; ++i) {
                const int n = id(i, j, k);
                if (i == 0) x0.push_back(n);
                if (i == nx) x1.push_back(n);
                if (j == 0) y0.push_back(n);
                if (j == ny) y1.push_back(n);
                if (k == 0) z0.push_back(n);
                if (k == nz) z1.push_back(n);
                if (i == 0 || i == nx || j == 0 || j == ny || k == 0 || k == nz)
                    boundary.push_back(n);
            }
    return mesh;
}

Mesh make_box_tet_mesh(int nx, int ny, int nz, double lx, double ly, double lz) {
    Mesh mesh = make_box_hex_mesh(nx, ny, nz, lx, ly, lz);
    // Six tets per brick; shared main diagonal keeps faces compatible.
    static const int split[6][4] = {
        {0, 1, 2, 6}, {0, 2, 3, 6}, {0, 3, 7, 6},
        {0, 7, 4, 6}, {0, 4, 5, 6}, {0, 5, 1, 6},
    };
    for (const auto &h : mesh.hexes)
        for (const auto &s : split) {
            std::array<int, 4> t = {h[s[0]], h[s[1]], h[s[2]], h[s[3]]};
            const double v =
                tet_volume(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]], mesh.nodes[t[3]]);
            if (v < 0) std::swap(t[1], t[2]);
            mesh.tets.push_back(t);
        }
    mesh.hexes.clear();
    return mesh;
}

PointCloud make_box_cloud(int nx, int ny, int nz, double lx, double ly, double lz,
                          int cellsPerAxis) {
    PointCloud cloud;
    for (int k = 0; k <= nz; ++k)
        for (int j = 0; j <= ny; ++j)
            for (int i = 0; i <= nx; ++i)
                cloud.nodes.emplace_back(lx * i / nx, ly * j / ny, lz * k / nz);
    const int c = cellsPerAxis;
    for (int k = 0; k < c; ++k)
        for (int j = 0; j < c; ++j)
            for (int i = 0; i < c; ++i)
                cloud.backgroundCells.push_back(
                    {Vec3(lx * i / c, ly * j / c, lz * k / c),
                     Vec3(lx * (i + 1) / c, ly * (j + 1) / c, lz * (k + 1) / c)});
    auto &boundary = cloud.boundaryNodes["boundary"];
    auto &bottom = cloud.boundaryNodes["z0"];
    auto &top = cloud.boundaryNodes["z1"];
    int n = 0;
    for (int k = 0; k <= nz; ++k)
        for (int j = 0; j <= ny; ++j)
            for (int i = 0; i <= nx; ++i, ++n) {
                if (i == 0 || i == nx || j == 0 || j == ny || k == 0 || k == nz)
                    boundary.push_back(n);
                if (k == 0) bottom.push_back(n);
                if (k == nz) top.push_back(n);
            }
    return cloud;
}

} // namespace tled
