#include "tled/model.hpp"

#include "tled/contact.hpp"
#include "tled/fem.hpp"
#include "tled/metrics.hpp"
#include "tled/warp.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace tled {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string resolve(const std::string &dir, const std::string &path) {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    return (fs::path(dir) / path).string();
}

Vec3 to_vec3(const json &a, const char *what) {
    if (!a.is_array() || a.size() != 3)
        throw Error(std::string(what) + " must be a 3-element array");
    return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

MaterialParams parse_material(const json &m) {
    MaterialParams p;
    const std::string model = m.value("model", "neo-hookean");
    if (model == "neo-hookean") {
        p.model = MaterialModel::NeoHookean;
    } else if (model == "ogden") {
        p.model = MaterialModel::OgdenVisco;
    } else {
        throw Error("unknown material model '" + model + "'");
    }
    p.E = m.at("E").get<double>();
    p.nu = m.at("nu").get<double>();
    if (m.contains("ogdenMu")) p.ogdenMu = m["ogdenMu"].get<std::vector<double>>();
    if (m.contains("ogdenAlpha"))
        p.ogdenAlpha = m["ogdenAlpha"].get<std::vector<double>>();
    if (m.contains("prony"))
        for (const auto &term : m["prony"])
            p.prony.push_back({term.at("g").get<double>(), term.at("tau").get<double>()});
    p.validate();
    return p;
}

} // namespace

RunConfig load_run_config(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception &e) {
        throw Error("config parse error in " + path + ": " + e.what());
    }

    RunConfig cfg;
    cfg.configDir = fs::path(path).parent_path().string();
    if (cfg.configDir.empty()) cfg.configDir = ".";

    try {
        const auto &geom = j.at("geometry");
        cfg.meshPath = geom.at("mesh").get<std::string>();
        const std::string disc = geom.value("discretization", "fem");
        if (disc == "fem") {
            cfg.discretization = Discretization::Fem;
        } else if (disc == "meshless") {
            cfg.discretization = Discretization::Meshless;
        } else {
            throw Error("unknown discretization '" + disc + "'");
        }
        if (geom.contains("backgroundCells")) {
            const Vec3 c = to_vec3(geom["backgroundCells"], "backgroundCells");
            cfg.backgroundCells = c.cast<int>();
            if (cfg.backgroundCells.minCoeff() < 1)
                throw Error("backgroundCells must be positive");
        }
        if (geom.contains("mmls")) {
            const auto &m = geom["mmls"];
            cfg.mmls.order = m.value("order", cfg.mmls.order);
            cfg.mmls.dilationLinear = m.value("dilationLinear", cfg.mmls.dilationLinear);
            cfg.mmls.dilationQuadratic =
                m.value("dilationQuadratic", cfg.mmls.dilationQuadratic);
            cfg.mmls.integrationTol = m.value("integrationTol", cfg.mmls.integrationTol);
            cfg.mmls.maxDepth = m.value("maxDepth", cfg.mmls.maxDepth);
        }

        for (const auto &m : j.at("materials")) {
            cfg.materials.push_back(parse_material(m));
            const double rho = m.at("density").get<double>();
            if (!(rho > 0)) throw Error("density must be positive");
            cfg.densities.push_back(rho);
        }
        if (cfg.materials.empty()) throw Error("at least one material block required");

        const auto &load = j.at("loading");
        cfg.loadNodeSet = load.at("nodeSet").get<std::string>();
        const std::string units = load.at("units").get<std::string>();
        double scale = 1.0;
        if (units == "mm") {
            scale = 1e-3;
        } else if (units != "m") {
            throw Error("loading.units must be 'm' or 'mm'");
        }
        if (load.contains("displacement"))
            cfg.loadDisplacement = scale * to_vec3(load["displacement"], "displacement");
        if (load.contains("displacementFile")) {
            const PointSet per =
                load_point_csv(resolve(cfg.configDir, load["displacementFile"]));
            cfg.loadPerNode = per.points;
            for (auto &v : cfg.loadPerNode) v *= scale;
        }
        if (!load.contains("displacement") && !load.contains("displacementFile"))
            throw Error("loading requires 'displacement' or 'displacementFile'");
        cfg.rampTime = load.value("rampTime", cfg.rampTime);
        if (!(cfg.rampTime > 0)) throw Error("rampTime must be positive");

        if (j.contains("contact")) {
            cfg.contactMeshPath = j["contact"].at("mesh").get<std::string>();
            cfg.contactSlaveSet = j["contact"].at("slaveSet").get<std::string>();
        }

        if (j.contains("solver")) {
            const auto &s = j["solver"];
            const std::string type = s.value("type", "dr");
            if (type == "dr") {
                cfg.solver = SolverType::DynamicRelaxation;
            } else if (type == "timeAccurate") {
                cfg.solver = SolverType::TimeAccurate;
            } else {
                throw Error("unknown solver type '" + type + "'");
            }
            cfg.dtSafety = s.value("dtSafety", cfg.dtSafety);
            if (!(cfg.dtSafety > 0)) throw Error("dtSafety must be positive");
            cfg.dr.tolerance = s.value("tolerance", cfg.dr.tolerance);
            cfg.dr.maxIterations = s.value("maxIterations", cfg.dr.maxIterations);
            cfg.dr.settleSteps = s.value("settleSteps", cfg.dr.settleSteps);
            cfg.dr.adaptiveDamping = s.value("adaptiveDamping", cfg.dr.adaptiveDamping);
            cfg.dr.fixedDamping = s.value("fixedDamping", cfg.dr.fixedDamping);
            cfg.dr.massScaling = s.value("massScaling", cfg.dr.massScaling);
            cfg.duration = s.value("duration", cfg.duration);
            if (s.contains("snapshotTimes"))
                cfg.snapshotTimes = s["snapshotTimes"].get<std::vector<double>>();
            if (cfg.solver == SolverType::TimeAccurate) {
                if (!(cfg.duration > 0))
                    throw Error("timeAccurate solver requires a positive duration");
                if (s.value("massScaling", 1.0) != 1.0)
                    throw Error("mass scaling is not allowed for time-accurate solves");
            }
        }

        if (j.contains("warp")) {
            const auto &w = j["warp"];
            cfg.sourceVolumePath = w.at("sourceVolume").get<std::string>();
            cfg.warpLevels = w.value("levels", cfg.warpLevels);
            cfg.warpInitialSpacing = w.value("initialSpacing_mm", cfg.warpInitialSpacing);
            if (cfg.warpLevels < 1) throw Error("warp.levels must be >= 1");
        }

        cfg.outputDir = resolve(cfg.configDir, j.value("output", std::string(".")));
    } catch (const json::exception &e) {
        throw Error("config error in " + path + ": " + e.what());
    }
    return cfg;
}

double hourglass_coefficient() {
    if (const char *env = std::getenv("TLED_HOURGLASS_COEFF")) {
        const double v = std::atof(env);
        if (v >= 0) return v;
    }
    return 0.1;
}

namespace {

// Meshless view of a mesh file: the nodes become the cloud, the bounding box
// becomes the background integration grid, node sets carry over.
PointCloud cloud_from_mesh(const Mesh &mesh, const Eigen::Vector3i &cells) {
    PointCloud cloud;
    cloud.nodes = mesh.nodes;
    cloud.boundaryNodes = mesh.nodeSets;

    if (!mesh.hexRegions.empty() || !mesh.tetRegions.empty()) {
        cloud.regionLabel.assign(mesh.nodes.size(), 0);
        for (std::size_t e = 0; e < mesh.hexes.size(); ++e)
            for (int n : mesh.hexes[e])
                cloud.regionLabel[n] = mesh.hexRegions.empty() ? 0 : mesh.hexRegions[e];
        for (std::size_t e = 0; e < mesh.tets.size(); ++e)
            for (int n : mesh.tets[e])
                cloud.regionLabel[n] = mesh.tetRegions.empty() ? 0 : mesh.tetRegions[e];
    }

    Vec3 lo = mesh.nodes[0], hi = mesh.nodes[0];
    for (const auto &p : mesh.nodes) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const Vec3 step = (hi - lo).cwiseQuotient(cells.cast<double>());
    for (int k = 0; k < cells[2]; ++k)
        for (int j = 0; j < cells[1]; ++j)
            for (int i = 0; i < cells[0]; ++i) {
                PointCloud::Cell cell;
                cell.lo = lo + Vec3(i * step[0], j * step[1], k * step[2]);
                cell.hi = cell.lo + step;
                cloud.backgroundCells.push_back(cell);
            }
    return cloud;
}

std::vector<int> node_set(const Mesh &mesh, const std::string &name) {
    const auto it = mesh.nodeSets.find(name);
    if (it == mesh.nodeSets.end())
        throw Error("node set '" + name + "' not found in mesh");
    return it->second;
}

Field3 build_targets(const RunConfig &cfg, const std::vector<int> &nodes) {
    Field3 targets(nodes.size(), 3);
    if (!cfg.loadPerNode.empty()) {
        if (cfg.loadPerNode.size() != nodes.size())
            throw Error("displacementFile row count (" +
                        std::to_string(cfg.loadPerNode.size()) +
                        ") does not match node set size (" +
                        std::to_string(nodes.size()) + ")");
        for (std::size_t k = 0; k < nodes.size(); ++k)
            targets.row(k) = cfg.loadPerNode[k].transpose();
    } else {
        targets.rowwise() = cfg.loadDisplacement.transpose();
    }
    return targets;
}

struct ContactSetup {
    std::unique_ptr<MasterSurface> master;
    std::vector<int> slaves;
};

ContactSetup build_contact(const RunConfig &cfg, const Mesh &mesh) {
    ContactSetup c;
    if (!cfg.contactMeshPath) return c;
    const Mesh skull = load_mesh(resolve(cfg.configDir, *cfg.contactMeshPath));
    if (skull.surfaceTris.empty())
        throw Error("contact mesh has no surface triangles (tris block)");
    c.master = std::make_unique<MasterSurface>(skull.nodes, skull.surfaceTris);
    c.slaves = node_set(mesh, cfg.contactSlaveSet);
    return c;
}

void write_displacements(const std::string &path, const Field3 &u) {
    PointSet set;
    set.points.reserve(u.rows());
    for (Eigen::Index i = 0; i < u.rows(); ++i)
        set.points.push_back(u.row(i).transpose());
    write_point_csv(path, set);
}

Field3 read_displacements(const std::string &path, int numNodes) {
    const PointSet set = load_point_csv(path);
    if (static_cast<int>(set.points.size()) != numNodes)
        throw Error("displacement file " + path + " has " +
                    std::to_string(set.points.size()) + " rows, mesh has " +
                    std::to_string(numNodes) + " nodes");
    Field3 u(numNodes, 3);
    for (int i = 0; i < numNodes; ++i) u.row(i) = set.points[i].transpose();
    return u;
}

void write_report(const std::string &path, const ConvergenceReport &report,
                  const SolveOutputs &out) {
    json j;
    j["converged"] = report.converged;
    j["iterations"] = report.iterations;
    j["finalResidual"] = report.finalResidual;
    j["dampingUsed"] = report.dampingUsed;
    j["maxDisplacement_m"] = out.maxDisplacement;
    j["numNodes"] = out.numNodes;
    j["dt_s"] = out.dt;
    std::ofstream o(path);
    o << j.dump(2) << "\n";
}

double mesh_diameter(const std::vector<Vec3> &nodes) {
    Vec3 lo = nodes[0], hi = nodes[0];
    for (const auto &p : nodes) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return (hi - lo).norm();
}

} // namespace

SolveOutputs run_solve(const RunConfig &cfg) {
    const Mesh mesh = load_mesh(resolve(cfg.configDir, cfg.meshPath));
    const std::vector<RegionLaw> laws = make_region_laws(cfg.materials);
    const std::vector<int> loadNodes = node_set(mesh, cfg.loadNodeSet);
    const Field3 targets = build_targets(cfg, loadNodes);
    ContactSetup contact = build_contact(cfg, mesh);
    const double diameter = mesh_diameter(mesh.nodes);

    SolveOutputs out;
    out.numNodes = mesh.num_nodes();

    ForceFn forces;
    VecX mass;
    double dtCrit = 0;
    Constraints constraints;
    constraints.rampTime = cfg.rampTime;

    // Meshless state kept alive through the solve.
    std::shared_ptr<PointCloud> cloud;
    std::shared_ptr<ShapeFunctionTable> table;
    std::shared_ptr<CorrectionOperator> correction;
    std::shared_ptr<ElementPrecomp> pre;

    if (cfg.discretization == Discretization::Fem) {
        pre = std::make_shared<ElementPrecomp>(
            precompute_elements(mesh, hourglass_coefficient()));
        mass = lumped_mass(mesh, cfg.densities);
        dtCrit = critical_time_step(mesh, laws, cfg.densities);
        constraints.prescribedNodes = loadNodes;
        constraints.prescribedTargets = targets;
        forces = [pre, &mesh, &laws](const Field3 &u, Field3 &f) {
            internal_forces(*pre, mesh.nodes, u, laws, f);
        };
    } else {
        cloud = std::make_shared<PointCloud>(cloud_from_mesh(mesh, cfg.backgroundCells));
        table = std::make_shared<ShapeFunctionTable>(
            adaptive_integration(*cloud, cfg.mmls));
        const std::vector<double> radii = support_radii(*cloud, cfg.mmls);
        correction = std::make_shared<CorrectionOperator>(
            ebciem_build(*cloud, radii, loadNodes, cfg.mmls));
        mass = lumped_mass(*table, *cloud, cfg.densities);
        dtCrit = critical_time_step(*cloud, laws, cfg.densities);
        forces = [table, &laws](const Field3 &u, Field3 &f) {
            mtled_internal_forces(*table, u, laws, f);
        };
    }

    const double dt = cfg.dtSafety * dtCrit;
    out.dt = dt;

    const double rampTime = cfg.rampTime;
    constraints.hook = [&, dt](Field3 &u, Field3 &uPrev, double t) {
        if (correction) {
            const Field3 now = ramp_factor(t, rampTime) * targets;
            const Field3 before = ramp_factor(std::max(t - dt, 0.0), rampTime) * targets;
            correction->apply(u, now);
            correction->apply(uPrev, before);
        }
        if (contact.master)
            enforce_contact(mesh.nodes, u, uPrev, contact.slaves, *contact.master);
    };

    fs::create_directories(cfg.outputDir);
    Field3 u = Field3::Zero(mesh.num_nodes(), 3);
    ConvergenceReport report;

    if (cfg.solver == SolverType::DynamicRelaxation) {
        report = dynamic_relaxation_solve(forces, mass, dt, constraints, cfg.dr, u,
                                          diameter);
    } else {
        std::vector<double> snaps = cfg.snapshotTimes;
        if (snaps.empty()) snaps.push_back(cfg.duration);
        const auto trajectory =
            time_accurate_solve(forces, mass, dt, constraints, cfg.duration, snaps,
                                diameter);
        for (std::size_t s = 0; s < trajectory.size(); ++s) {
            char name[64];
            std::snprintf(name, sizeof(name), "snapshot_%02zu.csv", s);
            write_displacements((fs::path(cfg.outputDir) / name).string(),
                                trajectory[s].u);
        }
        u = trajectory.back().u;
        report.converged = true;
        report.iterations = static_cast<int>(std::ceil(cfg.duration / dt));
    }

    out.u = u;
    out.report = report;
    out.maxDisplacement = u.rowwise().norm().maxCoeff();

    write_displacements((fs::path(cfg.outputDir) / "displacements.csv").string(), u);
    Mesh deformed = mesh;
    for (int i = 0; i < mesh.num_nodes(); ++i) deformed.nodes[i] += u.row(i).transpose();
    write_mesh((fs::path(cfg.outputDir) / "deformed.mesh").string(), deformed);
    write_report((fs::path(cfg.outputDir) / "report.json").string(), report, out);
    return out;
}

void run_warp(const RunConfig &cfg) {
    if (cfg.sourceVolumePath.empty()) throw Error("config has no warp block");
    const Mesh mesh = load_mesh(resolve(cfg.configDir, cfg.meshPath));
    const Field3 u = read_displacements(
        (fs::path(cfg.outputDir) / "displacements.csv").string(), mesh.num_nodes());
    const Volume source = load_volume(resolve(cfg.configDir, cfg.sourceVolumePath));

    // Solve runs in meters, images in millimeters.
    std::vector<Vec3> positions(mesh.nodes.size());
    std::vector<Vec3> displacements(mesh.nodes.size());
    Eigen::AlignedBox3d domain;
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
        positions[i] = 1e3 * mesh.nodes[i];
        displacements[i] = 1e3 * u.row(i).transpose();
        domain.extend(positions[i]);
        domain.extend(positions[i] + displacements[i]);
    }

    Eigen::AlignedBox3d volumeBox(source.voxel_center(0, 0, 0),
                                  source.voxel_center(source.dims[0] - 1,
                                                      source.dims[1] - 1,
                                                      source.dims[2] - 1));
    if (!volumeBox.intersects(domain))
        throw Error("frame mismatch: deformed geometry (mm) does not overlap the "
                    "volume extent — check units and origins");

    double spacing = cfg.warpInitialSpacing;
    if (spacing <= 0) spacing = domain.sizes().maxCoeff() / 4.0;

    const ScatteredSamples backwardSamples =
        build_backward_samples(positions, displacements);
    const BSplineTransform backward =
        fit_multilevel_bspline(backwardSamples, domain, cfg.warpLevels, spacing);

    const Volume warped =
        warp_volume(source, backward, source.dims, source.spacing, source.origin);

    fs::create_directories(cfg.outputDir);
    save_transform((fs::path(cfg.outputDir) / "transform.json").string(), backward);
    write_volume((fs::path(cfg.outputDir) / "warped.json").string(), warped);
}

} // namespace tled
