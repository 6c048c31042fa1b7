#include "tled/warp.hpp"

#include "tled/parallel.hpp"

#include <Eigen/Sparse>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace tled {

namespace {

// Uniform cubic B-spline basis on s in [0, 1].
inline void cubic_basis(double s, double B[4]) {
    const double s2 = s * s, s3 = s2 * s;
    B[0] = (1.0 - 3.0 * s + 3.0 * s2 - s3) / 6.0;
    B[1] = (4.0 - 6.0 * s2 + 3.0 * s3) / 6.0;
    B[2] = (1.0 + 3.0 * s + 3.0 * s2 - 3.0 * s3) / 6.0;
    B[3] = s3 / 6.0;
}

// Cell index and local coordinate for one axis, clamped to the lattice.
inline void locate(double x, double origin, double spacing, int cells, int &cell,
                   double &s) {
    const double t = (x - origin) / spacing;
    cell = static_cast<int>(std::floor(t));
    if (cell < 0) cell = 0;
    if (cell > cells - 1) cell = cells - 1;
    s = t - cell;
    if (s < 0) s = 0;
    if (s > 1) s = 1;
}

double smooth_ramp(double tau) { // quintic, C2 at both ends
    tau = std::clamp(tau, 0.0, 1.0);
    return tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau));
}

} // namespace

Vec3 BSplineLevel::evaluate(const Vec3 &x) const {
    int ci[3];
    double B[3][4];
    for (int d = 0; d < 3; ++d) {
        double s;
        locate(x[d], origin[d], spacing[d], cells[d], ci[d], s);
        cubic_basis(s, B[d]);
    }
    Vec3 v = Vec3::Zero();
    for (int c = 0; c < 4; ++c)
        for (int b = 0; b < 4; ++b) {
            const double wbc = B[1][b] * B[2][c];
            for (int a = 0; a < 4; ++a)
                v += (B[0][a] * wbc) * coeffs[index(ci[0] + a, ci[1] + b, ci[2] + c)];
        }
    return v;
}

Vec3 BSplineTransform::displacement(const Vec3 &x) const {
    // Outside the fitting domain the displacement fades smoothly to zero
    // over the falloff band; the spline is evaluated at the clamped point.
    double factor = 1.0;
    Vec3 xe = x;
    if (!domain.contains(x)) {
        const Vec3 clamped = x.cwiseMax(domain.min()).cwiseMin(domain.max());
        const double dist = (x - clamped).norm();
        if (falloffBand <= 0 || dist >= falloffBand) return Vec3::Zero();
        factor = 1.0 - smooth_ramp(dist / falloffBand);
        xe = clamped;
    }
    Vec3 v = Vec3::Zero();
    for (const auto &level : levels) v += level.evaluate(xe);
    return factor * v;
}

namespace {

BSplineLevel make_level(const Eigen::AlignedBox3d &domain, double spacing) {
    BSplineLevel level;
    level.origin = domain.min();
    const Vec3 extent = domain.max() - domain.min();
    for (int d = 0; d < 3; ++d) {
        level.cells[d] = std::max(1, static_cast<int>(std::ceil(extent[d] / spacing - 1e-12)));
        level.spacing[d] = extent[d] / level.cells[d];
    }
    const auto n = level.counts();
    level.coeffs.assign(static_cast<std::size_t>(n[0]) * n[1] * n[2], Vec3::Zero());
    return level;
}

// Regularized least-squares control fit of the residual field at the
// sample positions.
void fit_level(BSplineLevel &level, const std::vector<Vec3> &positions,
               const std::vector<Vec3> &residuals) {
    const auto n = level.counts();
    const int M = n[0] * n[1] * n[2];
    const int S = static_cast<int>(positions.size());

    Eigen::SparseMatrix<double> A(S, M);
    {
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(static_cast<std::size_t>(S) * 64);
        for (int s = 0; s < S; ++s) {
            int ci[3];
            double B[3][4];
            for (int d = 0; d < 3; ++d) {
                double loc;
                locate(positions[s][d], level.origin[d], level.spacing[d], level.cells[d],
                       ci[d], loc);
                cubic_basis(loc, B[d]);
            }
            for (int c = 0; c < 4; ++c)
                for (int b = 0; b < 4; ++b)
                    for (int a = 0; a < 4; ++a)
                        trips.emplace_back(
                            s,
                            static_cast<int>(level.index(ci[0] + a, ci[1] + b, ci[2] + c)),
                            B[0][a] * B[1][b] * B[2][c]);
        }
        A.setFromTriplets(trips.begin(), trips.end());
    }

    Eigen::SparseMatrix<double> AtA = Eigen::SparseMatrix<double>(A.transpose()) * A;

    // Second differences along each axis; zero on affine control nets.
    Eigen::SparseMatrix<double> LtL(M, M);
    {
        std::vector<Eigen::Triplet<double>> trips;
        auto addRow = [&](int m0, int m1, int m2) {
            const int idx[3] = {m0, m1, m2};
            const double w[3] = {1.0, -2.0, 1.0};
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    trips.emplace_back(idx[r], idx[c], w[r] * w[c]);
        };
        for (int k = 0; k < n[2]; ++k)
            for (int j = 0; j < n[1]; ++j)
                for (int i = 0; i < n[0]; ++i) {
                    if (i + 2 < n[0])
                        addRow(static_cast<int>(level.index(i, j, k)),
                               static_cast<int>(level.index(i + 1, j, k)),
                               static_cast<int>(level.index(i + 2, j, k)));
                    if (j + 2 < n[1])
                        addRow(static_cast<int>(level.index(i, j, k)),
                               static_cast<int>(level.index(i, j + 1, k)),
                               static_cast<int>(level.index(i, j + 2, k)));
                    if (k + 2 < n[2])
                        addRow(static_cast<int>(level.index(i, j, k)),
                               static_cast<int>(level.index(i, j, k + 1)),
                               static_cast<int>(level.index(i, j, k + 2)));
                }
        LtL.setFromTriplets(trips.begin(), trips.end());
    }

    double diagScale = 0;
    for (int m = 0; m < M; ++m) diagScale += AtA.coeff(m, m);
    diagScale = std::max(diagScale / M, 1e-30);
    const double smooth = 1e-6 * diagScale;
    // Kept tiny: the ridge shrinks weakly observed control points and its
    // bias is what limits exact constant/linear reproduction.
    const double ridge = 1e-14 * diagScale;

    Eigen::SparseMatrix<double> H = AtA + smooth * LtL;
    for (int m = 0; m < M; ++m) H.coeffRef(m, m) += ridge;

    Eigen::MatrixXd rhs(S, 3);
    for (int s = 0; s < S; ++s) rhs.row(s) = residuals[s];
    const Eigen::MatrixXd Atb = Eigen::SparseMatrix<double>(A.transpose()) * rhs;

    // Small lattices are factorized directly: sparsely sampled levels leave
    // the normal matrix near-singular and conjugate gradients stalls on it.
    // Big fine-level lattices stay iterative to keep memory and fill-in down.
    Eigen::MatrixXd c;
    if (M <= 40000) {
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(H);
        if (solver.info() != Eigen::Success)
            throw Error("B-spline level fit failed to factorize");
        c = solver.solve(Atb);
    } else {
        Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper>
            solver;
        solver.setTolerance(1e-14);
        solver.setMaxIterations(20000);
        solver.compute(H);
        if (solver.info() != Eigen::Success)
            throw Error("B-spline level fit failed to initialize");
        c = solver.solve(Atb);
    }
    for (int m = 0; m < M; ++m) level.coeffs[m] = c.row(m);
}

} // namespace

BSplineTransform fit_multilevel_bspline(const ScatteredSamples &samples,
                                        const Eigen::AlignedBox3d &domain, int levels,
                                        double initialSpacing) {
    if (samples.positions.empty()) throw Error("no samples to fit");
    if (samples.positions.size() != samples.values.size())
        throw Error("sample position/value count mismatch");
    if (levels < 1) throw Error("need at least one level");
    if (!(initialSpacing > 0)) throw Error("initial spacing must be positive");
    for (const auto &p : samples.positions)
        if (!domain.contains(p))
            throw Error("sample outside the fitting domain");

    BSplineTransform T;
    T.domain = domain;
    T.falloffBand = 2.0 * initialSpacing;

    std::vector<Vec3> residual = samples.values;
    double spacing = initialSpacing;
    for (int l = 0; l < levels; ++l, spacing *= 0.5) {
        BSplineLevel level = make_level(domain, spacing);
        fit_level(level, samples.positions, residual);
        double maxResidual = 0;
        for (std::size_t s = 0; s < samples.positions.size(); ++s) {
            residual[s] -= level.evaluate(samples.positions[s]);
            maxResidual = std::max(maxResidual, residual[s].norm());
        }
        T.levels.push_back(std::move(level));
        T.levelResiduals.push_back(maxResidual);
    }
    return T;
}

ScatteredSamples build_backward_samples(const std::vector<Vec3> &positions,
                                        const std::vector<Vec3> &displacements) {
    if (positions.size() != displacements.size())
        throw Error("position/displacement count mismatch");
    ScatteredSamples s;
    s.positions.reserve(positions.size());
    s.values.reserve(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        s.positions.push_back(positions[i] + displacements[i]);
        s.values.push_back(-displacements[i]);
    }
    return s;
}

Vec3 refine_source_position(const BSplineTransform &forward, const Vec3 &xT, Vec3 xS,
                            int iterations) {
    for (int it = 0; it < iterations; ++it)
        xS = xT - forward.displacement(xS);
    return xS;
}

Volume warp_volume(const Volume &source, const BSplineTransform &backward,
                   const Eigen::Vector3i &dims, const Vec3 &spacing, const Vec3 &origin) {
    Volume out;
    out.dims = dims;
    out.spacing = spacing;
    out.origin = origin;
    out.background = source.background;
    out.scalars.resize(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);

    parallel_for(dims[2], [&](std::ptrdiff_t kBegin, std::ptrdiff_t kEnd) {
        for (std::ptrdiff_t k = kBegin; k < kEnd; ++k)
            for (int j = 0; j < dims[1]; ++j)
                for (int i = 0; i < dims[0]; ++i) {
                    const Vec3 xT = out.voxel_center(i, j, static_cast<int>(k));
                    const Vec3 xS = xT + backward.displacement(xT);
                    out.at(i, j, static_cast<int>(k)) = source.sample(xS);
                }
    });
    return out;
}

void save_transform(const std::string &headerPath, const BSplineTransform &T) {
    nlohmann::json hdr;
    hdr["domain_min_mm"] = {T.domain.min()[0], T.domain.min()[1], T.domain.min()[2]};
    hdr["domain_max_mm"] = {T.domain.max()[0], T.domain.max()[1], T.domain.max()[2]};
    hdr["falloff_band_mm"] = T.falloffBand;
    hdr["dtype"] = "f64";
    hdr["residuals"] = T.levelResiduals;
    nlohmann::json levels = nlohmann::json::array();
    for (const auto &level : T.levels) {
        nlohmann::json l;
        l["origin_mm"] = {level.origin[0], level.origin[1], level.origin[2]};
        l["spacing_mm"] = {level.spacing[0], level.spacing[1], level.spacing[2]};
        l["cells"] = {level.cells[0], level.cells[1], level.cells[2]};
        levels.push_back(l);
    }
    hdr["levels"] = levels;

    std::string rawPath = headerPath;
    const auto dot = rawPath.find_last_of('.');
    if (dot != std::string::npos) rawPath.erase(dot);
    rawPath += ".raw";

    std::ofstream out(headerPath);
    if (!out) throw Error("cannot write transform header: " + headerPath);
    out << hdr.dump(2) << "\n";
    std::ofstream raw(rawPath, std::ios::binary);
    if (!raw) throw Error("cannot write transform payload: " + rawPath);
    for (const auto &level : T.levels)
        for (const auto &c : level.coeffs)
            raw.write(reinterpret_cast<const char *>(c.data()), 3 * sizeof(double));
}

BSplineTransform load_transform(const std::string &headerPath) {
    std::ifstream in(headerPath);
    if (!in) throw Error("cannot open transform header: " + headerPath);
    nlohmann::json hdr = nlohmann::json::parse(in);

    BSplineTransform T;
    Vec3 lo, hi;
    for (int d = 0; d < 3; ++d) {
        lo[d] = hdr.at("domain_min_mm")[d].get<double>();
        hi[d] = hdr.at("domain_max_mm")[d].get<double>();
    }
    T.domain = Eigen::AlignedBox3d(lo, hi);
    T.falloffBand = hdr.at("falloff_band_mm").get<double>();
    if (hdr.contains("residuals"))
        T.levelResiduals = hdr["residuals"].get<std::vector<double>>();

    std::string rawPath = headerPath;
    const auto dot = rawPath.find_last_of('.');
    if (dot != std::string::npos) rawPath.erase(dot);
    rawPath += ".raw";
    std::ifstream raw(rawPath, std::ios::binary);
    if (!raw) throw Error("cannot open transform payload: " + rawPath);

    for (const auto &l : hdr.at("levels")) {
        BSplineLevel level;
        for (int d = 0; d < 3; ++d) {
            level.origin[d] = l.at("origin_mm")[d].get<double>();
            level.spacing[d] = l.at("spacing_mm")[d].get<double>();
            level.cells[d] = l.at("cells")[d].get<int>();
        }
        const auto n = level.counts();
        level.coeffs.resize(static_cast<std::size_t>(n[0]) * n[1] * n[2]);
        for (auto &c : level.coeffs)
            raw.read(reinterpret_cast<char *>(c.data()), 3 * sizeof(double));
        if (!raw) throw Error("short read on transform payload: " + rawPath);
        T.levels.push_back(std::move(level));
    }
    return T;
}

} // namespace tled
