#include "tled/meshless.hpp"

#include "tled/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tled {

namespace {

// Quartic spline weight, C2 with compact support on q in [0, 1).
double quartic_weight(double q) {
    if (q >= 1.0) return 0.0;
    const double q2 = q * q;
    return 1.0 - 6.0 * q2 + 8.0 * q2 * q - 3.0 * q2 * q2;
}

int basis_size(int order) { return order == 1 ? 4 : 10; }

void fill_basis(int order, const Vec3 &xi, VecX &p) {
    p[0] = 1.0;
    p[1] = xi[0];
    p[2] = xi[1];
    p[3] = xi[2];
    if (order == 2) {
        p[4] = xi[0] * xi[0];
        p[5] = xi[1] * xi[1];
        p[6] = xi[2] * xi[2];
        p[7] = xi[0] * xi[1];
        p[8] = xi[1] * xi[2];
        p[9] = xi[2] * xi[0];
    }
}

// Two-point Gauss-Legendre per axis on an axis-aligned cell.
struct GaussCell {
    Vec3 points[8];
    double weight; // equal for all 8
};

GaussCell gauss8(const PointCloud::Cell &cell) {
    GaussCell g;
    const Vec3 c = 0.5 * (cell.lo + cell.hi);
    const Vec3 h = 0.5 * (cell.hi - cell.lo);
    const double a = 1.0 / std::sqrt(3.0);
    int n = 0;
    for (int k = -1; k <= 1; k += 2)
        for (int j = -1; j <= 1; j += 2)
            for (int i = -1; i <= 1; i += 2)
                g.points[n++] = c + a * Vec3(i * h[0], j * h[1], k * h[2]);
    g.weight = cell.volume() / 8.0;
    return g;
}

} // namespace

std::vector<double> support_radii(const PointCloud &cloud, const MmlsConfig &cfg) {
    const int n = cloud.num_nodes();
    if (n < 4) throw Error("point cloud needs at least 4 nodes");
    const double dilation = cfg.order == 1 ? cfg.dilationLinear : cfg.dilationQuadratic;
    std::vector<double> radii(n);
    std::vector<double> d2(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
            d2[j] = (cloud.nodes[j] - cloud.nodes[i]).squaredNorm();
        std::nth_element(d2.begin(), d2.begin() + 3, d2.end());
        radii[i] = dilation * std::sqrt(d2[3]); // 3rd nearest (index 0 is self)
    }
    return radii;
}

ShapePoint mmls_shape_functions(const PointCloud &cloud,
                                const std::vector<double> &radii, const Vec3 &x,
                                const MmlsConfig &cfg) {
    const int n = cloud.num_nodes();
    const int m = basis_size(cfg.order);
    const int minSupport = m;

    // Rank nodes by distance relative to their own support radius; grow the
    // effective radius when the natural support is too thin.
    std::vector<std::pair<double, int>> byQ;
    byQ.reserve(64);
    for (int i = 0; i < n; ++i) {
        const double q = (cloud.nodes[i] - x).norm() / radii[i];
        if (q < 2.0) byQ.emplace_back(q, i);
    }
    if (static_cast<int>(byQ.size()) < minSupport) {
        byQ.clear();
        for (int i = 0; i < n; ++i)
            byQ.emplace_back((cloud.nodes[i] - x).norm() / radii[i], i);
    }
    std::sort(byQ.begin(), byQ.end());
    double scale = 1.0;
    int count = 0;
    while (count < static_cast<int>(byQ.size()) && byQ[count].first < 1.0) ++count;
    if (count < minSupport) {
        if (static_cast<int>(byQ.size()) < minSupport)
            throw Error("support radius too small at point (" + std::to_string(x[0]) +
                        ", " + std::to_string(x[1]) + ", " + std::to_string(x[2]) +
                        "): only " + std::to_string(byQ.size()) + " candidate nodes");
        scale = byQ[minSupport - 1].first * 1.001;
        count = minSupport;
        while (count < static_cast<int>(byQ.size()) && byQ[count].first < scale) ++count;
    }

    ShapePoint pt;
    pt.x = x;
    pt.support.resize(count);
    VecX weights(count);
    double h = 0;
    for (int k = 0; k < count; ++k) {
        pt.support[k] = byQ[k].second;
        weights[k] = quartic_weight(byQ[k].first / scale);
        h += radii[pt.support[k]] * scale;
    }
    h /= count;

    Eigen::MatrixXd P(count, m);
    VecX p(m);
    for (int k = 0; k < count; ++k) {
        fill_basis(cfg.order, (cloud.nodes[pt.support[k]] - x) / h, p);
        P.row(k) = p;
    }
    Eigen::MatrixXd M = P.transpose() * (weights.asDiagonal() * P);
    if (cfg.order == 2) {
        const double ridge = cfg.ridgeScale * M.trace() / m;
        for (int k = 4; k < 10; ++k) M(k, k) += ridge;
    }

    Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-14 * ldlt.vectorD().maxCoeff())
        throw Error("singular moment matrix at point (" + std::to_string(x[0]) + ", " +
                    std::to_string(x[1]) + ", " + std::to_string(x[2]) + ") with " +
                    std::to_string(count) + " supporting nodes");

    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m, 4);
    rhs(0, 0) = 1.0;
    rhs(1, 1) = rhs(2, 2) = rhs(3, 3) = 1.0;
    const Eigen::MatrixXd c = ldlt.solve(rhs); // columns: value, d/dx, d/dy, d/dz

    pt.phi.resize(count);
    pt.dphi.resize(count, 3);
    for (int k = 0; k < count; ++k) {
        const VecX wp = weights[k] * P.row(k).transpose();
        pt.phi[k] = c.col(0).dot(wp);
        for (int d = 0; d < 3; ++d) pt.dphi(k, d) = c.col(d + 1).dot(wp) / h;
    }

    // Material region: dominant supporting node.
    int best = 0;
    for (int k = 1; k < count; ++k)
        if (pt.phi[k] > pt.phi[best]) best = k;
    pt.region = cloud.region(pt.support[best]);
    return pt;
}

namespace {

double guiding_integral(const PointCloud &cloud, const std::vector<double> &radii,
                        const MmlsConfig &cfg, const PointCloud::Cell &cell) {
    const GaussCell g = gauss8(cell);
    double sum = 0;
    for (const Vec3 &x : g.points) {
        const ShapePoint pt = mmls_shape_functions(cloud, radii, x, cfg);
        sum += pt.phi.squaredNorm();
    }
    return sum * g.weight;
}

void octants(const PointCloud::Cell &cell, PointCloud::Cell out[8]) {
    const Vec3 c = 0.5 * (cell.lo + cell.hi);
    int n = 0;
    for (int k = 0; k < 2; ++k)
        for (int j = 0; j < 2; ++j)
            for (int i = 0; i < 2; ++i) {
                Vec3 lo = cell.lo, hi = c;
                if (i) { lo[0] = c[0]; hi[0] = cell.hi[0]; }
                if (j) { lo[1] = c[1]; hi[1] = cell.hi[1]; }
                if (k) { lo[2] = c[2]; hi[2] = cell.hi[2]; }
                out[n++] = {lo, hi};
            }
}

void emit_cell(const PointCloud &cloud, const std::vector<double> &radii,
               const MmlsConfig &cfg, const PointCloud::Cell &cell,
               ShapeFunctionTable &table) {
    const GaussCell g = gauss8(cell);
    for (const Vec3 &x : g.points) {
        ShapePoint pt = mmls_shape_functions(cloud, radii, x, cfg);
        pt.w = g.weight;
        table.points.push_back(std::move(pt));
    }
}

void integrate_cell(const PointCloud &cloud, const std::vector<double> &radii,
                    const MmlsConfig &cfg, const PointCloud::Cell &cell, int depth,
                    ShapeFunctionTable &table) {
    const double coarse = guiding_integral(cloud, radii, cfg, cell);
    PointCloud::Cell kids[8];
    octants(cell, kids);
    double fine = 0;
    for (const auto &kid : kids) fine += guiding_integral(cloud, radii, cfg, kid);

    const double scale = std::max(std::abs(fine), std::abs(coarse));
    if (scale == 0 || std::abs(fine - coarse) <= cfg.integrationTol * scale) {
        emit_cell(cloud, radii, cfg, cell, table);
        return;
    }
    if (depth >= cfg.maxDepth) {
        table.warnings.push_back("integration cell at depth " + std::to_string(depth) +
                                 " did not reach the requested accuracy; accepting");
        for (const auto &kid : kids) emit_cell(cloud, radii, cfg, kid, table);
        return;
    }
    for (const auto &kid : kids)
        integrate_cell(cloud, radii, cfg, kid, depth + 1, table);
}

} // namespace

ShapeFunctionTable adaptive_integration(const PointCloud &cloud, const MmlsConfig &cfg) {
    if (!(cfg.integrationTol > 0)) throw Error("integration tolerance must be positive");
    for (const auto &cell : cloud.backgroundCells)
        if (!(cell.volume() > 0)) throw Error("background cell with non-positive volume");

    const std::vector<double> radii = support_radii(cloud, cfg);
    ShapeFunctionTable table;
    table.numNodes = cloud.num_nodes();
    for (const auto &cell : cloud.backgroundCells) {
        integrate_cell(cloud, radii, cfg, cell, 0, table);
        table.domainVolume += cell.volume();
    }
    return table;
}

void mtled_internal_forces(const ShapeFunctionTable &table, const Field3 &u,
                           const std::vector<RegionLaw> &laws, Field3 &f) {
    f.setZero();
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(table.points.size());
    std::vector<Eigen::Matrix<double, Eigen::Dynamic, 3>> pointForce(n);
    parallel_for(n, [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
        for (std::ptrdiff_t p = begin; p < end; ++p) {
            const ShapePoint &pt = table.points[p];
            Mat3 F = Mat3::Identity();
            for (std::size_t k = 0; k < pt.support.size(); ++k)
                F += u.row(pt.support[k]).transpose() * pt.dphi.row(k);
            if (!(F.determinant() > 0))
                throw InversionError("integration point " + std::to_string(p), F);
            const RegionLaw &law = laws.at(pt.region);
            const Mat3 S = law.model == MaterialModel::NeoHookean
                               ? pk2_neo_hookean(F, law.mu, law.kappa)
                               : pk2_ogden_deviatoric(F, law.params.ogdenMu,
                                                      law.params.ogdenAlpha) +
                                     pk2_volumetric(F, law.kappa);
            pointForce[p] = pt.w * pt.dphi * S * F.transpose();
        }
    });
    for (std::ptrdiff_t p = 0; p < n; ++p) {
        const ShapePoint &pt = table.points[p];
        for (std::size_t k = 0; k < pt.support.size(); ++k)
            f.row(pt.support[k]) += pointForce[p].row(k);
    }
}

double mtled_total_energy(const ShapeFunctionTable &table, const Field3 &u,
                          const std::vector<RegionLaw> &laws) {
    double E = 0;
    for (const ShapePoint &pt : table.points) {
        Mat3 F = Mat3::Identity();
        for (std::size_t k = 0; k < pt.support.size(); ++k)
            F += u.row(pt.support[k]).transpose() * pt.dphi.row(k);
        const RegionLaw &law = laws.at(pt.region);
        E += pt.w * (law.model == MaterialModel::NeoHookean
                         ? energy_neo_hookean(F, law.mu, law.kappa)
                         : energy_ogden(F, law.params));
    }
    return E;
}

VecX lumped_mass(const ShapeFunctionTable &table, const PointCloud &cloud,
                 const std::vector<double> &densityPerRegion) {
    for (double rho : densityPerRegion)
        if (!(rho > 0)) throw Error("non-positive density");
    VecX mass = VecX::Zero(cloud.num_nodes());
    for (const ShapePoint &pt : table.points) {
        if (pt.region >= static_cast<int>(densityPerRegion.size()))
            throw Error("no density for region " + std::to_string(pt.region));
        const double rho = densityPerRegion[pt.region];
        // Non-negative apportioning; equals phi when all values are positive.
        double norm = 0;
        for (Eigen::Index k = 0; k < pt.phi.size(); ++k) norm += std::max(pt.phi[k], 0.0);
        if (norm <= 0) throw Error("degenerate shape values in mass lumping");
        for (std::size_t k = 0; k < pt.support.size(); ++k)
            mass[pt.support[k]] += pt.w * rho * std::max(pt.phi[k], 0.0) / norm;
    }
    return mass;
}

void CorrectionOperator::apply(Field3 &u, const Field3 &prescribed) const {
    if (identity) return;
    if (prescribed.rows() != static_cast<Eigen::Index>(constrainedNodes.size()))
        throw Error("prescribed value count does not match the constraint set");
    const Eigen::MatrixXd residual = prescribed - (Phi * u).eval();
    const Eigen::MatrixXd lambda = gram.solve(residual);
    // Explicit sparse scatter: parameters outside constrained supports keep
    // their exact bit pattern.
    for (int c = 0; c < Phi.outerSize(); ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(Phi, c); it; ++it)
            u.row(it.col()) += it.value() * lambda.row(it.row());
}

void CorrectionOperator::apply_axis(Field3 &u, const VecX &prescribed, int axis) const {
    if (identity) return;
    if (prescribed.size() != static_cast<Eigen::Index>(constrainedNodes.size()))
        throw Error("prescribed value count does not match the constraint set");
    if (axis < 0 || axis > 2) throw Error("axis out of range");
    const VecX residual = prescribed - (Phi * u.col(axis)).eval();
    const VecX lambda = gram.solve(residual);
    for (int c = 0; c < Phi.outerSize(); ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(Phi, c); it; ++it)
            u(it.col(), axis) += it.value() * lambda(it.row());
}

Field3 CorrectionOperator::reconstruct(const Field3 &u) const {
    if (identity) return Field3(0, 3);
    return Phi * u;
}

CorrectionOperator ebciem_build(const PointCloud &cloud,
                                const std::vector<double> &radii,
                                const std::vector<int> &constrainedNodes,
                                const MmlsConfig &cfg) {
    CorrectionOperator op;
    op.constrainedNodes = constrainedNodes;
    if (constrainedNodes.empty()) {
        op.identity = true;
        return op;
    }
    const int C = static_cast<int>(constrainedNodes.size());
    std::vector<Eigen::Triplet<double>> trips;
    for (int c = 0; c < C; ++c) {
        const ShapePoint pt =
            mmls_shape_functions(cloud, radii, cloud.nodes[constrainedNodes[c]], cfg);
        for (std::size_t k = 0; k < pt.support.size(); ++k)
            trips.emplace_back(c, pt.support[k], pt.phi[k]);
    }
    op.Phi.resize(C, cloud.num_nodes());
    op.Phi.setFromTriplets(trips.begin(), trips.end());

    const Eigen::MatrixXd G = (op.Phi * op.Phi.transpose()).eval().toDense();
    op.gram.compute(G);
    if (op.gram.info() != Eigen::Success)
        throw Error("rank-deficient constraint set: a constrained point is unsupported");
    return op;
}

} // namespace tled
