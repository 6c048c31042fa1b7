#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tled/meshless.hpp"

#include <cmath>
#include <random>

using namespace tled;

namespace {

MaterialParams brain_like() {
    MaterialParams p;
    p.E = 3000;
    p.nu = 0.49;
    return p;
}

double reconstruct_scalar(const ShapePoint &sp, const std::vector<double> &nodal) {
    double v = 0;
    for (Eigen::Index a = 0; a < sp.phi.size(); ++a) v += sp.phi[a] * nodal[sp.support[a]];
    return v;
}

// Integral of one shape function over the domain by dense per-cell Gauss
// sampling; reference for the adaptive quadrature.
double brute_force_phi_integral(const PointCloud &cloud, const std::vector<double> &radii,
                                const MmlsConfig &cfg, int node, int samplesPerAxis) {
    double integral = 0;
    for (const auto &cell : cloud.backgroundCells) {
        const Vec3 d = cell.hi - cell.lo;
        const double w = cell.volume() / std::pow(samplesPerAxis, 3);
        for (int k = 0; k < samplesPerAxis; ++k)
            for (int j = 0; j < samplesPerAxis; ++j)
                for (int i = 0; i < samplesPerAxis; ++i) {
                    const Vec3 x = cell.lo + Vec3((i + 0.5) / samplesPerAxis * d[0],
                                                  (j + 0.5) / samplesPerAxis * d[1],
                                                  (k + 0.5) / samplesPerAxis * d[2]);
                    const ShapePoint sp = mmls_shape_functions(cloud, radii, x, cfg);
                    for (Eigen::Index a = 0; a < sp.phi.size(); ++a)
                        if (sp.support[a] == node) integral += w * sp.phi[a];
                }
    }
    return integral;
}

} // namespace

TEST_CASE("partition of unity and gradient consistency") {
    const PointCloud cloud = make_box_cloud(4, 4, 4, 1, 1, 1, 4);
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int order : {1, 2}) {
        MmlsConfig cfg;
        cfg.order = order;
        const std::vector<double> radii = support_radii(cloud, cfg);
        for (int trial = 0; trial < 50; ++trial) {
            const Vec3 x(dist(rng), dist(rng), dist(rng));
            const ShapePoint sp = mmls_shape_functions(cloud, radii, x, cfg);
            CHECK(std::abs(sp.phi.sum() - 1.0) <= 1e-12);
            CHECK(sp.dphi.colwise().sum().norm() <= 1e-9);
        }
    }
}

TEST_CASE("linear fields are reproduced by both orders") {
    const PointCloud cloud = make_box_cloud(4, 4, 4, 1, 1, 1, 4);
    std::vector<double> nodal(cloud.num_nodes());
    auto f = [](const Vec3 &X) { return 2 * X[0] + 3 * X[1] - X[2]; };
    for (int i = 0; i < cloud.num_nodes(); ++i) nodal[i] = f(cloud.nodes[i]);

    std::mt19937 rng(5);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int order : {1, 2}) {
        MmlsConfig cfg;
        cfg.order = order;
        const std::vector<double> radii = support_radii(cloud, cfg);
        for (int trial = 0; trial < 30; ++trial) {
            const Vec3 x(dist(rng), dist(rng), dist(rng));
            const ShapePoint sp = mmls_shape_functions(cloud, radii, x, cfg);
            CHECK(std::abs(reconstruct_scalar(sp, nodal) - f(x)) <= 1e-10);
            // Gradient of the reconstruction matches (2, 3, -1).
            Vec3 g = Vec3::Zero();
            for (Eigen::Index a = 0; a < sp.phi.size(); ++a)
                g += nodal[sp.support[a]] * sp.dphi.row(a).transpose();
            CHECK((g - Vec3(2, 3, -1)).norm() <= 1e-9);
        }
    }
}

TEST_CASE("quadratic field: order 2 reproduces, order 1 does not") {
    const PointCloud cloud = make_box_cloud(4, 4, 4, 1, 1, 1, 4);
    std::vector<double> nodal(cloud.num_nodes());
    auto f = [](const Vec3 &X) { return X[0] * X[0] + X[0] * X[1]; };
    for (int i = 0; i < cloud.num_nodes(); ++i) nodal[i] = f(cloud.nodes[i]);

    std::mt19937 rng(9);
    std::uniform_real_distribution<double> dist(0.1, 0.9);
    double err1 = 0, err2 = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const Vec3 x(dist(rng), dist(rng), dist(rng));
        for (int order : {1, 2}) {
            MmlsConfig cfg;
            cfg.order = order;
            const std::vector<double> radii = support_radii(cloud, cfg);
            const ShapePoint sp = mmls_shape_functions(cloud, radii, x, cfg);
            const double e = std::abs(reconstruct_scalar(sp, nodal) - f(x));
            (order == 1 ? err1 : err2) = std::max(order == 1 ? err1 : err2, e);
        }
    }
    CHECK(err2 <= 1e-9);
    CHECK(err1 > 10 * err2);
}

TEST_CASE("adaptive integration") {
    const PointCloud cloud = make_box_cloud(3, 3, 3, 1, 1, 1, 2);
    MmlsConfig cfg;

    SUBCASE("weights sum to the domain volume") {
        const ShapeFunctionTable table = adaptive_integration(cloud, cfg);
        double w = 0, wphi = 0;
        for (const auto &p : table.points) {
            w += p.w;
            wphi += p.w * p.phi.sum();
        }
        CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
        // Partition of unity under quadrature.
        CHECK(wphi == doctest::Approx(1.0).epsilon(1e-10));
    }

    SUBCASE("refining the tolerance improves the shape-function integral") {
        const std::vector<double> radii = support_radii(cloud, cfg);
        const int node = 30; // an interior node
        const double ref = brute_force_phi_integral(cloud, radii, cfg, node, 16);
        double prev = std::numeric_limits<double>::infinity();
        for (double tol : {1e-1, 1e-2, 1e-3}) {
            MmlsConfig c = cfg;
            c.integrationTol = tol;
            const ShapeFunctionTable table = adaptive_integration(cloud, c);
            double integral = 0;
            for (const auto &p : table.points)
                for (Eigen::Index a = 0; a < p.phi.size(); ++a)
                    if (p.support[a] == node) integral += p.w * p.phi[a];
            const double err = std::abs(integral - ref);
            CHECK(err <= prev + 1e-15);
            CHECK(err <= tol);
            prev = err;
        }
    }
}

TEST_CASE("meshless patch test: affine field gives exact gradients") {
    const PointCloud cloud = make_box_cloud(3, 3, 3, 1, 1, 1, 3);
    MmlsConfig cfg;
    const ShapeFunctionTable table = adaptive_integration(cloud, cfg);
    Mat3 A;
    A << 0.02, 0.01, -0.015, 0.005, -0.03, 0.02, -0.01, 0.015, 0.025;
    Field3 u(cloud.num_nodes(), 3);
    for (int i = 0; i < cloud.num_nodes(); ++i)
        u.row(i) = (A * cloud.nodes[i]).transpose();
    for (const auto &p : table.points) {
        Mat3 F = Mat3::Identity();
        for (Eigen::Index a = 0; a < p.phi.size(); ++a)
            F += u.row(p.support[a]).transpose() * p.dphi.row(a);
        CHECK((F - (Mat3::Identity() + A)).norm() <= 1e-8);
    }
}

TEST_CASE("internal forces") {
    const PointCloud cloud = make_box_cloud(2, 2, 2, 1, 1, 1, 2);
    MmlsConfig cfg;
    const ShapeFunctionTable table = adaptive_integration(cloud, cfg);
    const std::vector<RegionLaw> laws = make_region_laws({brain_like()});

    SUBCASE("zero displacement, zero force") {
        Field3 f(cloud.num_nodes(), 3);
        mtled_internal_forces(table, Field3::Zero(cloud.num_nodes(), 3), laws, f);
        CHECK(f.norm() == 0.0);
    }

    SUBCASE("force equals the energy gradient") {
        Field3 u(cloud.num_nodes(), 3);
        for (int i = 0; i < cloud.num_nodes(); ++i) {
            const Vec3 &X = cloud.nodes[i];
            u.row(i) = 0.01 * Vec3(std::sin(3 * X[0]) + X[1], X[2] * X[0],
                                   std::cos(2 * X[1]))
                                  .transpose();
        }
        Field3 f(cloud.num_nodes(), 3);
        mtled_internal_forces(table, u, laws, f);
        const double h = 1e-7;
        double maxErr = 0;
        for (int i = 0; i < cloud.num_nodes(); ++i)
            for (int d = 0; d < 3; ++d) {
                Field3 up = u, um = u;
                up(i, d) += h;
                um(i, d) -= h;
                const double fd = (mtled_total_energy(table, up, laws) -
                                   mtled_total_energy(table, um, laws)) /
                                  (2 * h);
                maxErr = std::max(maxErr, std::abs(fd - f(i, d)));
            }
        CHECK(maxErr <= 1e-5 * f.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("meshless lumped mass conserves total mass") {
    const PointCloud cloud = make_box_cloud(3, 3, 3, 0.5, 0.5, 0.5, 3);
    MmlsConfig cfg;
    const ShapeFunctionTable table = adaptive_integration(cloud, cfg);
    const VecX m = lumped_mass(table, cloud, {1000.0});
    CHECK(m.minCoeff() > 0);
    CHECK(m.sum() == doctest::Approx(0.125 * 1000.0).epsilon(1e-9));
}

TEST_CASE("EBCIEM correction operator") {
    const PointCloud cloud = make_box_cloud(4, 4, 4, 1, 1, 1, 4);
    MmlsConfig cfg;
    const std::vector<double> radii = support_radii(cloud, cfg);
    const std::vector<int> &bottom = cloud.boundaryNodes.at("z0");
    const CorrectionOperator corr = ebciem_build(cloud, radii, bottom, cfg);

    Field3 u(cloud.num_nodes(), 3);
    for (int i = 0; i < cloud.num_nodes(); ++i) {
        const Vec3 &X = cloud.nodes[i];
        u.row(i) = 0.02 * Vec3(std::sin(2 * X[0]), X[1] * X[2], X[0] - X[2]).transpose();
    }

    SUBCASE("empty constraint set is the identity") {
        const CorrectionOperator none = ebciem_build(cloud, radii, {}, cfg);
        CHECK(none.identity);
        Field3 v = u;
        none.apply(v, Field3(0, 3));
        CHECK((v - u).norm() == 0.0);
    }

    SUBCASE("reconstruction matches the prescribed values") {
        Field3 prescribed(bottom.size(), 3);
        for (std::size_t k = 0; k < bottom.size(); ++k)
            prescribed.row(k) = Vec3(0.001 * k, -0.002, 0.005).transpose();
        corr.apply(u, prescribed);
        const Field3 rec = corr.reconstruct(u);
        CHECK((rec - prescribed).cwiseAbs().maxCoeff() <= 1e-10);
    }

    SUBCASE("idempotence") {
        Field3 prescribed = Field3::Zero(bottom.size(), 3);
        Field3 once = u;
        corr.apply(once, prescribed);
        Field3 twice = once;
        corr.apply(twice, prescribed);
        CHECK((twice - once).cwiseAbs().maxCoeff() <= 1e-12);
    }

    SUBCASE("nodes outside the constrained supports are untouched") {
        const Field3 before = u;
        corr.apply(u, Field3::Zero(bottom.size(), 3));
        // The top face is far from the bottom constraints.
        for (int n : cloud.boundaryNodes.at("z1"))
            CHECK(u.row(n) == before.row(n)); // bitwise
    }

    SUBCASE("single-axis correction leaves the other components alone") {
        const Field3 before = u;
        const VecX prescribedZ = VecX::Constant(bottom.size(), -0.01);
        corr.apply_axis(u, prescribedZ, 2);
        CHECK((u.col(0) - before.col(0)).norm() == 0.0);
        CHECK((u.col(1) - before.col(1)).norm() == 0.0);
        const Field3 rec = corr.reconstruct(u);
        CHECK((rec.col(2) - prescribedZ).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK_THROWS_AS(corr.apply_axis(u, prescribedZ, 3), Error);
        CHECK_THROWS_AS(corr.apply_axis(u, VecX::Zero(2), 0), Error);
    }
}
