#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tled/fem.hpp"

#include <cmath>

using namespace tled;

namespace {

MaterialParams brain_like() {
    MaterialParams p;
    p.E = 3000;
    p.nu = 0.49;
    return p;
}

// One hex plus one of its bricks split into tets: exercises mixed assembly.
Mesh make_mixed_mesh() {
    Mesh mesh = make_box_hex_mesh(2, 1, 1, 0.2, 0.1, 0.1);
    static const int split[6][4] = {
        {0, 1, 2, 6}, {0, 2, 3, 6}, {0, 3, 7, 6},
        {0, 7, 4, 6}, {0, 4, 5, 6}, {0, 5, 1, 6},
    };
    const auto h = mesh.hexes.back();
    mesh.hexes.pop_back();
    for (const auto &s : split) {
        std::array<int, 4> t = {h[s[0]], h[s[1]], h[s[2]], h[s[3]]};
        if (tet_volume(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]],
                       mesh.nodes[t[3]]) < 0)
            std::swap(t[1], t[2]);
        mesh.tets.push_back(t);
    }
    return mesh;
}

Field3 smooth_test_field(const Mesh &mesh, double amplitude) {
    Field3 u(mesh.num_nodes(), 3);
    for (int i = 0; i < mesh.num_nodes(); ++i) {
        const Vec3 &X = mesh.nodes[i];
        u.row(i) = amplitude * Vec3(std::sin(13 * X[0]) + 0.5 * X[1],
                                    std::cos(7 * X[1]) * X[2],
                                    X[0] * X[1] - std::sin(5 * X[2]))
                                   .transpose();
    }
    return u;
}

} // namespace

TEST_CASE("precompute on the unit cube hex") {
    const Mesh mesh = make_box_hex_mesh(1, 1, 1, 1, 1, 1);
    const ElementPrecomp pre = precompute_elements(mesh, 0.1);
    REQUIRE(pre.hexes.size() == 1);
    const HexPrecomp &hex = pre.hexes[0];
    CHECK(hex.V0 == doctest::Approx(1.0).epsilon(1e-14));

    // Centroid trilinear derivatives: the +-1/4 pattern.
    for (int a = 0; a < 8; ++a)
        for (int d = 0; d < 3; ++d)
            CHECK(std::abs(std::abs(hex.dNdX(a, d)) - 0.25) < 1e-14);
    // Partition of unity: derivative rows sum to zero.
    CHECK(hex.dNdX.colwise().sum().norm() < 1e-14);

    // Hourglass vectors are orthogonal to the rigid and affine modes.
    Eigen::Matrix<double, 8, 4> modes;
    for (int a = 0; a < 8; ++a) {
        modes(a, 0) = 1.0;
        for (int d = 0; d < 3; ++d) modes(a, d + 1) = mesh.nodes[mesh.hexes[0][a]][d];
    }
    CHECK((modes.transpose() * hex.gamma).cwiseAbs().maxCoeff() < 1e-12);

    // k_hg carries coeff * V0^(2/3); mu multiplies in at force evaluation.
    CHECK(hex.khg == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(pre.hourglassCoeff == 0.1);
}

TEST_CASE("tet precompute") {
    const Mesh mesh = make_box_tet_mesh(1, 1, 1, 1, 1, 1);
    const ElementPrecomp pre = precompute_elements(mesh);
    REQUIRE(pre.tets.size() == 6);
    double v = 0, vn = 0;
    for (const auto &t : pre.tets) {
        CHECK(t.V0 > 0);
        v += t.V0;
        CHECK(t.dNdX.colwise().sum().norm() < 1e-12);
    }
    vn = pre.anpNodalV0.sum();
    CHECK(v == doctest::Approx(1.0).epsilon(1e-13));
    // ANP nodal volumes redistribute exactly the total tet volume.
    CHECK(vn == doctest::Approx(v).epsilon(1e-13));
}

TEST_CASE("degenerate element rejected at precompute") {
    Mesh mesh;
    mesh.nodes = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(0, 0, 1)};
    mesh.tets.push_back({0, 1, 2, 3}); // collinear base
    CHECK_THROWS_AS(precompute_elements(mesh), Error);
}

TEST_CASE("zero displacement produces zero force") {
    const Mesh mesh = make_mixed_mesh();
    const ElementPrecomp pre = precompute_elements(mesh);
    const std::vector<RegionLaw> laws = make_region_laws({brain_like()});
    Field3 f(mesh.num_nodes(), 3);
    const Field3 u = Field3::Zero(mesh.num_nodes(), 3);
    internal_forces(pre, mesh.nodes, u, laws, f);
    CHECK(f.norm() == 0.0);
}

TEST_CASE("rigid motion produces no force") {
    const Mesh mesh = make_mixed_mesh();
    const ElementPrecomp pre = precompute_elements(mesh);
    const std::vector<RegionLaw> laws = make_region_laws({brain_like()});
    const Mat3 R = Eigen::AngleAxisd(0.31, Vec3(1, -2, 2).normalized()).toRotationMatrix();
    const Vec3 d(0.03, -0.01, 0.02);
    Field3 u(mesh.num_nodes(), 3);
    for (int i = 0; i < mesh.num_nodes(); ++i)
        u.row(i) = (R * mesh.nodes[i] + d - mesh.nodes[i]).transpose();
    Field3 f(mesh.num_nodes(), 3);
    internal_forces(pre, mesh.nodes, u, laws, f);
    // Tolerance scaled by mu times a characteristic area.
    CHECK(f.cwiseAbs().maxCoeff() < 1e-9 * brain_like().mu() * 0.1 * 0.1);
}

TEST_CASE("affine patch: interior deformation gradient is exact") {
    Mat3 A;
    A << 0.02, 0.01, -0.015, 0.005, -0.03, 0.02, -0.01, 0.015, 0.025;
    auto check_mesh = [&](const Mesh &mesh) {
        const ElementPrecomp pre = precompute_elements(mesh);
        Field3 u(mesh.num_nodes(), 3);
        for (int i = 0; i < mesh.num_nodes(); ++i)
            u.row(i) = (A * mesh.nodes[i]).transpose();
        const Mat3 Fexp = Mat3::Identity() + A;
        for (const auto &hex : pre.hexes)
            CHECK((hex_deformation_gradient(hex, u) - Fexp).norm() < 1e-10);
        for (const auto &tet : pre.tets)
            CHECK((tet_deformation_gradient(tet, u) - Fexp).norm() < 1e-10);
    };
    check_mesh(make_box_hex_mesh(3, 3, 3, 1, 1, 1));
    check_mesh(make_box_tet_mesh(2, 2, 2, 1, 1, 1));
    check_mesh(make_mixed_mesh());
}

TEST_CASE("hourglass control") {
    const Mesh mesh = make_box_hex_mesh(1, 1, 1, 1, 1, 1);
    const std::vector<RegionLaw> laws = make_region_laws({brain_like()});

    SUBCASE("affine fields see no hourglass force") {
        const ElementPrecomp with = precompute_elements(mesh, 0.1);
        const ElementPrecomp without = precompute_elements(mesh, 0.0);
        Mat3 A;
        A << 0.05, 0.02, 0, 0.01, -0.04, 0.02, 0, 0.03, 0.01;
        Field3 u(8, 3);
        for (int i = 0; i < 8; ++i) u.row(i) = (A * mesh.nodes[i]).transpose();
        Field3 f1(8, 3), f2(8, 3);
        internal_forces(with, mesh.nodes, u, laws, f1);
        internal_forces(without, mesh.nodes, u, laws, f2);
        CHECK((f1 - f2).cwiseAbs().maxCoeff() < 1e-12);
    }

    SUBCASE("pure hourglass mode gets a restoring force") {
        const ElementPrecomp pre = precompute_elements(mesh, 0.1);
        const Eigen::Matrix<double, 8, 4> &gamma = pre.hexes[0].gamma;
        for (int mode = 0; mode < 4; ++mode) {
            Field3 u = Field3::Zero(8, 3);
            u.col(0) = 1e-3 * gamma.col(mode);
            Field3 f(8, 3);
            internal_forces(pre, mesh.nodes, u, laws, f);
            // Work of the force against the mode is positive (restoring).
            const double work = -(f.col(0).dot(u.col(0)));
            CHECK(work < 0);
            CHECK(f.norm() > 0);
        }
    }
}

TEST_CASE("assembled force equals the energy gradient") {
    const Mesh mesh = make_mixed_mesh();
    const ElementPrecomp pre = precompute_elements(mesh, 0.1);
    const std::vector<RegionLaw> laws = make_region_laws({brain_like()});
    const Field3 u = smooth_test_field(mesh, 0.01);

    Field3 f(mesh.num_nodes(), 3);
    internal_forces(pre, mesh.nodes, u, laws, f);

    const double h = 1e-7;
    double maxRel = 0;
    for (int i = 0; i < mesh.num_nodes(); ++i)
        for (int d = 0; d < 3; ++d) {
            Field3 up = u, um = u;
            up(i, d) += h;
            um(i, d) -= h;
            const double fd = (total_energy(pre, mesh.nodes, up, laws) -
                               total_energy(pre, mesh.nodes, um, laws)) /
                              (2 * h);
            maxRel = std::max(maxRel, std::abs(fd - f(i, d)));
        }
    CHECK(maxRel <= 1e-5 * f.cwiseAbs().maxCoeff());
}

TEST_CASE("ANP equals standard tets under homogeneous deformation") {
    // Hydrostatic compression: nodal and element volume ratios coincide, so
    // the averaged pressure reduces to the element pressure.
    const Mesh mesh = make_box_tet_mesh(2, 2, 2, 1, 1, 1);
    const ElementPrecomp pre = precompute_elements(mesh);
    const std::vector<RegionLaw> laws = make_region_laws({brain_like()});
    const double lambda = 0.98;
    Field3 u(mesh.num_nodes(), 3);
    for (int i = 0; i < mesh.num_nodes(); ++i)
        u.row(i) = ((lambda - 1.0) * mesh.nodes[i]).transpose();
    Field3 fAnp(mesh.num_nodes(), 3), fStd(mesh.num_nodes(), 3);
    internal_forces(pre, mesh.nodes, u, laws, fAnp, true);
    internal_forces(pre, mesh.nodes, u, laws, fStd, false);
    CHECK((fAnp - fStd).cwiseAbs().maxCoeff() <= 1e-8 * fStd.cwiseAbs().maxCoeff());
}

TEST_CASE("element inversion is reported") {
    const Mesh mesh = make_box_hex_mesh(1, 1, 1, 1, 1, 1);
    const ElementPrecomp pre = precompute_elements(mesh);
    const std::vector<RegionLaw> laws = make_region_laws({brain_like()});
    Field3 u = Field3::Zero(8, 3);
    // Collapse the top face through the bottom one.
    for (int i : {4, 5, 6, 7}) u(i, 2) = -1.5;
    Field3 f(8, 3);
    CHECK_THROWS_AS(internal_forces(pre, mesh.nodes, u, laws, f), InversionError);
}

TEST_CASE("min edge length") {
    CHECK(min_edge_length(make_box_hex_mesh(4, 2, 2, 1, 1, 1)) ==
          doctest::Approx(0.25).epsilon(1e-14));
    CHECK(min_edge_length(make_box_tet_mesh(1, 1, 1, 1, 2, 3)) ==
          doctest::Approx(1.0).epsilon(1e-14));
}
