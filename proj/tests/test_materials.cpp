#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tled/materials.hpp"

#include <cmath>
#include <random>

using namespace tled;

namespace {

// Central finite differences of the energy over the 6 independent C
// components: S = 2 dW/dC.
Mat3 pk2_from_energy_fd(const Mat3 &F, const MaterialParams &params) {
    const Mat3 C = F.transpose() * F;
    const double h = 1e-6;
    Mat3 S;
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) {
            Mat3 dC = Mat3::Zero();
            dC(i, j) = dC(j, i) = h;
            auto energyAt = [&](const Mat3 &Cp) {
                // W is evaluated through F; use the symmetric square root.
                Eigen::SelfAdjointEigenSolver<Mat3> eig(Cp);
                const Mat3 Fp = eig.operatorSqrt();
                return energy_density(Fp, params);
            };
            const double d = (energyAt(C + dC) - energyAt(C - dC)) / (2 * h);
            // Off-diagonal perturbation moves two entries of C at once.
            S(i, j) = S(j, i) = (i == j) ? 2.0 * d : d;
        }
    return S;
}

Mat3 random_admissible_F(std::mt19937 &rng) {
    std::uniform_real_distribution<double> dist(-0.15, 0.15);
    Mat3 F = Mat3::Identity();
    do {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) F(i, j) = (i == j ? 1.0 : 0.0) + dist(rng);
    } while (F.determinant() < 0.4);
    return F;
}

} // namespace

TEST_CASE("moduli from E and nu") {
    auto [mu, kappa] = moduli_from_E_nu(3000, 0.49);
    CHECK(mu == doctest::Approx(3000 / (2 * 1.49)).epsilon(1e-14));
    CHECK(kappa == doctest::Approx(50000).epsilon(1e-12));
    std::tie(mu, kappa) = moduli_from_E_nu(10, 0.1);
    CHECK(mu == doctest::Approx(10 / 2.2).epsilon(1e-14));
    CHECK(kappa == doctest::Approx(10 / 2.4).epsilon(1e-14));
    CHECK_THROWS_AS(moduli_from_E_nu(3000, 0.5), Error);
    CHECK_THROWS_AS(moduli_from_E_nu(-1, 0.3), Error);
}

TEST_CASE("stress-free reference") {
    MaterialParams nh;
    nh.E = 3000;
    nh.nu = 0.49;
    CHECK(pk2_stress(Mat3::Identity(), nh).norm() == 0.0);

    MaterialParams og;
    og.model = MaterialModel::OgdenVisco;
    og.E = 3000;
    og.nu = 0.49;
    og.ogdenMu = {800, 200};
    og.ogdenAlpha = {-4.7, 1.3};
    CHECK(pk2_stress(Mat3::Identity(), og).norm() < 1e-10);
}

TEST_CASE("stress matches the energy finite-difference oracle") {
    MaterialParams nh;
    nh.E = 3000;
    nh.nu = 0.49;

    MaterialParams og;
    og.model = MaterialModel::OgdenVisco;
    og.E = 3000;
    og.nu = 0.49;
    og.ogdenMu = {700, 300};
    og.ogdenAlpha = {2.8, -1.9};

    std::mt19937 rng(7);
    for (int trial = 0; trial < 25; ++trial) {
        const Mat3 F = random_admissible_F(rng);
        for (const auto *params : {&nh, &og}) {
            const Mat3 S = pk2_stress(F, *params);
            const Mat3 Sfd = pk2_from_energy_fd(F, *params);
            CHECK((S - Sfd).norm() <= 1e-5 * std::max(1.0, Sfd.norm()));
            CHECK((S - S.transpose()).norm() <= 1e-10 * S.norm());
        }
    }
}

TEST_CASE("objectivity and isotropy") {
    MaterialParams p;
    p.E = 3000;
    p.nu = 0.45;
    std::mt19937 rng(11);
    const Mat3 F = random_admissible_F(rng);
    const Mat3 R = Eigen::AngleAxisd(0.83, Vec3(1, 2, -1).normalized()).toRotationMatrix();
    // S depends on F only through C, so a left rotation changes nothing.
    CHECK((pk2_stress(R * F, p) - pk2_stress(F, p)).norm() < 1e-10 * pk2_stress(F, p).norm());

    // Diagonal stretches: principal stresses invariant under axis permutation.
    const Mat3 Fd = Vec3(1.12, 0.95, 1.03).asDiagonal();
    const Mat3 Fp = Vec3(0.95, 1.03, 1.12).asDiagonal();
    Vec3 s1 = pk2_stress(Fd, p).diagonal(), s2 = pk2_stress(Fp, p).diagonal();
    std::sort(s1.data(), s1.data() + 3);
    std::sort(s2.data(), s2.data() + 3);
    CHECK((s1 - s2).norm() < 1e-10 * s1.norm());
}

TEST_CASE("volumetric pressure has the sign of J - 1") {
    MaterialParams p;
    p.E = 3000;
    p.nu = 0.4;
    for (double lambda : {0.6, 0.9, 0.999, 1.001, 1.2, 1.45}) {
        const Mat3 F = lambda * Mat3::Identity();
        const double trS = pk2_stress(F, p).trace();
        CHECK(trS * (lambda * lambda * lambda - 1.0) > 0);
    }
}

TEST_CASE("ogden with alpha = 2 reduces to the neo-hookean deviatoric term") {
    const double mu = 1006.7114093959733;
    std::mt19937 rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        const Mat3 F = random_admissible_F(rng);
        const Mat3 So = pk2_ogden_deviatoric(F, {mu}, {2.0});
        const Mat3 Sn = pk2_neo_hookean_deviatoric(F, mu);
        CHECK((So - Sn).norm() <= 1e-8 * std::max(1.0, Sn.norm()));
    }
}

TEST_CASE("near-equal principal stretches stay finite") {
    MaterialParams og;
    og.model = MaterialModel::OgdenVisco;
    og.E = 3000;
    og.nu = 0.49;
    og.ogdenMu = {500};
    og.ogdenAlpha = {-4.7};
    // Two coincident stretches and three almost-coincident ones.
    for (const Vec3 &d : {Vec3(1.1, 1.1, 0.9), Vec3(1.0 + 1e-12, 1.0, 1.0 - 1e-12)}) {
        const Mat3 S = pk2_stress(Mat3(d.asDiagonal()), og);
        CHECK(S.allFinite());
    }
}

TEST_CASE("prony series relaxation") {
    MaterialParams og;
    og.model = MaterialModel::OgdenVisco;
    og.E = 3000;
    og.nu = 0.49;
    og.ogdenMu = {1000};
    og.ogdenAlpha = {2.0};
    og.prony = {{0.3, 0.5}};

    const Mat3 F = Vec3(1.08, 0.98, 0.96).asDiagonal();
    const Mat3 Sdev = pk2_ogden_deviatoric(F, og.ogdenMu, og.ogdenAlpha);
    const Mat3 Svol = pk2_volumetric(F, og.kappa());

    // Hold F fixed and step the history: the deviatoric part relaxes from
    // the instantaneous value toward (1 - g) of it, volumetric untouched.
    ViscoState state;
    state.init(og.prony.size());
    const double dt = 0.01;
    Mat3 S = pk2_ogden_visco(F, dt, og, state);
    for (int step = 0; step < 4000; ++step) S = pk2_ogden_visco(F, dt, og, state);
    const Mat3 expected = 0.7 * Sdev + Svol;
    CHECK((S - expected).norm() <= 1e-6 * expected.norm());

    SUBCASE("empty prony leaves the state alone") {
        MaterialParams elastic = og;
        elastic.prony.clear();
        ViscoState none;
        const Mat3 Se = pk2_ogden_visco(F, dt, elastic, none);
        CHECK(none.empty());
        CHECK((Se - (Sdev + Svol)).norm() <= 1e-10 * Se.norm());
    }
}

TEST_CASE("parameter validation") {
    MaterialParams p;
    p.E = 3000;
    p.nu = 0.49;
    CHECK_NOTHROW(p.validate());

    MaterialParams og = p;
    og.model = MaterialModel::OgdenVisco;
    CHECK_THROWS_AS(og.validate(), Error); // no ogden terms
    og.ogdenMu = {100};
    og.ogdenAlpha = {2.0, 3.0};
    CHECK_THROWS_AS(og.validate(), Error); // length mismatch
    og.ogdenAlpha = {2.0};
    CHECK_NOTHROW(og.validate());
    og.prony = {{0.7, 1.0}, {0.4, 2.0}};
    CHECK_THROWS_AS(og.validate(), Error); // sum g >= 1
    og.prony = {{0.3, -1.0}};
    CHECK_THROWS_AS(og.validate(), Error); // tau <= 0
}

TEST_CASE("resubstitution applies the law pointwise") {
    MaterialParams og;
    og.model = MaterialModel::OgdenVisco;
    og.E = 3000;
    og.nu = 0.49;
    og.ogdenMu = {og.mu()};
    og.ogdenAlpha = {2.0};

    const Mat3 F = Vec3(0.97, 1.01, 1.02).asDiagonal();
    const std::vector<Mat3> field = {Mat3::Identity(), F};
    const std::vector<Mat3> stresses = resubstitute_stress(field, og);
    REQUIRE(stresses.size() == 2);
    CHECK(stresses[0].norm() < 1e-10);
    const Mat3 oracle =
        pk2_neo_hookean_deviatoric(F, og.ogdenMu[0]) + pk2_volumetric(F, og.kappa());
    CHECK((stresses[1] - oracle).norm() <= 1e-6 * oracle.norm());
    CHECK(resubstitute_stress({}, og).empty());
}
