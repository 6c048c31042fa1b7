#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tled/metrics.hpp"

#include <cstdio>
#include <filesystem>
#include <random>

using namespace tled;

namespace {

PointSet random_set(int n, unsigned seed, double scale) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, scale);
    PointSet s;
    for (int i = 0; i < n; ++i) s.points.emplace_back(dist(rng), dist(rng), dist(rng));
    return s;
}

std::vector<double> brute_force_distances(const PointSet &A, const PointSet &B) {
    std::vector<double> out;
    for (const auto &a : A.points) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto &b : B.points) best = std::min(best, (a - b).norm());
        out.push_back(best);
    }
    return out;
}

} // namespace

TEST_CASE("point csv round trip") {
    PointSet s;
    s.label = "probe";
    s.points = {Vec3(1.25, -3.5, 0.0625), Vec3(1.0 / 3.0, 2e-17, -7.0)};
    const std::string path =
        (std::filesystem::temp_directory_path() / "points_rt.csv").string();
    write_point_csv(path, s);
    const PointSet back = load_point_csv(path);
    std::remove(path.c_str());
    REQUIRE(back.points.size() == 2);
    CHECK(back.points[0] == s.points[0]);
    CHECK(back.points[1] == s.points[1]);
}

TEST_CASE("directed distances") {
    SUBCASE("identical sets are all zero") {
        const PointSet A = random_set(50, 3, 10.0);
        for (double d : directed_distances(A, A)) CHECK(d == 0.0);
    }

    SUBCASE("3-4-5 triangle") {
        PointSet A, B;
        A.points = {Vec3(0, 0, 0)};
        B.points = {Vec3(3, 4, 0)};
        const auto d = directed_distances(A, B);
        REQUIRE(d.size() == 1);
        CHECK(d[0] == doctest::Approx(5.0).epsilon(1e-14));
    }

    SUBCASE("grid index equals brute force on 1000 random points") {
        const PointSet A = random_set(1000, 5, 25.0);
        const PointSet B = random_set(700, 7, 25.0);
        const auto fast = directed_distances(A, B);
        const auto slow = brute_force_distances(A, B);
        REQUIRE(fast.size() == slow.size());
        for (std::size_t i = 0; i < fast.size(); ++i)
            CHECK(std::abs(fast[i] - slow[i]) <= 1e-12);
    }

    SUBCASE("empty target is an error") {
        const PointSet A = random_set(3, 9, 1.0);
        CHECK_THROWS_AS(directed_distances(A, PointSet{}), Error);
    }
}

TEST_CASE("percentile hausdorff distance") {
    SUBCASE("identical sets give zero at any percentile") {
        const PointSet A = random_set(64, 11, 5.0);
        for (double p : {5.0, 50.0, 95.0, 100.0})
            CHECK(hausdorff_percentile(A, A, p) == 0.0);
    }

    SUBCASE("outlier shows at H100, not at H95") {
        PointSet A, B;
        for (int i = 0; i < 99; ++i) {
            A.points.emplace_back(i * 0.001, 0, 0);
            B.points.emplace_back(i * 0.001, 0, 0);
        }
        A.points.emplace_back(0.05, 0, 10.0); // 10 mm off
        B.points.emplace_back(0.05, 0, 0);
        CHECK(hausdorff_percentile(A, B, 100) == doctest::Approx(10.0).epsilon(1e-12));
        CHECK(hausdorff_percentile(A, B, 95) == doctest::Approx(0.0));
    }

    SUBCASE("symmetric, monotone in p, translation equivariant") {
        const PointSet A = random_set(80, 13, 8.0);
        const PointSet B = random_set(90, 17, 8.0);
        double prev = 0;
        for (double p : {10.0, 40.0, 70.0, 95.0, 100.0}) {
            const double h = hausdorff_percentile(A, B, p);
            CHECK(h == hausdorff_percentile(B, A, p));
            CHECK(h >= prev);
            prev = h;
        }
        PointSet At = A, Bt = B;
        const Vec3 d(3.0, -1.0, 2.0);
        for (auto &x : At.points) x += d;
        for (auto &x : Bt.points) x += d;
        CHECK(std::abs(hausdorff_percentile(At, Bt, 95) -
                       hausdorff_percentile(A, B, 95)) <= 1e-12);
    }

    SUBCASE("invalid percentile") {
        const PointSet A = random_set(4, 19, 1.0);
        CHECK_THROWS_AS(hausdorff_percentile(A, A, 0.0), Error);
        CHECK_THROWS_AS(hausdorff_percentile(A, A, 101.0), Error);
    }
}

TEST_CASE("registration success curve") {
    SUBCASE("identical sets register fully at any positive threshold") {
        const PointSet A = random_set(40, 23, 6.0);
        const auto curve = registration_success_curve(A, A, {0.1, 1.7});
        REQUIRE(curve.size() == 2);
        for (const auto &c : curve) CHECK(c.percentile == 100.0);
    }

    SUBCASE("default threshold is 1.7 mm") {
        const PointSet A = random_set(40, 29, 6.0);
        const auto curve = registration_success_curve(A, A);
        REQUIRE(curve.size() == 1);
        CHECK(curve[0].threshold == 1.7);
    }

    SUBCASE("monotone non-decreasing in the threshold") {
        const PointSet A = random_set(60, 31, 10.0);
        const PointSet B = random_set(60, 37, 10.0);
        const auto curve = registration_success_curve(A, B, {0.5, 1.0, 1.7, 3.0, 8.0});
        for (std::size_t i = 1; i < curve.size(); ++i)
            CHECK(curve[i].percentile >= curve[i - 1].percentile);
    }
}
