#include "hdm/dataset.hpp"
#include "hdm/metrics.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace hdm;

namespace {
std::vector<Vec> points_1d(std::initializer_list<double> values) {
    std::vector<Vec> out;
    for (double v : values) out.push_back(Vec::Constant(1, v));
    return out;
}

std::vector<Vec> draw_mixture(std::uint64_t seed, int n) {
    MixtureParams p;
    p.seed = seed;
    p.n_samples = n;
    std::vector<Vec> out;
    const JointDataset data = make_gaussian_mixture(p);
    for (const auto& s : data.samples()) {
        Vec z(s.x.size() + s.y.size());
        z << s.x, s.y;
        out.push_back(z);
    }
    return out;
}
}  // namespace

TEST_SUITE("metrics") {
    TEST_CASE("energy distance of identical multisets is zero") {
        const auto a = points_1d({0.1, -0.4, 2.0, 0.1});
        CHECK(energy_distance(a, a) == doctest::Approx(0.0).epsilon(1e-15));
        const auto b = points_1d({2.0, 0.1, 0.1, -0.4});
        CHECK(std::abs(energy_distance(a, b)) < 1e-15);
    }

    TEST_CASE("energy distance of single-point sets {0} and {2} is 4") {
        CHECK(energy_distance(points_1d({0.0}), points_1d({2.0})) == doctest::Approx(4.0).epsilon(1e-15));
    }

    TEST_CASE("energy distance is symmetric and matches the brute-force oracle") {
        const auto a = draw_mixture(1, 150);
        const auto b = draw_mixture(2, 120);
        const double ab = energy_distance(a, b);
        CHECK(ab == doctest::Approx(energy_distance(b, a)).epsilon(1e-12));
        CHECK(ab == doctest::Approx(oracle::energy_distance(a, b)).epsilon(1e-10));
        CHECK(ab >= 0.0);
    }

    TEST_CASE("energy distance rejects empty sets and dimension mismatch") {
        CHECK_THROWS(energy_distance({}, points_1d({1.0})));
        CHECK_THROWS(energy_distance(points_1d({1.0}), {Vec::Zero(2)}));
    }

    TEST_CASE("independent draws from one mixture pass the permutation test") {
        const auto a = draw_mixture(10, 2000);
        const auto b = draw_mixture(11, 2000);
        const TwoSampleResult r = energy_two_sample_test(a, b, 99, 0.95, 3);
        CHECK(r.pass);
        CHECK(r.statistic < r.noise_floor);
        CHECK(r.permutations == 99);
    }

    TEST_CASE("shifted distributions fail the permutation test") {
        auto a = draw_mixture(10, 500);
        auto b = draw_mixture(11, 500);
        for (auto& v : b) v[0] += 0.3;
        CHECK_FALSE(energy_two_sample_test(a, b, 99, 0.95, 3).pass);
    }

    TEST_CASE("permutation test is deterministic for a seed") {
        const auto a = draw_mixture(1, 200);
        const auto b = draw_mixture(2, 200);
        const auto r1 = energy_two_sample_test(a, b, 49, 0.95, 8);
        const auto r2 = energy_two_sample_test(a, b, 49, 0.95, 8);
        CHECK(r1.noise_floor == r2.noise_floor);
        CHECK(r1.statistic == r2.statistic);
    }

    TEST_CASE("Jaccard examples") {
        CHECK(*jaccard({0, 1, 1, 2}, {0, 1, 1, 2}, 3) == 1.0);
        CHECK(*jaccard({1, 1, 0, 0}, {0, 0, 1, 1}, 2) == 0.0);
        // pred covers pixels {1, 2}, truth {2, 3}
        CHECK(*jaccard({0, 1, 1, 0}, {0, 0, 1, 1}, 2) == doctest::Approx(1.0 / 3.0));
        CHECK_FALSE(jaccard({0, 0}, {0, 0}, 3).has_value());
        CHECK_THROWS(jaccard({0}, {0, 1}, 2));
    }

    TEST_CASE("classes with an empty union are skipped") {
        // class 2 absent from both masks: only class 1 counts
        CHECK(*jaccard({1, 1, 0}, {1, 0, 0}, 3) == doctest::Approx(0.5));
        const double expected = oracle::jaccard({1, 2, 0, 2}, {1, 0, 2, 2}, 3);
        CHECK(*jaccard({1, 2, 0, 2}, {1, 0, 2, 2}, 3) == doctest::Approx(expected));
        // samples without any foreground are skipped in the mean
        CHECK(mean_jaccard({{0, 0}, {1, 1}}, {{0, 0}, {1, 0}}, 2) == doctest::Approx(0.5));
        CHECK(mean_jaccard({{0, 0}}, {{0, 0}}, 2) == 1.0);
    }

    TEST_CASE("accuracy counts matching labels") {
        CHECK(accuracy({{1}, {0}, {2}, {2}}, {{1}, {1}, {2}, {0}}) == doctest::Approx(0.5));
        CHECK_THROWS(accuracy({}, {}));
    }

    TEST_CASE("compensated sum recovers cancelled terms") {
        CHECK(compensated_sum({1e16, 1.0, -1e16}) == 1.0);
        CHECK(compensated_sum({}) == 0.0);
    }
}
