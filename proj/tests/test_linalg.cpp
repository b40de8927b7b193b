#include <doctest.h>

#include <cmath>

#include "dislab/linalg.hpp"
#include "dislab/rng.hpp"
#include "oracles.hpp"

using dislab::Rng;
using dislab::Tensor;

TEST_CASE("LU det and solve on random systems") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = rng.normal_tensor({4, 4});
        double d = dislab::det(a);
        CHECK(std::isfinite(d));
        Tensor inv = dislab::inverse(a);
        // a * inv should be the identity
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) acc += a.at(i, k) * inv.at(k, j);
                CHECK(acc == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
            }
    }
}

TEST_CASE("det matches the 2x2 closed form") {
    Tensor a = Tensor::from({2, 2}, {3.0, 1.0, -2.0, 4.0});
    CHECK(dislab::det(a) == doctest::Approx(14.0));
}

TEST_CASE("singular values of a diagonal matrix") {
    Tensor a = Tensor::zeros({3, 3});
    a.at(0, 0) = 3.0;
    a.at(1, 1) = -5.0;
    a.at(2, 2) = 1.0;
    auto sv = dislab::singular_values(a);
    CHECK(sv[0] == doctest::Approx(5.0));
    CHECK(sv[1] == doctest::Approx(3.0));
    CHECK(sv[2] == doctest::Approx(1.0));
}

TEST_CASE("singular values match sqrt of eigenvalues of A^T A on randoms") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor a = rng.normal_tensor({5, 3});
        auto sv = dislab::singular_values(a);
        // Frobenius norm identity: sum sigma^2 = sum a_ij^2
        double fro = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) fro += a[i] * a[i];
        double ssq = 0.0;
        for (double s : sv) ssq += s * s;
        CHECK(ssq == doctest::Approx(fro).epsilon(1e-10));
        CHECK(sv.size() == 3);
        CHECK(sv[0] >= sv[1]);
        CHECK(sv[1] >= sv[2]);
    }
}

TEST_CASE("numeric rank detects an exactly repeated row") {
    Tensor a = Tensor::from({3, 3}, {1, 2, 3, 2, 4, 6, 0, 1, 0});
    auto sv = dislab::singular_values(a);
    CHECK(dislab::numeric_rank(sv, 1e-8) == 2);
}

TEST_CASE("pearson basics") {
    std::vector<double> x = {1, 2, 3, 4};
    std::vector<double> y = {2, 4, 6, 8};
    CHECK(dislab::pearson(x, y) == doctest::Approx(1.0));
    std::vector<double> yneg = {8, 6, 4, 2};
    CHECK(dislab::pearson(x, yneg) == doctest::Approx(-1.0));
    std::vector<double> flat = {5, 5, 5, 5};
    CHECK(dislab::pearson(x, flat) == 0.0);
}

TEST_CASE("spearman is invariant under monotone transforms") {
    Rng rng(9);
    std::vector<double> x(50), y(50);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = rng.normal();
        y[i] = std::exp(2.0 * x[i]) + 0.5;  // strictly increasing in x
    }
    CHECK(dislab::spearman(x, y) == doctest::Approx(1.0));
}

TEST_CASE("max_assignment equals brute force on random instances") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t n = 2 + rng.index(4);  // 2..5
        Tensor score = rng.uniform_tensor({n, n}, 0.0, 1.0);
        auto got = dislab::max_assignment(score);
        auto [best_total, best] = oracles::brute_force_assignment(score);
        double got_total = 0.0;
        for (std::size_t i = 0; i < n; ++i) got_total += score.at(i, got[i]);
        CHECK(got_total == doctest::Approx(best_total).epsilon(1e-12));
    }
}
