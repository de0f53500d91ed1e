#include "spt/lab/experiments.hpp"
#include "spt/ranks.hpp"
#include "spt/stats.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using Catch::Matchers::WithinAbs;

TEST_CASE("rank examples", "[ranks]") {
    const auto r = spt::rank(std::vector<double>{0.2, 0.5, 0.3});
    CHECK(r.values == std::vector<double>{0.5, 0.3, 0.2});
    CHECK(r.order == std::vector<std::size_t>{1, 2, 0});
    CHECK(spt::rank(std::vector<double>{0.4, 0.4, 0.2}).order == std::vector<std::size_t>{0, 1, 2});
    CHECK(spt::rank(std::vector<double>{0.6, 0.3, 0.1}).order == std::vector<std::size_t>{0, 1, 2});
    CHECK(spt::rank(std::vector<double>{0.1, 0.3, 0.3, 0.3}).order == std::vector<std::size_t>{1, 2, 3, 0});
}

TEST_CASE("rank is a sorted bijection", "[ranks]") {
    std::mt19937_64 eng(1);
    std::uniform_int_distribution<int> coarse(1, 4);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t n = 2 + rep % 7;
        std::vector<double> mu(n);
        double s = 0.0;
        for (double& v : mu) s += (v = coarse(eng));  // coarse values force ties
        for (double& v : mu) v /= s;
        const auto r = spt::rank(mu);
        std::vector<bool> seen(n, false);
        double total = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            REQUIRE(!seen[r.order[k]]);
            seen[r.order[k]] = true;
            REQUIRE(mu[r.order[k]] == r.values[k]);
            if (k > 0) {
                REQUIRE(r.values[k - 1] >= r.values[k]);
                if (r.values[k - 1] == r.values[k]) REQUIRE(r.order[k - 1] < r.order[k]);
            }
            total += r.values[k];
        }
        REQUIRE_THAT(total, WithinAbs(1.0, 1e-12));
        REQUIRE(spt::rank(r.values).values == r.values);
    }
}

TEST_CASE("local time vanishes away from zero", "[ranks]") {
    std::vector<double> y{1.0, 1.3, 0.8, 2.0, 0.5, 1.1};
    const auto lt = spt::estimate_local_time(y);
    for (double v : lt.values) CHECK(v == 0.0);
    CHECK_THROWS_AS(spt::estimate_local_time(std::vector<double>{0.1, -0.1}), std::invalid_argument);
}

TEST_CASE("local time is non-decreasing from zero", "[ranks]") {
    const auto f = spt::generate_factors(spt::make_grid(1.0, 1000), 1, 20, 5);
    const auto lt = spt::lab::brownian_local_times(f, 1);
    for (std::size_t i = 0; i < 20; ++i) {
        const auto dw = f.increments(i);
        std::vector<double> gap{0.0}, drive;
        double w = 0.0;
        for (double d : dw) {
            drive.push_back((w >= 0 ? 1.0 : -1.0) * d);
            w += d;
            gap.push_back(std::abs(w));
        }
        const auto path = spt::estimate_local_time(gap, drive);
        CHECK(path.values.front() == 0.0);
        for (std::size_t k = 1; k < path.values.size(); ++k) REQUIRE(path.values[k] >= path.values[k - 1]);
        CHECK(path.terminal() == lt[i]);
    }
}

TEST_CASE("local time of |W| at 0 has mean sqrt(2/pi)", "[ranks]") {
    const double oracle = std::sqrt(2.0 / std::numbers::pi);
    CHECK_THAT(oracle, WithinAbs(0.797884560802865, 1e-15));
    const auto fine = spt::generate_factors(spt::make_grid(1.0, 10000), 1, 10000, 21);
    std::vector<double> bias;
    for (std::size_t factor : {100u, 10u, 1u}) {
        const auto est = spt::estimate_mean(spt::lab::brownian_local_times(fine.coarsened(factor), 0));
        bias.push_back(std::abs(est.mean - oracle));
        if (factor == 1) CHECK(std::abs(est.mean / oracle - 1.0) <= 0.02);
    }
    INFO("bias at dt = 1e-2, 1e-3, 1e-4: " << bias[0] << ", " << bias[1] << ", " << bias[2]);
    CHECK(bias[0] >= bias[1]);
    CHECK(bias[1] >= bias[2]);
}

TEST_CASE("ranked decomposition without crossings", "[ranks]") {
    Eigen::MatrixXd s(2, 2);
    s << 0.2, 0.0, 0.05, 0.15;
    const auto model = spt::constant_coefficient_market({0.05, 0.1}, s, {10.0, 1.0});
    const auto fine = spt::generate_factors(spt::make_grid(1.0, 4000), 2, 1, 3);
    double residual[2];
    for (int level = 0; level < 2; ++level) {
        const auto path = spt::integrate_log_euler(model, level == 0 ? fine.coarsened(4) : fine, 0);
        const auto rep = spt::verify_ranked_decomposition(path, model);
        REQUIRE(rep.crossings == 0);
        for (double v : rep.local_times[0].values) REQUIRE(v == 0.0);
        residual[level] = std::max(std::abs(rep.ranks[0].residual), std::abs(rep.ranks[1].residual));
    }
    INFO("residuals " << residual[0] << " then " << residual[1]);
    CHECK(residual[1] < 1e-4);
    CHECK(residual[1] < residual[0]);
}

TEST_CASE("ranked decomposition with crossings shrinks in dt", "[ranks]") {
    const auto model = spt::constant_coefficient_market({0.0, 0.0}, Eigen::MatrixXd::Identity(2, 2) * 0.5, {1.0, 1.0});
    const auto fine = spt::generate_factors(spt::make_grid(1.0, 10000), 2, 30, 4);
    double err[2] = {0, 0};
    for (int level = 0; level < 2; ++level) {
        for (std::size_t i = 0; i < 30; ++i) {
            const auto path = spt::integrate_log_euler(model, level == 0 ? fine.coarsened(10) : fine, i);
            err[level] += spt::verify_ranked_decomposition(path, model).max_relative() / 30.0;
        }
    }
    INFO("mean max relative residual " << err[0] << " then " << err[1]);
    CHECK(err[1] <= 0.05);
    CHECK(err[1] < err[0]);
}

TEST_CASE("top-pair local time is flat while the leader exceeds 1/2", "[ranks]") {
    const auto model = spt::ou_two_stock(0.5, 1.0);
    const auto f = spt::generate_factors(spt::make_grid(3.0, 3000), 2, 20, 6);
    for (std::size_t i = 0; i < 20; ++i) {
        const auto rep = spt::verify_ranked_decomposition(spt::integrate_log_euler(model, f, i), model);
        CHECK(rep.top_pair_violations == 0);
    }
}

TEST_CASE("ranked relative variances obey their bounds on diverse paths", "[ranks]") {
    Eigen::MatrixXd s(3, 3);
    s << 0.5, 0.1, 0.0, 0.0, 0.4, 0.2, 0.1, 0.0, 0.6;
    const auto model = spt::diverse_market(3, s, {0.1, 0.0, 0.0}, 0.3, 1.0, {1, 2, 3});
    const auto f = spt::generate_factors(spt::make_grid(2.0, 2000), 3, 20, 7);
    for (std::size_t i = 0; i < 20; ++i) {
        const auto b = spt::check_ranked_variance_bounds(spt::integrate_log_euler(model, f, i), model);
        CHECK(b.checked > 0);
        CHECK(b.violations == 0);
    }
}
