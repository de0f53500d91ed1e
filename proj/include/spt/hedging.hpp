#pragma once

#include "spt/error.hpp"
#include "spt/markets.hpp"
#include "spt/parallel.hpp"
#include "spt/paths.hpp"
#include "spt/portfolios.hpp"
#include "spt/stats.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spt {

// theta = sigma' (sigma sigma')^{-1} (b - r 1)
inline Eigen::VectorXd market_price_of_risk(const MarketModel& model, std::span<const double> b, double r) {
    const std::size_t n = model.stocks();
    if (b.size() != n) throw std::invalid_argument("rate-of-return vector has wrong length");
    Eigen::VectorXd excess(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) excess(static_cast<Eigen::Index>(i)) = b[i] - r;
    Eigen::VectorXd theta = model.volatility().risk_projection() * excess;
    if (!theta.allFinite()) throw numeric_failure("market price of risk is not finite");
    return theta;
}

struct DeflatorPath {
    std::shared_ptr<const PathGrid> grid;
    std::size_t m = 0;
    std::vector<double> theta;  // K x m, used on step k
    std::vector<double> log_L;  // K + 1
    std::vector<double> log_B;  // K + 1, int_0^t r

    double L(std::size_t k) const { return std::exp(log_L[k]); }
    double B(std::size_t k) const { return std::exp(log_B[k]); }
    // L(t_k) / B(t_k)
    double discount(std::size_t k) const { return std::exp(log_L[k] - log_B[k]); }
};

// log L(t_{k+1}) = log L(t_k) - theta' dW - |theta|^2 dt / 2, with theta built
// from the rates of return b = gamma + a_ii/2 the path actually used.
inline DeflatorPath deflator_path(const MarketModel& model, const PricePath& path) {
    const std::size_t n = path.n, m = path.m, K = path.steps();
    if (n != model.stocks() || m != model.factors()) throw std::invalid_argument("path does not match model");
    const double r = model.rate();
    const auto var = model.volatility().variances();
    const Eigen::MatrixXd& P = model.volatility().risk_projection();

    DeflatorPath d;
    d.grid = path.grid;
    d.m = m;
    d.theta.resize(K * m);
    d.log_L.resize(K + 1);
    d.log_B.resize(K + 1);
    d.log_L[0] = 0.0;
    d.log_B[0] = 0.0;
    std::vector<double> excess(n);
    for (std::size_t k = 0; k < K; ++k) {
        const auto g = path.gamma(k);
        for (std::size_t i = 0; i < n; ++i) excess[i] = g[i] + 0.5 * var[i] - r;
        const auto dw = path.dw(k);
        const double dt = path.dt(k);
        double lin = 0.0, sq = 0.0;
        for (std::size_t v = 0; v < m; ++v) {
            double th = 0.0;
            for (std::size_t i = 0; i < n; ++i) th += P(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(i)) * excess[i];
            if (!std::isfinite(th)) throw integration_failure(path.index, k, "non-finite market price of risk");
            d.theta[k * m + v] = th;
            lin += th * dw[v];
            sq += th * th;
        }
        d.log_L[k + 1] = d.log_L[k] - lin - 0.5 * sq * dt;
        d.log_B[k + 1] = d.log_B[k] + r * dt;
    }
    return d;
}

// Payoff of a claim observed at grid index k (k = steps() for the horizon).
struct ClaimSpec {
    std::string descriptor;
    std::function<double(const PricePath&, std::size_t k)> payoff;
};

inline ClaimSpec call_claim(std::size_t stock, double strike) {
    if (!(strike >= 0.0)) throw std::invalid_argument("strike must be non-negative");
    return {"call(" + std::to_string(stock + 1) + ", " + std::to_string(strike) + ")",
            [stock, strike](const PricePath& p, std::size_t k) { return std::max(p.price(k, stock) - strike, 0.0); }};
}

// (X_i - X_j)^+
inline ClaimSpec exchange_claim(std::size_t i, std::size_t j) {
    return {"exchange(" + std::to_string(i + 1) + ", " + std::to_string(j + 1) + ")",
            [i, j](const PricePath& p, std::size_t k) { return std::max(p.price(k, i) - p.price(k, j), 0.0); }};
}

inline ClaimSpec zero_claim() {
    return {"zero", [](const PricePath&, std::size_t) { return 0.0; }};
}

struct HedgeEstimate {
    double h = 0.0;
    double std_error = 0.0;
    std::size_t paths = 0;
};

// Runs every path, hands (path, deflator) to `sample`, and returns one vector
// of samples per requested quantity, indexed by path.
template <class Sample>
std::vector<std::vector<double>> deflated_samples(const MarketModel& model, const FactorPaths& factors,
                                                  std::size_t threads, std::size_t quantities, Sample&& sample) {
    auto rows = parallel_map(factors.paths(), threads, [&](std::size_t i) {
        const PricePath path = integrate_log_euler(model, factors, i);
        const DeflatorPath defl = deflator_path(model, path);
        std::vector<double> out = sample(path, defl);
        if (out.size() != quantities) throw std::logic_error("sample returned the wrong number of quantities");
        return out;
    });
    std::vector<std::vector<double>> cols(quantities, std::vector<double>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t q = 0; q < quantities; ++q) cols[q][i] = rows[i][q];
    return cols;
}

// h = E[Y L(T) / B(T)]
inline HedgeEstimate hedge_price(const MarketModel& model, const ClaimSpec& claim, const FactorPaths& factors,
                                 std::size_t threads = 1) {
    auto cols = deflated_samples(model, factors, threads, 1, [&](const PricePath& p, const DeflatorPath& d) {
        const std::size_t K = p.steps();
        const double y = claim.payoff(p, K);
        if (!(y >= 0.0)) throw integration_failure(p.index, K, "payoff must be non-negative");
        return std::vector<double>{y == 0.0 ? 0.0 : y * d.discount(K)};
    });
    const auto est = estimate_mean(cols[0]);
    return {est.mean, est.std_error, est.count};
}

// Z(0) n^((1-p)/p) exp(-eps delta (1-p) T / 2)
inline double call_decay_envelope(double z0, std::size_t n, double p, double epsilon, double delta, double T) {
    return z0 * std::pow(static_cast<double>(n), (1.0 - p) / p) * std::exp(-epsilon * delta * (1.0 - p) * T / 2.0);
}

struct CallDecayRow {
    double T = 0.0;
    double h_hat = 0.0;
    double std_error = 0.0;
    double envelope = 0.0;
    double deflated_stock = 0.0;     // E[L X_1 / B]
    double deflated_stock_se = 0.0;
    double deflator = 0.0;           // E[L(T)]
    double deflator_se = 0.0;
};

struct CallDecayStudy {
    std::vector<CallDecayRow> rows;
    double x1_0 = 0.0;
    bool below_spot = true;        // h(T) < X_1(0) for every T
    bool nonincreasing = true;     // h(T_{j+1}) <= h(T_j) + 3 combined standard errors
    bool under_envelope = true;    // E[L X_1 / B] <= envelope + 3 standard errors
};

// One simulation up to max(T_list); each horizon must be a grid time.
inline CallDecayStudy call_decay_study(const MarketModel& model, double strike, const std::vector<double>& horizons,
                                       const FactorPaths& factors, double delta, double p = 0.5,
                                       std::size_t threads = 1) {
    if (horizons.empty()) throw std::invalid_argument("empty horizon list");
    const PathGrid& grid = factors.grid();
    std::vector<std::size_t> idx;
    for (double T : horizons) {
        const std::size_t k = grid.first_index_at_or_after(T);
        if (k > grid.steps() || std::abs(grid.time(k) - T) > 1e-9 * std::max(1.0, T))
            throw std::invalid_argument("horizon " + std::to_string(T) + " is not on the simulation grid");
        idx.push_back(k);
    }
    const std::size_t H = idx.size();
    auto cols = deflated_samples(model, factors, threads, 3 * H, [&](const PricePath& path, const DeflatorPath& d) {
        std::vector<double> out(3 * H);
        for (std::size_t j = 0; j < H; ++j) {
            const double x1 = path.price(idx[j], 0), disc = d.discount(idx[j]);
            out[j] = std::max(x1 - strike, 0.0) * disc;
            out[H + j] = x1 * disc;
            out[2 * H + j] = d.L(idx[j]);
        }
        return out;
    });

    CallDecayStudy s;
    s.x1_0 = model.initial_prices()[0];
    double z0 = 0.0;
    for (double x : model.initial_prices()) z0 += x;
    const auto cert = model.certificate();
    for (std::size_t j = 0; j < H; ++j) {
        const auto h = estimate_mean(cols[j]);
        const auto lx = estimate_mean(cols[H + j]);
        const auto l = estimate_mean(cols[2 * H + j]);
        CallDecayRow row;
        row.T = horizons[j];
        row.h_hat = h.mean;
        row.std_error = h.std_error;
        row.envelope = call_decay_envelope(z0, model.stocks(), p, cert.epsilon, delta, horizons[j]);
        row.deflated_stock = lx.mean;
        row.deflated_stock_se = lx.std_error;
        row.deflator = l.mean;
        row.deflator_se = l.std_error;
        s.rows.push_back(row);
        if (!(row.h_hat < s.x1_0)) s.below_spot = false;
        if (row.deflated_stock > row.envelope + 3.0 * row.deflated_stock_se) s.under_envelope = false;
        if (j > 0) {
            const auto& prev = s.rows[j - 1];
            const double tol = 3.0 * std::hypot(prev.std_error, row.std_error);
            if (row.h_hat > prev.h_hat + tol) s.nonincreasing = false;
        }
    }
    return s;
}

// Asset values Xi(0) and Xi(T) computed from a path.
using AssetValue = std::function<std::pair<double, double>(const PricePath&)>;

struct ParityGap {
    double gap = 0.0;          // h_1 - h_2 = E[L(T)(Xi_1(T) - Xi_2(T))]
    double std_error = 0.0;
    double initial_gap = 0.0;  // Xi_1(0) - Xi_2(0)
    double h1 = 0.0, h2 = 0.0;
    double h1_se = 0.0, h2_se = 0.0;
};

inline ParityGap put_call_parity_gap(const MarketModel& model, const AssetValue& xi1, const AssetValue& xi2,
                                     const FactorPaths& factors, std::size_t threads = 1) {
    if (model.rate() != 0.0) throw std::invalid_argument("parity check assumes a zero short rate");
    double init = 0.0;
    bool have_init = false;
    auto cols = deflated_samples(model, factors, threads, 4, [&](const PricePath& path, const DeflatorPath& d) {
        const auto [a0, aT] = xi1(path);
        const auto [b0, bT] = xi2(path);
        const double L = d.L(path.steps());
        return std::vector<double>{L * (aT - bT), L * std::max(aT - bT, 0.0), L * std::max(bT - aT, 0.0), a0 - b0};
    });
    ParityGap g;
    const auto diff = estimate_mean(cols[0]);
    const auto h1 = estimate_mean(cols[1]);
    const auto h2 = estimate_mean(cols[2]);
    g.gap = diff.mean;
    g.std_error = diff.std_error;
    g.h1 = h1.mean;
    g.h1_se = h1.std_error;
    g.h2 = h2.mean;
    g.h2_se = h2.std_error;
    for (double v : cols[3]) {
        if (!have_init) {
            init = v;
            have_init = true;
        } else if (v != init) {
            throw std::invalid_argument("initial asset values differ across paths");
        }
    }
    g.initial_gap = init;
    return g;
}

// Xi = X_i
inline AssetValue stock_asset(std::size_t i) {
    return [i](const PricePath& p) { return std::pair{p.price(0, i), p.price(p.steps(), i)}; };
}

// Xi = Z^pi with Z^pi(0) = z
inline AssetValue portfolio_asset(std::shared_ptr<const PortfolioRule> rule, const MarketModel& model, double z) {
    return [rule, model, z](const PricePath& p) {
        const ValuePath v = portfolio_value(*rule, model, p, z);
        return std::pair{v.initial(), v.terminal()};
    };
}

} // namespace spt
