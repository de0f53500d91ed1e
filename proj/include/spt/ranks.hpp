#pragma once

#include "spt/markets.hpp"
#include "spt/portfolios.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace spt {

// values sorted non-increasing; order[k] = index of the stock holding rank k
// (both 0-based). Equal weights keep ascending index order.
struct RankedWeights {
    std::vector<double> values;
    std::vector<std::size_t> order;
};

inline void rank_order(std::span<const double> mu, std::span<std::size_t> order) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return mu[i] > mu[j]; });
}

inline RankedWeights rank(std::span<const double> mu) {
    RankedWeights r;
    r.order.resize(mu.size());
    rank_order(mu, r.order);
    r.values.resize(mu.size());
    for (std::size_t k = 0; k < mu.size(); ++k) r.values[k] = mu[r.order[k]];
    return r;
}

struct LocalTimePath {
    std::vector<double> values;  // Lambda(t_k), k = 0..K
    double terminal() const { return values.back(); }
};

// Discrete Tanaka estimate for a non-negative gap process Y:
//   Lambda(t_K) = Y(t_K) - Y(0) - sum_{k<K} 1{Y(t_k) > 0} dX_k
// where dX_k is the increment of the signed process whose absolute value Y
// tracks over the step (for adjacent ranks: the log-ratio of the two names
// holding those ranks at t_k). Without `driving`, dX_k = Y(t_{k+1}) - Y(t_k).
// The running maximum (and 0) floors the result so it never decreases.
inline LocalTimePath estimate_local_time(std::span<const double> gap, std::span<const double> driving = {}) {
    if (gap.empty()) throw std::invalid_argument("empty gap path");
    if (!driving.empty() && driving.size() + 1 != gap.size())
        throw std::invalid_argument("driving increments must have one entry per step");
    for (double y : gap)
        if (!(y >= 0.0)) throw std::invalid_argument("gap process must be non-negative");
    LocalTimePath out;
    out.values.assign(gap.size(), 0.0);
    double raw = 0.0;
    for (std::size_t k = 0; k + 1 < gap.size(); ++k) {
        const double dy = gap[k + 1] - gap[k];
        const double dx = driving.empty() ? dy : driving[k];
        raw += dy - (gap[k] > 0.0 ? dx : 0.0);
        out.values[k + 1] = std::max(out.values[k], raw);
    }
    return out;
}

struct RankResidual {
    double lhs = 0.0;       // log mu_(k)(T)
    double rhs = 0.0;       // integrated right-hand side
    double residual = 0.0;  // lhs - rhs
    double scale = 0.0;     // sum of absolute sizes of the integrated terms
    double drift = 0.0;
    double noise = 0.0;
    double relative() const { return scale > 0.0 ? std::abs(residual) / scale : std::abs(residual); }
};

struct RankedDecompositionReport {
    std::vector<RankResidual> ranks;           // one per rank
    std::vector<LocalTimePath> local_times;    // pair (k, k+1), k = 0..n-2
    std::size_t crossings = 0;                 // steps on which the naming permutation changed
    std::size_t top_pair_violations = 0;       // Lambda^(1,2) increased with the same leader above 1/2 at both ends

    double max_relative() const {
        double r = 0.0;
        for (const auto& x : ranks) r = std::max(r, x.relative());
        return r;
    }
};

// Integrates
//   d log mu_(k) = (gamma_{p(k)} - gamma^mu) dt + (sigma_{p(k)} - sigma^mu) dW
//                  + (1/2)(dLambda^(k,k+1) - dLambda^(k-1,k))
// on the grid with the path's own increments and growth rates, names frozen
// at the left end of each step. gamma^mu = mu.gamma + gamma*_mu. The market
// volatility term carries its Milstein correction since mu depends on the state.
inline RankedDecompositionReport verify_ranked_decomposition(const PricePath& path, const MarketModel& model) {
    const std::size_t n = path.n, K = path.steps();
    if (n != model.stocks()) throw std::invalid_argument("path does not match model");
    const VolatilityMatrix& vol = model.volatility();
    const Eigen::MatrixXd& a = vol.covariance();

    RankedDecompositionReport rep;
    rep.ranks.resize(n);

    std::vector<std::size_t> order((K + 1) * n);
    for (std::size_t k = 0; k <= K; ++k) rank_order(path.mu(k), {order.data() + k * n, n});

    // Local times of adjacent-rank gaps.
    const std::size_t pairs = n - 1;
    rep.local_times.resize(pairs);
    {
        std::vector<double> gap(K + 1), drive(K);
        for (std::size_t q = 0; q < pairs; ++q) {
            // log(mu_(q)/mu_(q+1)) from log prices, so that without a crossing
            // the gap increment and the driving increment are the same number.
            for (std::size_t k = 0; k <= K; ++k) {
                const auto y = path.log_x(k);
                gap[k] = std::max(y[order[k * n + q]] - y[order[k * n + q + 1]], 0.0);
            }
            for (std::size_t k = 0; k < K; ++k) {
                const std::size_t ia = order[k * n + q], ib = order[k * n + q + 1];
                const auto y0 = path.log_x(k), y1 = path.log_x(k + 1);
                drive[k] = (y1[ia] - y1[ib]) - (y0[ia] - y0[ib]);
            }
            rep.local_times[q] = estimate_local_time(gap, drive);
        }
    }

    std::vector<double> shock(n), drift_sum(n, 0.0), noise_sum(n, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        const double dt = path.dt(k);
        const auto mu = path.mu(k);
        const auto g = path.gamma(k);
        vol.apply(path.dw(k), shock);
        double gmu = excess_growth(mu, a), smu = 0.0, quad = 0.0, trace = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            gmu += mu[i] * g[i];
            smu += mu[i] * shock[i];
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double c = (i == j ? mu[i] : 0.0) - mu[i] * mu[j];
                quad += shock[i] * c * shock[j];
                trace += c * a(j, i);
            }
        const double correction = 0.5 * (quad - trace * dt);
        bool changed = false;
        for (std::size_t r = 0; r < n; ++r) {
            const std::size_t name = order[k * n + r];
            if (name != order[(k + 1) * n + r]) changed = true;
            drift_sum[r] += (g[name] - gmu) * dt;
            noise_sum[r] += shock[name] - smu - correction;
        }
        if (changed) ++rep.crossings;
        if (pairs > 0 && order[k * n] == order[(k + 1) * n] && path.leader(k) > 0.5 && path.leader(k + 1) > 0.5 &&
            rep.local_times[0].values[k + 1] > rep.local_times[0].values[k])
            ++rep.top_pair_violations;
    }

    for (std::size_t r = 0; r < n; ++r) {
        RankResidual& x = rep.ranks[r];
        const double start = std::log(path.mu(0)[order[r]]);
        const double above = r + 1 < n ? rep.local_times[r].terminal() : 0.0;
        const double below = r > 0 ? rep.local_times[r - 1].terminal() : 0.0;
        x.lhs = std::log(path.mu(K)[order[K * n + r]]);
        x.drift = drift_sum[r];
        x.noise = noise_sum[r];
        x.rhs = start + x.drift + x.noise + 0.5 * (above - below);
        x.residual = x.lhs - x.rhs;
        x.scale = std::abs(x.drift) + std::abs(x.noise) + 0.5 * (above + below);
    }
    return rep;
}

struct RankedVarianceBounds {
    std::size_t checked = 0;
    std::size_t violations = 0;
    double worst_lower_slack = 0.0;  // min of tau_(kk) - eps (1 - mu_(1))^2
    double worst_upper_slack = 0.0;  // min of 2M - tau_(kk)
};

// eps (1 - mu_(1))^2 <= tau^mu_(kk) <= 2M at every grid point.
inline RankedVarianceBounds check_ranked_variance_bounds(const PricePath& path, const MarketModel& model) {
    const auto cert = model.certificate();
    const Eigen::MatrixXd& a = model.volatility().covariance();
    RankedVarianceBounds out;
    out.worst_lower_slack = std::numeric_limits<double>::infinity();
    out.worst_upper_slack = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k <= path.steps(); ++k) {
        const auto mu = path.mu(k);
        const Eigen::MatrixXd tau = relative_covariance_matrix(mu, a);
        const double top = path.leader(k);
        for (std::size_t i = 0; i < path.n; ++i) {
            const double t = tau(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
            const double lo = t - cert.epsilon * (1.0 - top) * (1.0 - top);
            const double hi = 2.0 * cert.bound - t;
            out.worst_lower_slack = std::min(out.worst_lower_slack, lo);
            out.worst_upper_slack = std::min(out.worst_upper_slack, hi);
            ++out.checked;
            if (lo < -1e-12 || hi < -1e-12) ++out.violations;
        }
    }
    return out;
}

} // namespace spt
