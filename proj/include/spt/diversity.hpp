#pragma once

#include "spt/error.hpp"
#include "spt/markets.hpp"
#include "spt/ranks.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace spt {

// D_p(x) = (sum x_i^p)^(1/p); 1 for a single-stock market, n^((1-p)/p) when uniform.
inline double diversity_measure(std::span<const double> x, double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("diversity exponent must lie in (0, 1)");
    double s = 0.0;
    for (double v : x) {
        if (!(v >= 0.0)) throw std::invalid_argument("weights must be non-negative");
        s += std::pow(v, p);
    }
    return std::pow(s, 1.0 / p);
}

struct DiversityReport {
    double max_leader = 0.0;  // max_t mu_(1)
    double avg_leader = 0.0;  // (1/T) int mu_(1) dt, trapezoid rule
    double delta_max = 0.0;   // 1 - max_leader
    double delta_avg = 0.0;   // 1 - avg_leader
    bool diverse = false;
    bool weakly_diverse = false;
    // Averages of mu_(1) over [T/2^j, T], j = 1, 2, ...; their max stands in for the limsup.
    std::vector<double> window_averages;
    double asymptotic_proxy = 0.0;
    bool asymptotically_weakly_diverse = false;
    // First grid times with mu_(1) <= 1/2 and mu_(1) >= 1 - delta (NaN if never).
    double first_below_half = std::numeric_limits<double>::quiet_NaN();
    double first_barrier_hit = std::numeric_limits<double>::quiet_NaN();
    double inverse_q_squared_integral = 0.0;  // int Q^-2 dt, infinite after a barrier hit
};

namespace detail {

inline double trapezoid_average(std::span<const double> t, std::span<const double> f, std::size_t from) {
    double s = 0.0;
    for (std::size_t k = from; k + 1 < t.size(); ++k) s += 0.5 * (f[k] + f[k + 1]) * (t[k + 1] - t[k]);
    const double span_t = t.back() - t[from];
    return span_t > 0.0 ? s / span_t : f.back();
}

} // namespace detail

// leader: mu_(1)(t_k) for every grid point.
inline DiversityReport check_diversity(const PathGrid& grid, std::span<const double> leader, double delta) {
    if (leader.size() != grid.steps() + 1) throw std::invalid_argument("leader path does not match grid");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
    DiversityReport r;
    const auto t = grid.times();
    r.max_leader = *std::max_element(leader.begin(), leader.end());
    r.avg_leader = detail::trapezoid_average(t, leader, 0);
    r.delta_max = 1.0 - r.max_leader;
    r.delta_avg = 1.0 - r.avg_leader;
    r.diverse = r.max_leader < 1.0 - delta;
    r.weakly_diverse = r.avg_leader < 1.0 - delta;

    const double T = grid.horizon();
    for (double start = 0.5 * T; start > 0.0; start *= 0.5) {
        const std::size_t from = grid.first_index_at_or_after(start);
        if (from + 1 >= leader.size()) break;
        r.window_averages.push_back(detail::trapezoid_average(t, leader, from));
        if (from <= 1) break;
    }
    r.asymptotic_proxy = r.window_averages.empty() ? r.avg_leader
                                                   : *std::max_element(r.window_averages.begin(), r.window_averages.end());
    r.asymptotically_weakly_diverse = r.asymptotic_proxy < 1.0 - delta;

    double integral = 0.0;
    for (std::size_t k = 0; k < leader.size(); ++k) {
        if (std::isnan(r.first_below_half) && leader[k] <= 0.5) r.first_below_half = t[k];
        if (std::isnan(r.first_barrier_hit) && leader[k] >= 1.0 - delta) r.first_barrier_hit = t[k];
        if (k + 1 < leader.size()) {
            auto inv_q2 = [&](double m) {
                const double q = std::log((1.0 - delta) / m);
                return q > 0.0 ? 1.0 / (q * q) : std::numeric_limits<double>::infinity();
            };
            integral += 0.5 * (inv_q2(leader[k]) + inv_q2(leader[k + 1])) * (t[k + 1] - t[k]);
        }
    }
    r.inverse_q_squared_integral = integral;
    return r;
}

inline std::vector<double> leader_path(const PricePath& path) {
    std::vector<double> out(path.steps() + 1);
    for (std::size_t k = 0; k <= path.steps(); ++k) out[k] = path.leader(k);
    return out;
}

inline DiversityReport check_diversity(const PricePath& path, double delta) {
    const auto lead = leader_path(path);
    return check_diversity(*path.grid, lead, delta);
}

// M / (delta Q), Q = log((1 - delta)/mu_(1)).
inline double leader_drift_requirement(double bound, double delta, double mu_top) {
    return bound / (delta * std::log((1.0 - delta) / mu_top));
}

struct HypothesisCheck {
    // One entry per step: empty when 1/2 <= mu_(1) < 1 - delta fails at t_k,
    // otherwise whether both sign and gap conditions held.
    std::vector<std::optional<bool>> per_step;
    std::size_t checked = 0;
    std::size_t satisfied = 0;
    double min_margin = std::numeric_limits<double>::infinity();  // min over checked steps of LHS - RHS

    bool all_satisfied() const { return checked == satisfied; }
};

// Sign conditions gamma_(k) >= 0 >= gamma_(1), k >= 2, and
// min_k gamma_(k) - gamma_(1) + eps/2 >= M/(delta Q), using the model's
// certificate and the growth rates recorded on the path.
inline HypothesisCheck diversity_hypothesis_check(const MarketModel& model, const PricePath& path, double delta) {
    const auto cert = model.certificate();
    const std::size_t n = path.n;
    HypothesisCheck out;
    out.per_step.resize(path.steps());
    std::vector<std::size_t> order(n);
    for (std::size_t k = 0; k < path.steps(); ++k) {
        const double top = path.leader(k);
        if (!(top >= 0.5 && top < 1.0 - delta)) continue;
        const auto g = path.gamma(k);
        rank_order(path.mu(k), order);
        const double g1 = g[order[0]];
        double gmin = std::numeric_limits<double>::infinity();
        bool signs = g1 <= 0.0;
        for (std::size_t r = 1; r < n; ++r) {
            gmin = std::min(gmin, g[order[r]]);
            signs = signs && g[order[r]] >= 0.0;
        }
        const double margin = gmin - g1 + 0.5 * cert.epsilon - leader_drift_requirement(cert.bound, delta, top);
        const bool ok = signs && margin >= -1e-9 * std::max(1.0, std::abs(g1));
        out.per_step[k] = ok;
        ++out.checked;
        if (ok) ++out.satisfied;
        out.min_margin = std::min(out.min_margin, margin);
    }
    return out;
}

// U(x) = int_1^x exp(-int_1^y F(z) dz) dy, evaluated after substituting y = e^s
// so both integrals run over log-space.
inline double scale_function(const std::function<double(double)>& F, double x, double tol = 1e-12) {
    if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument("x must be positive");
    if (x == 1.0) return 0.0;
    using boost::math::quadrature::gauss_kronrod;
    constexpr unsigned depth = 15;
    auto fail = [](const char* what) { throw numeric_failure(std::string("scale function: ") + what); };

    auto inner = [&](double s) {
        if (s == 0.0) return 0.0;
        double err = 0.0;
        const double v = gauss_kronrod<double, 31>::integrate(
            [&](double u) {
                const double e = std::exp(u);
                return F(e) * e;
            },
            0.0, s, depth, tol, &err);
        if (!std::isfinite(v) || err > 1e-8 * std::max(1.0, std::abs(v))) fail("inner quadrature did not converge");
        return v;
    };
    double err = 0.0;
    const double u = gauss_kronrod<double, 31>::integrate(
        [&](double s) { return std::exp(s - inner(s)); }, 0.0, std::log(x), depth, tol, &err);
    if (!std::isfinite(u) || err > 1e-8 * std::max(1.0, std::abs(u))) fail("outer quadrature did not converge");
    return u;
}

} // namespace spt
