#pragma once

#include "spt/diversity.hpp"
#include "spt/markets.hpp"
#include "spt/parallel.hpp"
#include "spt/portfolios.hpp"
#include "spt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace spt {

// ---- master formula ----

struct MasterFormulaResidual {
    double lhs = 0.0;             // simulated log(Z^pi / Z^mu)(T)
    double diversity_term = 0.0;  // log(D(mu(T)) / D(mu(0)))
    double drift_term = 0.0;      // (1 - p) int gamma*_pi dt, trapezoid rule
    double rhs = 0.0;
    double residual = 0.0;        // lhs - rhs
    double diversity_floor = 0.0; // -((1 - p)/p) log n
};

// log(Z^pi/Z^mu)(T) = log(D(mu(T))/D(mu(0))) + (1 - p) int_0^T gamma*_pi dt
// for the diversity-weighted portfolio of exponent p, both started at 1.
inline MasterFormulaResidual verify_master_formula(const MarketModel& model, const PricePath& path, double p) {
    const DiversityWeightedRule rule(p);
    const ValuePath v = portfolio_value(rule, model, path, 1.0);
    const std::size_t K = path.steps(), n = path.n;
    const Eigen::MatrixXd& a = model.volatility().covariance();

    MasterFormulaResidual r;
    r.lhs = v.log_terminal() - (path.log_total(K) - path.log_total(0));
    r.diversity_term = std::log(diversity_measure(path.mu(K), p) / diversity_measure(path.mu(0), p));
    std::vector<double> pi(n);
    double prev = 0.0, integral = 0.0;
    for (std::size_t k = 0; k <= K; ++k) {
        diversity_weighted(path.mu(k), p, pi);
        const double g = excess_growth(pi, a);
        if (k > 0) integral += 0.5 * (prev + g) * path.dt(k - 1);
        prev = g;
    }
    r.drift_term = (1.0 - p) * integral;
    r.rhs = r.diversity_term + r.drift_term;
    r.residual = r.lhs - r.rhs;
    r.diversity_floor = -((1.0 - p) / p) * std::log(static_cast<double>(n));
    return r;
}

// ---- diversity-weighted outperformance ----

struct PathRecord {
    std::size_t path_id = 0;
    double terminal_log_ratio = 0.0;  // log(Z^pi / Z^rho)(T)
    double slack = 0.0;               // LHS - RHS of the inequality under test
    double delta_avg = 0.0;
    double delta_max = 0.0;
    double discretization = 0.0;      // measured identity residual on this path
    std::size_t breaches = 0;
};

struct ArbitrageExperimentResult {
    std::size_t n_paths = 0;
    std::vector<PathRecord> records;
    double fraction = 0.0;          // fraction of paths on which the claimed comparison held
    std::size_t worst_path = 0;     // path with the smallest slack
    double worst_slack = std::numeric_limits<double>::infinity();
    double rms_discretization = 0.0;
    bool inapplicable = false;      // preconditions failed on some path
    std::string note;

    void finalize(std::size_t successes) {
        n_paths = records.size();
        fraction = n_paths ? static_cast<double>(successes) / static_cast<double>(n_paths) : 0.0;
        std::vector<double> disc;
        disc.reserve(n_paths);
        for (const auto& r : records) {
            if (r.slack < worst_slack) {
                worst_slack = r.slack;
                worst_path = r.path_id;
            }
            disc.push_back(r.discretization);
        }
        rms_discretization = root_mean_square(disc);
    }
};

// T* = 2 log n / (p eps delta)
inline double outperformance_horizon(std::size_t n, double p, double epsilon, double delta) {
    return 2.0 * std::log(static_cast<double>(n)) / (p * epsilon * delta);
}

// (1 - p)[eps delta T / 2 - log(n) / p]
inline double outperformance_floor(std::size_t n, double p, double epsilon, double delta, double T) {
    return (1.0 - p) * (epsilon * delta * T / 2.0 - std::log(static_cast<double>(n)) / p);
}

// Strict outperformance Z^pi(T) > Z^mu(T) of the diversity-weighted portfolio
// and the pathwise lower bound on log(Z^pi/Z^mu)(T). delta is the model's
// guaranteed barrier when it has one, else the path's realized delta_avg.
inline ArbitrageExperimentResult verify_outperformance(const MarketModel& model, double p, const FactorPaths& factors,
                                                 std::size_t threads = 1) {
    const auto cert = model.certificate();
    const auto guaranteed = model.guaranteed_delta();
    const double T = factors.grid().horizon();
    const std::size_t n = model.stocks();
    auto recs = parallel_map(factors.paths(), threads, [&](std::size_t i) {
        const PricePath path = integrate_log_euler(model, factors, i);
        const auto div = check_diversity(path, guaranteed.value_or(0.5));
        const auto mf = verify_master_formula(model, path, p);
        PathRecord r;
        r.path_id = i;
        r.terminal_log_ratio = mf.lhs;
        r.delta_avg = div.delta_avg;
        r.delta_max = div.delta_max;
        r.slack = mf.lhs - outperformance_floor(n, p, cert.epsilon, guaranteed.value_or(div.delta_avg), T);
        r.discretization = std::abs(mf.residual);
        r.breaches = path.state.breaches;
        return r;
    });
    ArbitrageExperimentResult out;
    out.records = std::move(recs);
    std::size_t wins = 0;
    for (const auto& r : out.records)
        if (r.terminal_log_ratio > 0.0) ++wins;
    out.finalize(wins);
    return out;
}

// ---- mirror of e_1 against the market ----

struct MirrorResult {
    double beta = 0.0;          // mu_1(0)
    double eta = 0.0;           // eps delta^2 T
    double threshold = 0.0;     // p(T) = 1 + (2/eta) log(1/beta)
    double p = 0.0;             // exponent used
    ArbitrageExperimentResult underperformance;  // Z^pihat(T) < Z^mu(T)
    std::size_t ceiling_violations = 0;           // grid points where the ceiling failed beyond tolerance
    double worst_ceiling_slack = std::numeric_limits<double>::infinity();
    double max_identity_residual = 0.0;

    // Buy-and-hold mixes of pi-hat and the market.
    double z = 0.0;             // 1 + (p - 1)/mu_1(0)^p
    double zeta = 0.0;          // p/mu_1(0)^p - 1
    double rho_min_weight = std::numeric_limits<double>::infinity();
    double eta_min_weight = std::numeric_limits<double>::infinity();
    double max_weight_sum_error = 0.0;
    double eta_floor_min_slack = std::numeric_limits<double>::infinity();
    std::size_t rho_wins = 0;   // Z^rho(T) < z Z^mu(T)
    std::size_t eta_wins = 0;   // Z^eta(T) > zeta Z^mu(T)
    double worst_rho_gap = -std::numeric_limits<double>::infinity();  // max of Z^rho(T) - z Z^mu(T)
    double worst_eta_gap = std::numeric_limits<double>::infinity();   // min of Z^eta(T) - zeta Z^mu(T)
    std::vector<double> rho_gaps;  // per path, Z^rho(T) - z Z^mu(T)
    std::vector<double> eta_gaps;  // per path, Z^eta(T) - zeta Z^mu(T)
    std::vector<double> ceiling_slacks;  // per path, min over the grid
};

struct MirrorPath {
    PathRecord record;
    double tau_integral = 0.0;
    double identity_residual = 0.0;
    double ceiling_slack = 0.0;
    std::size_t ceiling_violations = 0;
    double rho_min = 0.0, eta_min = 0.0, sum_err = 0.0, floor_slack = 0.0;
    double rho_gap = 0.0, eta_gap = 0.0;
};

// pi = e_1 mirrored around the market with exponent p, beta = mu_1(0),
// eta = eps delta^2 T; underperformance needs p > p(T) = 1 + (2/eta) log(1/beta).
// The ceiling Z^pihat(t) <= (mu_1(t)/mu_1(0))^p Z^mu(t) is checked at every
// grid point with tolerance 3x the path's measured deviation from the
// closed-form log-ratio.
inline MirrorResult verify_mirror_underperformance(const MarketModel& model, const FactorPaths& factors, double delta, double p,
                                     std::size_t threads = 1) {
    const auto cert = model.certificate();
    const double T = factors.grid().horizon();
    const std::size_t n = model.stocks();
    const auto x0 = model.initial_prices();
    double total0 = 0.0;
    for (double x : x0) total0 += x;

    MirrorResult res;
    res.beta = x0[0] / total0;
    res.eta = cert.epsilon * delta * delta * T;
    res.threshold = 1.0 + (2.0 / res.eta) * std::log(1.0 / res.beta);
    res.p = p;
    const auto rule = leader_mirror_rule(n, p);
    const MarketRule market;
    const Eigen::MatrixXd& a = model.volatility().covariance();
    const double s = std::pow(res.beta, p);
    res.z = 1.0 + (p - 1.0) / s;
    res.zeta = p / s - 1.0;

    auto paths = parallel_map(factors.paths(), threads, [&](std::size_t i) {
        const PricePath path = integrate_log_euler(model, factors, i);
        const ValuePath hat = portfolio_value(*rule, model, path, 1.0);
        const ValuePath mkt = portfolio_value(market, model, path, 1.0);
        const std::size_t K = path.steps();
        MirrorPath out;
        out.record.path_id = i;
        out.record.breaches = path.state.breaches;
        const auto div = check_diversity(path, delta);
        out.record.delta_avg = div.delta_avg;
        out.record.delta_max = div.delta_max;

        // Closed form p [log(mu_1(t)/mu_1(0)) - (p-1)/2 int tau_11]
        std::vector<double> closed(K + 1), lratio(K + 1);
        double tau_int = 0.0, prev_tau = 0.0;
        const double l0 = std::log(path.mu(0)[0]);
        for (std::size_t k = 0; k <= K; ++k) {
            const auto mu = path.mu(k);
            WeightVector e1(n, 0.0);
            e1[0] = 1.0;
            const double tau = relative_covariance(e1, mu, a).tau_pp;
            if (k > 0) tau_int += 0.5 * (prev_tau + tau) * path.dt(k - 1);
            prev_tau = tau;
            const double lmu = std::log(mu[0]) - l0;
            closed[k] = p * (lmu - 0.5 * (p - 1.0) * tau_int);
            lratio[k] = hat.log_value[k] - mkt.log_value[k];
            out.identity_residual = std::max(out.identity_residual, std::abs(lratio[k] - closed[k]));
        }
        out.tau_integral = tau_int;
        const double tol = 3.0 * out.identity_residual;
        out.ceiling_slack = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k <= K; ++k) {
            const double ceiling = p * (std::log(path.mu(k)[0]) - l0);
            const double slack = ceiling - lratio[k];
            out.ceiling_slack = std::min(out.ceiling_slack, slack);
            if (slack < -tol) ++out.ceiling_violations;
        }
        out.record.terminal_log_ratio = lratio[K];
        out.record.slack = -lratio[K];
        out.record.discretization = std::abs(lratio[K] - closed[K]);

        const MixPath rho = rho_mix(hat, mkt, path, p, res.beta);
        const MixPath eta = eta_mix(hat, mkt, path, p, res.beta);
        out.rho_min = rho.min_weight;
        out.eta_min = eta.min_weight;
        out.sum_err = std::max(rho.max_weight_sum_error, eta.max_weight_sum_error);
        out.rho_gap = rho.market_gap[K];
        out.eta_gap = eta.market_gap[K];
        // Z^eta mu_1(0)^p >= Z^mu (p - mu_1^p) in units of mu_1(0)^p dollars.
        out.floor_slack = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k <= K; ++k) {
            const double zm = mkt.value(k);
            const double lhs = eta.value[k] * s;
            const double rhs = zm * (p - std::pow(path.mu(k)[0], p));
            out.floor_slack = std::min(out.floor_slack, (lhs - rhs) / zm);
        }
        return out;
    });

    std::size_t wins = 0;
    bool applicable = true;
    for (const auto& q : paths) {
        res.underperformance.records.push_back(q.record);
        if (q.record.terminal_log_ratio < 0.0) ++wins;
        if (!(q.tau_integral > res.eta)) applicable = false;
        res.ceiling_violations += q.ceiling_violations;
        res.worst_ceiling_slack = std::min(res.worst_ceiling_slack, q.ceiling_slack);
        res.max_identity_residual = std::max(res.max_identity_residual, q.identity_residual);
        res.rho_min_weight = std::min(res.rho_min_weight, q.rho_min);
        res.eta_min_weight = std::min(res.eta_min_weight, q.eta_min);
        res.max_weight_sum_error = std::max(res.max_weight_sum_error, q.sum_err);
        res.eta_floor_min_slack = std::min(res.eta_floor_min_slack, q.floor_slack);
        if (q.rho_gap < 0.0) ++res.rho_wins;
        if (q.eta_gap > 0.0) ++res.eta_wins;
        res.worst_rho_gap = std::max(res.worst_rho_gap, q.rho_gap);
        res.worst_eta_gap = std::min(res.worst_eta_gap, q.eta_gap);
        res.rho_gaps.push_back(q.rho_gap);
        res.eta_gaps.push_back(q.eta_gap);
        res.ceiling_slacks.push_back(q.ceiling_slack);
    }
    res.underperformance.finalize(wins);
    if (!applicable) {
        res.underperformance.inapplicable = true;
        res.underperformance.note = "int tau_11 dt <= eps delta^2 T on some path";
    }
    return res;
}

// ---- instantaneous dominance ----

struct DominancePath {
    std::size_t path_id = 0;
    std::size_t switch_index = 0;     // grid index of T_2 (steps() + 1 if never)
    double switch_time = std::numeric_limits<double>::quiet_NaN();
    bool leads = true;                // X_2 > X_1 at every grid point in (0, T_2]
    bool dominates = true;            // Z^pi > Z^mu at every grid point t > 0
    double min_log_gap = std::numeric_limits<double>::infinity();  // min over t > 0 of log(Z^pi/Z^mu)
    double max_identity_error = 0.0;  // |(Z^pi - Z^mu) - (X_2 - X_1)| on [0, T_2]
    std::size_t barrier_breaches = 0;
};

struct DominanceReport {
    std::vector<DominancePath> paths;
    double lead_fraction = 0.0;
    double dominance_fraction = 0.0;
    double both_fraction = 0.0;
};

// pi = e_2 until T_2 = first grid time with Y <= Gamma/2, the market afterwards.
// Gamma is the integrated growth of stock 2 recorded on the path.
inline DominancePath dominance_on_path(const PricePath& path) {
    const std::size_t K = path.steps();
    DominancePath d;
    d.path_id = path.index;
    d.barrier_breaches = path.state.breaches;
    double gamma_int = 0.0;
    d.switch_index = K + 1;
    for (std::size_t k = 1; k <= K; ++k) {
        gamma_int += path.gamma(k - 1)[1] * path.dt(k - 1);
        const double y = path.log_x(k)[1] - path.log_x(k)[0];
        if (y <= 0.5 * gamma_int) {
            d.switch_index = k;
            d.switch_time = path.time(k);
            break;
        }
    }
    const std::size_t k2 = std::min(d.switch_index, K);
    // Z^pi = 2 X_2 up to T_2; afterwards it moves with the market.
    const double log2 = std::log(2.0);
    double lz_switch = 0.0, lm_switch = 0.0;
    for (std::size_t k = 1; k <= K; ++k) {
        const double lm = path.log_total(k);
        double lz;
        if (k <= k2) {
            lz = log2 + path.log_x(k)[1];
            if (!(path.log_x(k)[1] > path.log_x(k)[0])) d.leads = false;
            const double x1 = path.price(k, 0), x2 = path.price(k, 1);
            d.max_identity_error =
                std::max(d.max_identity_error, std::abs((2.0 * x2 - (x1 + x2)) - (x2 - x1)));
            if (k == k2) {
                lz_switch = lz;
                lm_switch = lm;
            }
        } else {
            lz = lz_switch + (lm - lm_switch);
        }
        const double gap = lz - lm;
        d.min_log_gap = std::min(d.min_log_gap, gap);
        if (!(gap > 0.0)) d.dominates = false;
    }
    return d;
}

inline DominanceReport verify_instantaneous_dominance(const MarketModel& model, const FactorPaths& factors,
                                                      std::size_t threads = 1) {
    DominanceReport rep;
    rep.paths = parallel_map(factors.paths(), threads, [&](std::size_t i) {
        return dominance_on_path(integrate_log_euler(model, factors, i));
    });
    std::size_t lead = 0, dom = 0, both = 0;
    for (const auto& d : rep.paths) {
        lead += d.leads;
        dom += d.dominates;
        both += d.leads && d.dominates;
    }
    const double N = static_cast<double>(rep.paths.size());
    rep.lead_fraction = lead / N;
    rep.dominance_fraction = dom / N;
    rep.both_fraction = both / N;
    return rep;
}

} // namespace spt
