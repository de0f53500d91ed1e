#pragma once

#include "spt/arbitrage.hpp"
#include "spt/diversity.hpp"
#include "spt/hedging.hpp"
#include "spt/lab/config.hpp"
#include "spt/lab/report.hpp"
#include "spt/markets.hpp"
#include "spt/parallel.hpp"
#include "spt/paths.hpp"
#include "spt/portfolios.hpp"
#include "spt/ranks.hpp"
#include "spt/stats.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

namespace spt::lab {

using Json = nlohmann::ordered_json;

// lognormal call price x0 Phi(d1) - K e^{-rT} Phi(d2)
inline double black_scholes_call(double x0, double strike, double rate, double vol, double T) {
    if (strike == 0.0) return x0;
    const double s = vol * std::sqrt(T);
    const double d1 = (std::log(x0 / strike) + (rate + 0.5 * vol * vol) * T) / s;
    return x0 * standard_normal_cdf(d1) - strike * std::exp(-rate * T) * standard_normal_cdf(d1 - s);
}

namespace detail {

inline std::int64_t as_int(std::size_t v) { return static_cast<std::int64_t>(v); }
inline std::int64_t flag(bool b) { return b ? 1 : 0; }

inline FactorPaths make_factors(const ExperimentConfig& cfg, std::size_t m) {
    return FactorPaths(std::make_shared<const PathGrid>(cfg.grid.build()), m, cfg.mc.paths, cfg.mc.seed);
}

inline Json estimate_json(const MeanEstimate& e) {
    return Json{{"mean", e.mean}, {"std_error", e.std_error}, {"count", e.count}};
}

// Levels j = 0..refinements-1 run on the configured grid coarsened by 2^j,
// all driven by the same Brownian paths.
inline std::vector<FactorPaths> refinement_levels(const FactorPaths& fine, std::size_t refinements) {
    std::vector<FactorPaths> out;
    for (std::size_t j = 0; j < refinements; ++j) out.push_back(j == 0 ? fine : fine.coarsened(std::size_t{1} << j));
    return out;
}

// p(T) from the model's certificate and the configured delta.
inline double mirror_exponent(const ExperimentConfig& cfg, const MarketModel& model, double& threshold) {
    const auto x0 = model.initial_prices();
    double total = 0.0;
    for (double x : x0) total += x;
    threshold = leader_mirror_threshold(model.certificate().epsilon, *cfg.params.delta, cfg.grid.horizon, x0[0] / total);
    return cfg.params.p.value_or(cfg.params.margin * threshold);
}

inline bool barrier_guaranteed(const MarketModel& model, double delta) {
    const auto g = model.guaranteed_delta();
    return g && *g >= delta;
}

} // namespace detail

inline ExperimentReport run_simulate(const ExperimentConfig& cfg) {
    using namespace detail;
    const MarketModel model = cfg.build_model();
    const FactorPaths f = make_factors(cfg, model.factors());
    const std::size_t n = model.stocks(), K = f.grid().steps();

    struct Row {
        double log_growth, leader_T, max_leader;
        std::size_t breaches;
    };
    auto rows = parallel_map(f.paths(), cfg.mc.threads, [&](std::size_t i) {
        const PricePath p = integrate_log_euler(model, f, i);
        double mx = 0.0;
        for (std::size_t k = 0; k <= K; ++k) mx = std::max(mx, p.leader(k));
        return Row{p.log_total(K) - p.log_total(0), p.leader(K), mx, p.state.breaches};
    });

    ExperimentReport r;
    Table t{"paths", {"path_id", "log_market_growth", "leader_T", "max_leader", "breaches"}, {}, true};
    std::vector<double> g, lead;
    std::size_t breached = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        t.add({as_int(i), rows[i].log_growth, rows[i].leader_T, rows[i].max_leader, as_int(rows[i].breaches)});
        g.push_back(rows[i].log_growth);
        lead.push_back(rows[i].leader_T);
        breached += rows[i].breaches > 0;
    }
    r.tables.push_back(std::move(t));
    r.summary["stocks"] = n;
    r.summary["log_market_growth"] = estimate_json(estimate_mean(g));
    r.summary["leader_T"] = estimate_json(estimate_mean(lead));
    r.summary["paths_with_breaches"] = breached;

    if (cfg.output.time_series) {
        const PricePath p = integrate_log_euler(model, f, 0);
        Table ts{"time_series", {"t"}, {}, false};
        for (std::size_t i = 0; i < n; ++i) ts.columns.push_back("log_x_" + std::to_string(i + 1));
        for (std::size_t i = 0; i < n; ++i) ts.columns.push_back("mu_" + std::to_string(i + 1));
        for (std::size_t k = 0; k <= K; ++k) {
            std::vector<Cell> row{p.time(k)};
            for (double v : p.log_x(k)) row.emplace_back(v);
            for (double v : p.mu(k)) row.emplace_back(v);
            ts.add(std::move(row));
        }
        r.tables.push_back(std::move(ts));
    }
    return r;
}

inline ExperimentReport run_diversity_report(const ExperimentConfig& cfg) {
    using namespace detail;
    const MarketModel model = cfg.build_model();
    const FactorPaths f = make_factors(cfg, model.factors());
    const double delta = *cfg.params.delta;
    const bool check_hypotheses = cfg.model->kind == "diverse";

    struct Row {
        DiversityReport div;
        std::size_t breaches;
        HypothesisCheck hyp;
    };
    auto rows = parallel_map(f.paths(), cfg.mc.threads, [&](std::size_t i) {
        const PricePath p = integrate_log_euler(model, f, i);
        Row row{check_diversity(p, delta), p.state.breaches, {}};
        if (check_hypotheses) {
            row.hyp = diversity_hypothesis_check(model, p, delta);
            row.hyp.per_step.clear();
        }
        return row;
    });

    ExperimentReport r;
    Table t{"paths",
            {"path_id", "delta_max", "delta_avg", "asymptotic_proxy", "diverse", "weakly_diverse", "breaches",
             "first_below_half"},
            {},
            true};
    std::size_t diverse = 0, weak = 0, breached = 0, checked = 0, satisfied = 0;
    double min_delta_max = 1.0, min_margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& d = rows[i].div;
        t.add({as_int(i), d.delta_max, d.delta_avg, d.asymptotic_proxy, flag(d.diverse), flag(d.weakly_diverse),
               as_int(rows[i].breaches), d.first_below_half});
        diverse += d.diverse;
        weak += d.weakly_diverse;
        breached += rows[i].breaches > 0;
        min_delta_max = std::min(min_delta_max, d.delta_max);
        checked += rows[i].hyp.checked;
        satisfied += rows[i].hyp.satisfied;
        min_margin = std::min(min_margin, rows[i].hyp.min_margin);
    }
    r.tables.push_back(std::move(t));
    const double N = static_cast<double>(rows.size());
    r.summary["delta"] = delta;
    r.summary["diverse_fraction"] = diverse / N;
    r.summary["weakly_diverse_fraction"] = weak / N;
    r.summary["breach_fraction"] = breached / N;
    r.summary["min_delta_max"] = min_delta_max;
    if (check_hypotheses) {
        r.summary["hypothesis_steps_checked"] = checked;
        r.summary["hypothesis_steps_satisfied"] = satisfied;
        r.summary["hypothesis_min_margin"] = min_margin;
    }

    if (cfg.output.time_series) {
        const PricePath p = integrate_log_euler(model, f, 0);
        Table ts{"time_series", {"t", "leader", "barrier"}, {}, false};
        for (std::size_t k = 0; k <= p.steps(); ++k) ts.add({p.time(k), p.leader(k), 1.0 - delta});
        r.tables.push_back(std::move(ts));
    }
    return r;
}

inline ExperimentReport run_arbitrage(const ExperimentConfig& cfg) {
    using namespace detail;
    const MarketModel model = cfg.build_model();
    const FactorPaths f = make_factors(cfg, model.factors());
    const double p = cfg.params.p.value_or(0.5);
    const auto res = verify_outperformance(model, p, f, cfg.mc.threads);
    const auto cert = model.certificate();
    const auto delta = model.guaranteed_delta();

    ExperimentReport r;
    Table t{"paths", {"path_id", "terminal_log_ratio", "a5_slack", "delta_avg", "delta_max"}, {}, true};
    for (const auto& rec : res.records)
        t.add({as_int(rec.path_id), rec.terminal_log_ratio, rec.slack, rec.delta_avg, rec.delta_max});
    r.tables.push_back(std::move(t));

    r.summary["p"] = p;
    r.summary["horizon"] = cfg.grid.horizon;
    if (delta) r.summary["threshold_horizon"] = outperformance_horizon(model.stocks(), p, cert.epsilon, *delta);
    r.summary["outperformance_fraction"] = res.fraction;
    r.summary["worst_path"] = res.worst_path;
    r.summary["worst_slack"] = res.worst_slack;
    r.summary["rms_discretization"] = res.rms_discretization;
    r.summary["slack_within_discretization"] = res.worst_slack >= -3.0 * res.rms_discretization;

    if (delta && cfg.grid.horizon >= outperformance_horizon(model.stocks(), p, cert.epsilon, *delta) && res.fraction < 1.0)
        r.failed_claims.push_back("diversity-weighted portfolio failed to beat the market on " +
                                  std::to_string(res.n_paths - static_cast<std::size_t>(std::llround(res.fraction * res.n_paths))) +
                                  " paths past the threshold horizon");
    if (!delta) r.notes.push_back("model has no guaranteed barrier; slack uses each path's realized delta_avg");
    return r;
}

inline ExperimentReport run_mirror(const ExperimentConfig& cfg, bool examples) {
    using namespace detail;
    const MarketModel model = cfg.build_model();
    const FactorPaths f = make_factors(cfg, model.factors());
    double threshold = 0.0;
    const double p = mirror_exponent(cfg, model, threshold);
    const double delta = *cfg.params.delta;
    const auto res = verify_mirror_underperformance(model, f, delta, p, cfg.mc.threads);
    const bool claims = p > threshold && barrier_guaranteed(model, delta) && !res.underperformance.inapplicable;
    const std::size_t N = res.underperformance.records.size();

    ExperimentReport r;
    r.summary["beta"] = res.beta;
    r.summary["eta"] = res.eta;
    r.summary["threshold_p"] = res.threshold;
    r.summary["p"] = res.p;
    r.summary["claims_apply"] = claims;
    if (!examples) {
        Table t{"paths",
                {"path_id", "terminal_log_ratio", "ceiling_slack", "identity_residual", "delta_avg", "delta_max"},
                {},
                true};
        for (std::size_t i = 0; i < N; ++i) {
            const auto& rec = res.underperformance.records[i];
            t.add({as_int(rec.path_id), rec.terminal_log_ratio, res.ceiling_slacks[i], rec.discretization,
                   rec.delta_avg, rec.delta_max});
        }
        r.tables.push_back(std::move(t));
        r.summary["underperformance_fraction"] = res.underperformance.fraction;
        r.summary["ceiling_violations"] = res.ceiling_violations;
        r.summary["worst_ceiling_slack"] = res.worst_ceiling_slack;
        r.summary["max_identity_residual"] = res.max_identity_residual;
        if (claims && res.underperformance.fraction < 1.0)
            r.failed_claims.push_back("mirror portfolio did not underperform the market on every path");
        if (claims && res.ceiling_violations > 0)
            r.failed_claims.push_back("wealth-ratio ceiling violated at " + std::to_string(res.ceiling_violations) +
                                      " grid points");
    } else {
        Table t{"paths", {"path_id", "rho_gap", "eta_gap"}, {}, true};
        for (std::size_t i = 0; i < N; ++i) t.add({as_int(i), res.rho_gaps[i], res.eta_gaps[i]});
        r.tables.push_back(std::move(t));
        r.summary["z"] = res.z;
        r.summary["zeta"] = res.zeta;
        r.summary["rho_fraction"] = static_cast<double>(res.rho_wins) / static_cast<double>(N);
        r.summary["eta_fraction"] = static_cast<double>(res.eta_wins) / static_cast<double>(N);
        r.summary["rho_min_weight"] = res.rho_min_weight;
        r.summary["eta_min_weight"] = res.eta_min_weight;
        r.summary["worst_rho_gap"] = res.worst_rho_gap;
        r.summary["worst_eta_gap"] = res.worst_eta_gap;
        r.summary["max_weight_sum_error"] = res.max_weight_sum_error;
        r.summary["eta_floor_min_slack"] = res.eta_floor_min_slack;
        if (claims && res.rho_wins < N) r.failed_claims.push_back("rho failed to underperform z times the market");
        if (claims && res.eta_wins < N) r.failed_claims.push_back("eta failed to outperform zeta times the market");
        if (res.rho_min_weight < -1e-12 || res.eta_min_weight < -1e-12)
            r.failed_claims.push_back("a buy-and-hold mix took a short position");
    }
    if (res.underperformance.inapplicable) r.notes.push_back(res.underperformance.note);
    if (!(p > threshold)) r.notes.push_back("p does not exceed p(T); the comparisons are not claimed");
    return r;
}

inline ExperimentReport run_master_formula(const ExperimentConfig& cfg) {
    using namespace detail;
    const MarketModel model = cfg.build_model();
    const double p = cfg.params.p.value_or(0.5);
    const auto levels = refinement_levels(make_factors(cfg, model.factors()), cfg.params.refinements);

    ExperimentReport r;
    Table ref{"refinement", {"level", "steps", "dt", "mean_abs_residual", "rms_residual", "max_abs_residual"}, {}, false};
    Json orders = Json::array();
    double prev_rms = 0.0;
    for (std::size_t j = 0; j < levels.size(); ++j) {
        auto res = parallel_map(levels[j].paths(), cfg.mc.threads, [&](std::size_t i) {
            return verify_master_formula(model, integrate_log_euler(model, levels[j], i), p);
        });
        std::vector<double> abs_res;
        double mx = 0.0;
        for (const auto& x : res) {
            abs_res.push_back(std::abs(x.residual));
            mx = std::max(mx, std::abs(x.residual));
        }
        const double rms = root_mean_square(abs_res);
        ref.add({as_int(j), as_int(levels[j].grid().steps()), levels[j].grid().nominal_dt(),
                 estimate_mean(abs_res).mean, rms, mx});
        if (j > 0) orders.push_back(std::log2(rms / prev_rms));
        prev_rms = rms;
        if (j == 0) {
            Table t{"paths", {"path_id", "lhs", "diversity_term", "drift_term", "residual"}, {}, true};
            for (std::size_t i = 0; i < res.size(); ++i)
                t.add({as_int(i), res[i].lhs, res[i].diversity_term, res[i].drift_term, res[i].residual});
            r.tables.push_back(std::move(t));
            r.summary["rms_residual"] = rms;
            r.summary["max_abs_residual"] = mx;
        }
    }
    r.tables.push_back(std::move(ref));
    r.summary["p"] = p;
    r.summary["observed_orders"] = orders;
    return r;
}

inline ExperimentReport run_ranked(const ExperimentConfig& cfg) {
    using namespace detail;
    const MarketModel model = cfg.build_model();
    const auto levels = refinement_levels(make_factors(cfg, model.factors()), cfg.params.refinements);

    ExperimentReport r;
    Table ref{"refinement",
              {"level", "steps", "dt", "mean_max_relative", "worst_max_relative", "mean_crossings",
               "top_pair_violations"},
              {},
              false};
    for (std::size_t j = 0; j < levels.size(); ++j) {
        struct Row {
            double rel;
            std::size_t crossings, violations;
            double lambda12;
        };
        auto rows = parallel_map(levels[j].paths(), cfg.mc.threads, [&](std::size_t i) {
            const auto rep = verify_ranked_decomposition(integrate_log_euler(model, levels[j], i), model);
            return Row{rep.max_relative(), rep.crossings, rep.top_pair_violations, rep.local_times[0].terminal()};
        });
        std::vector<double> rel, cross;
        std::size_t viol = 0;
        for (const auto& x : rows) {
            rel.push_back(x.rel);
            cross.push_back(static_cast<double>(x.crossings));
            viol += x.violations;
        }
        ref.add({as_int(j), as_int(levels[j].grid().steps()), levels[j].grid().nominal_dt(), estimate_mean(rel).mean,
                 *std::max_element(rel.begin(), rel.end()), estimate_mean(cross).mean, as_int(viol)});
        if (j == 0) {
            Table t{"paths", {"path_id", "max_relative_residual", "crossings", "local_time_12"}, {}, true};
            for (std::size_t i = 0; i < rows.size(); ++i)
                t.add({as_int(i), rows[i].rel, as_int(rows[i].crossings), rows[i].lambda12});
            r.tables.push_back(std::move(t));
            r.summary["mean_max_relative"] = estimate_mean(rel).mean;
            r.summary["top_pair_violations"] = viol;
        }
    }
    r.tables.push_back(std::move(ref));
    return r;
}

// Local time at 0 of |W| over [0, T]; its mean is E|W_T| = sqrt(2T/pi).
inline std::vector<double> brownian_local_times(const FactorPaths& f, std::size_t threads) {
    return parallel_map(f.paths(), threads, [&](std::size_t i) {
        const std::vector<double> dw = f.increments(i);
        const std::size_t K = dw.size();
        std::vector<double> gap(K + 1), drive(K);
        double w = 0.0;
        gap[0] = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            drive[k] = (w >= 0.0 ? 1.0 : -1.0) * dw[k];
            w += dw[k];
            gap[k + 1] = std::abs(w);
        }
        return estimate_local_time(gap, drive).terminal();
    });
}

inline ExperimentReport run_local_time(const ExperimentConfig& cfg) {
    using namespace detail;
    const auto levels = refinement_levels(make_factors(cfg, 1), cfg.params.refinements);
    const double oracle = std::sqrt(2.0 * cfg.grid.horizon / std::numbers::pi);

    ExperimentReport r;
    Table ref{"refinement", {"level", "steps", "dt", "mean", "std_error", "oracle", "relative_error"}, {}, false};
    for (std::size_t j = 0; j < levels.size(); ++j) {
        const auto lt = brownian_local_times(levels[j], cfg.mc.threads);
        const auto est = estimate_mean(lt);
        ref.add({as_int(j), as_int(levels[j].grid().steps()), levels[j].grid().nominal_dt(), est.mean, est.std_error,
                 oracle, est.mean / oracle - 1.0});
        if (j == 0) {
            Table t{"paths", {"path_id", "local_time"}, {}, true};
            for (std::size_t i = 0; i < lt.size(); ++i) t.add({as_int(i), lt[i]});
            r.tables.push_back(std::move(t));
            r.summary["local_time"] = estimate_json(est);
            r.summary["oracle"] = oracle;
            r.summary["relative_error"] = est.mean / oracle - 1.0;
        }
    }
    r.tables.push_back(std::move(ref));
    return r;
}

inline ExperimentReport run_hedge_price(const ExperimentConfig& cfg) {
    using namespace detail;
    const MarketModel model = cfg.build_model();
    const FactorPaths f = make_factors(cfg, model.factors());
    const Params& prm = cfg.params;
    const ClaimSpec claim = prm.claim == "call"       ? call_claim(prm.stock, prm.strike)
                            : prm.claim == "exchange" ? exchange_claim(prm.stock, prm.other)
                                                      : zero_claim();
    auto cols = deflated_samples(model, f, cfg.mc.threads, 1, [&](const PricePath& p, const DeflatorPath& d) {
        const std::size_t K = p.steps();
        const double y = claim.payoff(p, K);
        return std::vector<double>{y == 0.0 ? 0.0 : y * d.discount(K)};
    });
    const auto est = estimate_mean(cols[0]);

    ExperimentReport r;
    Table t{"paths", {"path_id", "deflated_payoff"}, {}, true};
    for (std::size_t i = 0; i < cols[0].size(); ++i) t.add({as_int(i), cols[0][i]});
    r.tables.push_back(std::move(t));
    r.summary["claim"] = claim.descriptor;
    r.summary["h"] = est.mean;
    r.summary["std_error"] = est.std_error;
    if (cfg.model->kind == "gbm" && prm.claim == "call") {
        const double vol = std::sqrt(model.volatility().variances()[prm.stock]);
        const double bs = black_scholes_call(model.initial_prices()[prm.stock], prm.strike, model.rate(), vol,
                                             cfg.grid.horizon);
        r.summary["closed_form"] = bs;
        r.summary["z_score"] = est.std_error > 0.0 ? (est.mean - bs) / est.std_error : 0.0;
    }
    return r;
}

inline ExperimentReport run_call_decay(const ExperimentConfig& cfg) {
    using namespace detail;
    const MarketModel model = cfg.build_model();
    const FactorPaths f = make_factors(cfg, model.factors());
    const double p = cfg.params.p.value_or(0.5);
    const auto s = call_decay_study(model, cfg.params.strike, cfg.params.horizons, f, *cfg.params.delta, p,
                                    cfg.mc.threads);

    ExperimentReport r;
    Table t{"call_decay", {"T", "h_hat", "stderr", "envelope"}, {}, false};
    Table d{"deflator", {"T", "deflated_stock", "deflated_stock_stderr", "deflator_mean", "deflator_stderr"}, {}, false};
    for (const auto& row : s.rows) {
        t.add({row.T, row.h_hat, row.std_error, row.envelope});
        d.add({row.T, row.deflated_stock, row.deflated_stock_se, row.deflator, row.deflator_se});
    }
    r.tables.push_back(std::move(t));
    r.tables.push_back(std::move(d));
    const auto& last = s.rows.back();
    r.summary["x1_0"] = s.x1_0;
    r.summary["strike"] = cfg.params.strike;
    r.summary["below_spot"] = s.below_spot;
    r.summary["nonincreasing_within_noise"] = s.nonincreasing;
    r.summary["under_envelope"] = s.under_envelope;
    r.summary["deflator_deficit"] = 1.0 - last.deflator;
    r.summary["deflator_deficit_z"] = last.deflator_se > 0.0 ? (1.0 - last.deflator) / last.deflator_se : 0.0;
    r.notes.push_back("deflator means carry discretization bias; the deficit is statistical evidence only");
    if (barrier_guaranteed(model, *cfg.params.delta) && !s.below_spot)
        r.failed_claims.push_back("estimated call price reached the spot price");
    return r;
}

inline ExperimentReport run_parity_gap(const ExperimentConfig& cfg) {
    using namespace detail;
    const MarketModel model = cfg.build_model();
    const FactorPaths f = make_factors(cfg, model.factors());
    ExperimentReport r;
    ParityGap g;
    if (cfg.params.witness == "pihat") {
        double threshold = 0.0;
        const double p = mirror_exponent(cfg, model, threshold);
        g = put_call_parity_gap(model, portfolio_asset(std::make_shared<MarketRule>(), model, 1.0),
                                portfolio_asset(leader_mirror_rule(model.stocks(), p), model, 1.0), f, cfg.mc.threads);
        r.summary["p"] = p;
        r.summary["threshold_p"] = threshold;
        const bool claims = p > threshold && barrier_guaranteed(model, *cfg.params.delta);
        r.summary["claims_apply"] = claims;
        if (claims && !(g.gap > 0.0)) r.failed_claims.push_back("market and mirror portfolio are in parity");
    } else {
        g = put_call_parity_gap(model, stock_asset(cfg.params.first), stock_asset(cfg.params.second), f,
                                cfg.mc.threads);
    }
    r.summary["witness"] = cfg.params.witness;
    r.summary["gap"] = g.gap;
    r.summary["std_error"] = g.std_error;
    r.summary["initial_gap"] = g.initial_gap;
    r.summary["z_score"] = g.std_error > 0.0 ? (g.gap - g.initial_gap) / g.std_error : 0.0;
    r.summary["h1"] = g.h1;
    r.summary["h1_std_error"] = g.h1_se;
    r.summary["h2"] = g.h2;
    r.summary["h2_std_error"] = g.h2_se;
    return r;
}

inline ExperimentReport run_dominance(const ExperimentConfig& cfg) {
    using namespace detail;
    const MarketModel model = cfg.build_model();
    const FactorPaths fine = make_factors(cfg, model.factors());
    const auto levels = refinement_levels(fine, cfg.params.refinements);

    ExperimentReport r;
    Table ref{"refinement", {"level", "steps", "first_time", "lead_fraction", "dominance_fraction", "both_fraction"}, {}, false};
    double finest = 0.0;
    for (std::size_t j = 0; j < levels.size(); ++j) {
        const auto rep = verify_instantaneous_dominance(model, levels[j], cfg.mc.threads);
        ref.add({as_int(j), as_int(levels[j].grid().steps()), levels[j].grid().time(1), rep.lead_fraction,
                 rep.dominance_fraction, rep.both_fraction});
        if (j == 0) {
            finest = rep.both_fraction;
            Table t{"paths", {"path_id", "switch_time", "leads", "dominates", "min_log_gap", "barrier_breaches"}, {}, true};
            for (const auto& d : rep.paths)
                t.add({as_int(d.path_id), d.switch_time, flag(d.leads), flag(d.dominates), d.min_log_gap,
                       as_int(d.barrier_breaches)});
            r.tables.push_back(std::move(t));
            r.summary["lead_fraction"] = rep.lead_fraction;
            r.summary["dominance_fraction"] = rep.dominance_fraction;
            r.summary["both_fraction"] = rep.both_fraction;
        }
    }
    r.tables.push_back(std::move(ref));
    if (finest < 1.0)
        r.failed_claims.push_back("stock 2 lead or portfolio dominance failed at some grid time on the finest grid");

    if (cfg.output.time_series) {
        const PricePath p = integrate_log_euler(model, fine, 0);
        Table ts{"time_series", {"t", "log_x_1", "log_x_2", "y"}, {}, false};
        for (std::size_t k = 0; k <= p.steps(); ++k)
            ts.add({p.time(k), p.log_x(k)[0], p.log_x(k)[1], p.log_x(k)[1] - p.log_x(k)[0]});
        r.tables.push_back(std::move(ts));
    }
    return r;
}

// Dispatches to the owning module. Library errors propagate; integration
// failures keep their path and step.
inline ExperimentReport run(const ExperimentConfig& cfg) {
    ExperimentReport r;
    const std::string started = utc_timestamp();
    const std::string& e = cfg.experiment;
    if (e == "simulate") r = run_simulate(cfg);
    else if (e == "diversity-report") r = run_diversity_report(cfg);
    else if (e == "arbitrage-45") r = run_arbitrage(cfg);
    else if (e == "mirror-81") r = run_mirror(cfg, false);
    else if (e == "examples-82-83") r = run_mirror(cfg, true);
    else if (e == "master-formula") r = run_master_formula(cfg);
    else if (e == "ranked-decomposition") r = run_ranked(cfg);
    else if (e == "local-time-oracle") r = run_local_time(cfg);
    else if (e == "hedge-price") r = run_hedge_price(cfg);
    else if (e == "call-decay") r = run_call_decay(cfg);
    else if (e == "parity-gap") r = run_parity_gap(cfg);
    else if (e == "instantaneous-dominance") r = run_dominance(cfg);
    else throw std::invalid_argument("unknown experiment " + e);
    r.experiment = e;
    r.config = cfg.echo;
    r.provenance.seed = cfg.mc.seed;
    r.provenance.started = started;
    r.provenance.finished = utc_timestamp();
    return r;
}

} // namespace spt::lab
