// Acceptance checks. `acceptance N` runs criterion N and prints one line;
// with no argument all twelve run in order. Exit status is 0 only if every
// criterion run passed.
#include "spt/arbitrage.hpp"
#include "spt/diversity.hpp"
#include "spt/hedging.hpp"
#include "spt/lab/experiments.hpp"
#include "spt/ranks.hpp"
#include "spt/stats.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::size_t workers() { return spt::resolve_threads(0); }

std::string fmt(double x) {
    std::ostringstream s;
    s.precision(6);
    s << x;
    return s.str();
}

// ---- 1: algebraic identities on random instances ----

std::vector<double> random_simplex(std::mt19937_64& eng, std::size_t n) {
    std::exponential_distribution<double> e(1.0);
    std::vector<double> w(n);
    double s = 0.0;
    for (double& v : w) s += (v = e(eng) + 1e-3);
    for (double& v : w) v /= s;
    return w;
}

Eigen::MatrixXd random_covariance(std::mt19937_64& eng, std::size_t n) {
    std::normal_distribution<double> z;
    Eigen::MatrixXd s(n, n + 1);
    for (Eigen::Index i = 0; i < s.rows(); ++i)
        for (Eigen::Index j = 0; j < s.cols(); ++j) s(i, j) = z(eng) * 0.4;
    return s * s.transpose() + 0.01 * Eigen::MatrixXd::Identity(n, n);
}

Verdict algebraic_identities() {
    std::mt19937_64 eng(20240101);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    double ni = 0.0, composition = 0.0, b4 = 0.0;
    std::size_t inequality_failures = 0;
    const std::size_t N = 10000;
    for (std::size_t rep = 0; rep < N; ++rep) {
        const std::size_t n = 2 + rep % 5;
        const auto pi = random_simplex(eng, n), rho = random_simplex(eng, n);
        const auto a = random_covariance(eng, n);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
        const double eps = es.eigenvalues().minCoeff(), M = es.eigenvalues().maxCoeff();
        double p = u(eng), q = u(eng);
        if (std::abs(p) < 0.05) p = 0.5;
        if (std::abs(q) < 0.05) q = -0.5;

        ni = std::max(ni, spt::numeraire_invariance_residual(pi, rho, a));

        const auto mirrored = spt::mirror_portfolio(pi, rho, p);
        const auto back = spt::mirror_portfolio(mirrored, rho, 1.0 / p);
        const auto pq = spt::mirror_portfolio(mirrored, rho, q);
        const auto direct = spt::mirror_portfolio(pi, rho, p * q);
        for (std::size_t i = 0; i < n; ++i)
            composition = std::max({composition, std::abs(back[i] - pi[i]), std::abs(pq[i] - direct[i])});

        const auto rc = spt::relative_covariance(pi, rho, a);
        Eigen::Map<const Eigen::VectorXd> r(rho.data(), Eigen::Index(n)), w(pi.data(), Eigen::Index(n));
        b4 = std::max(b4, (rc.tau * r).cwiseAbs().maxCoeff());
        b4 = std::max(b4, std::abs(rc.tau_pp - w.dot(rc.tau * w)));
        const double scaled = spt::relative_covariance(mirrored, rho, a).tau_pp;
        b4 = std::max(b4, std::abs(scaled - p * p * rc.tau_pp) / (1.0 + p * p));

        // per-asset, ranked and excess-growth bounds for the all-long pi
        const auto tau = spt::relative_covariance_matrix(pi, a);
        const double top = *std::max_element(pi.begin(), pi.end());
        const double lo = 1.0 - 1e-12, hi = 1.0 + 1e-12;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = tau(Eigen::Index(i), Eigen::Index(i));
            if (t < eps * (1 - pi[i]) * (1 - pi[i]) * lo || t > M * (1 - pi[i]) * (2 - pi[i]) * hi) ++inequality_failures;
            if (t < eps * (1 - top) * (1 - top) * lo || t > 2.0 * M * hi) ++inequality_failures;
        }
        const double g = spt::excess_growth(pi, a);
        if (g < 0.5 * eps * (1 - top) * lo || g > M * (1 - top) * hi) ++inequality_failures;
    }
    const bool ok = ni <= 1e-10 && composition <= 1e-12 && b4 <= 1e-12 && inequality_failures == 0;
    return {ok, std::to_string(N) + " instances; numeraire residual " + fmt(ni) + ", composition " + fmt(composition) +
                    ", covariance identities " + fmt(b4) + ", inequality failures " +
                    std::to_string(inequality_failures)};
}

// ---- 2: master formula convergence ----

spt::MarketModel gbm5() {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(5, 5);
    for (int i = 0; i < 5; ++i) {
        s(i, i) = 0.2 + 0.05 * i;
        if (i + 1 < 5) s(i, i + 1) = 0.05;
    }
    return spt::constant_coefficient_market({0.05, 0.04, 0.03, 0.06, 0.02}, s, {1, 2, 3, 4, 5});
}

Verdict master_formula() {
    const auto model = gbm5();
    const std::size_t N = 200;
    const auto fine = spt::generate_factors(spt::make_grid(1.0, 10000), 5, N, 2);
    const std::size_t factors[] = {10, 5, 1};  // dt = 1e-3, 5e-4, 1e-4
    double err[3];
    for (int j = 0; j < 3; ++j) {
        const auto f = fine.coarsened(factors[j]);
        const auto r = spt::parallel_map(N, workers(), [&](std::size_t i) {
            return std::abs(spt::verify_master_formula(model, spt::integrate_log_euler(model, f, i), 0.5).residual);
        });
        err[j] = spt::estimate_mean(r).mean;
    }
    const double order = std::log2(err[0] / err[1]);
    return {order >= 0.9 && err[2] <= 1e-2,
            "mean |residual| " + fmt(err[0]) + " (dt 1e-3), " + fmt(err[1]) + " (5e-4), " + fmt(err[2]) +
                " (1e-4); observed order " + fmt(order)};
}

// ---- 3: diversity of the diverse model ----

spt::MarketModel diverse3() {
    return spt::diverse_market(3, Eigen::MatrixXd::Identity(3, 3), {}, 0.3, 1.0, {1, 1, 1});
}

Verdict model_diversity() {
    const double delta = 0.3;
    const auto model = diverse3();
    const std::size_t N = 500;
    const auto fine = spt::generate_factors(spt::make_grid(5.0, 10000), 3, N, 3);
    double diverse[2], breach[2];
    for (int j = 0; j < 2; ++j) {
        const auto f = j == 0 ? fine.coarsened(2) : fine;
        const auto r = spt::parallel_map(N, workers(), [&](std::size_t i) {
            const auto p = spt::integrate_log_euler(model, f, i);
            return std::pair<bool, bool>{spt::check_diversity(p, delta).diverse, p.state.breaches > 0};
        });
        std::size_t d = 0, b = 0;
        for (const auto& [x, y] : r) d += x, b += y;
        diverse[j] = double(d) / N;
        breach[j] = double(b) / N;
    }
    const bool ok = diverse[0] >= 0.99 && breach[1] < breach[0];
    return {ok, "diverse fraction " + fmt(diverse[0]) + " at dt 1e-3; breach fraction " + fmt(breach[0]) + " at dt 1e-3, " +
                    fmt(breach[1]) + " at dt 5e-4 (strict decrease required)"};
}

// ---- 4: diversity-weighted outperformance ----

Verdict arbitrage_bound() {
    const double p = 0.5, delta = 0.3;
    const auto model = diverse3();
    const double T = std::ceil(spt::outperformance_horizon(3, p, model.certificate().epsilon, delta));
    const auto res = spt::verify_outperformance(model, p, spt::generate_factors(spt::make_grid(T, std::size_t(T * 1000)), 3, 500, 4),
                                          workers());
    const bool ok = res.fraction == 1.0 && res.worst_slack >= -3.0 * res.rms_discretization;
    return {ok, "T = " + fmt(T) + ", outperformance fraction " + fmt(res.fraction) + ", worst slack " +
                    fmt(res.worst_slack) + ", rms master-formula residual " + fmt(res.rms_discretization)};
}

// ---- 5: mirror constructions ----

Verdict mirror_constructions() {
    const double delta = 0.3, T = 1.0;
    const auto model = diverse3();
    const double p = 1.1 * spt::leader_mirror_threshold(model.certificate().epsilon, delta, T, 1.0 / 3.0);
    const std::size_t N = 500;
    const auto res =
        spt::verify_mirror_underperformance(model, spt::generate_factors(spt::make_grid(T, 1000), 3, N, 5), delta, p, workers());
    const bool ok = !res.underperformance.inapplicable && res.underperformance.fraction == 1.0 &&
                    res.ceiling_violations == 0 && res.rho_min_weight >= 0.0 && res.eta_min_weight >= 0.0 &&
                    res.rho_wins == N && res.eta_wins == N;
    return {ok, "p = " + fmt(p) + "; underperformance fraction " + fmt(res.underperformance.fraction) +
                    ", ceiling violations " + std::to_string(res.ceiling_violations) + ", min weights rho " +
                    fmt(res.rho_min_weight) + " eta " + fmt(res.eta_min_weight) + ", rho wins " +
                    std::to_string(res.rho_wins) + "/" + std::to_string(N) + ", eta wins " + std::to_string(res.eta_wins) +
                    "/" + std::to_string(N)};
}

// ---- 6: two-stock OU model ----

Verdict ou_model() {
    using boost::math::quadrature::gauss_kronrod;
    const double alpha = 0.5;
    // c* = stationary mean of mu_(1) = E[1/(1 + e^{-|Z|})], Z ~ N(0, 1)
    auto f = [](double z) { return std::exp(-z * z / 2) / std::sqrt(2 * std::numbers::pi) / (1 + std::exp(-z)); };
    const double c_star = 2.0 * gauss_kronrod<double, 61>::integrate(f, 0.0, std::numeric_limits<double>::infinity());

    const auto model = spt::ou_two_stock(alpha, 1.0);
    const auto path = spt::integrate_log_euler(model, spt::generate_factors(spt::make_grid(2000.0, 200000), 2, 1, 6), 0);
    const double avg = spt::check_diversity(path, 0.2).delta_avg;
    const double top_avg = 1.0 - avg;

    // stationary Z = log(X_2/X_1) ~ N(0, 1/(2 alpha)); mu_(1) >= 0.8 iff |Z| >= log 4
    const double tail = 2.0 * (1.0 - spt::standard_normal_cdf(std::log(4.0) * std::sqrt(2.0 * alpha)));
    const std::size_t N = 10000;
    const auto f2 = spt::generate_factors(spt::make_grid(20.0, 2000), 2, N, 60);
    const auto hits = spt::parallel_map(N, workers(), [&](std::size_t i) {
        const auto p = spt::integrate_log_euler(model, f2, i);
        return p.leader(p.steps()) >= 0.8 ? 1.0 : 0.0;
    });
    const auto est = spt::estimate_mean(hits);
    const bool ok = std::abs(top_avg - c_star) <= 0.02 && std::abs(est.mean - tail) <= 3.0 * est.std_error;
    return {ok, "time-average of mu_(1) " + fmt(top_avg) + " vs c* " + fmt(c_star) + "; P[mu_(1)(20) >= 0.8] " +
                    fmt(est.mean) + " +- " + fmt(est.std_error) + " vs " + fmt(tail)};
}

// ---- 7: local time ----

Verdict local_time() {
    const double oracle = std::sqrt(2.0 / std::numbers::pi);
    const auto fine = spt::generate_factors(spt::make_grid(1.0, 10000), 1, 10000, 7);
    const auto est = spt::estimate_mean(spt::lab::brownian_local_times(fine, workers()));
    const double rel = est.mean / oracle - 1.0;

    const auto model = spt::ou_two_stock(0.5, 1.0);
    const std::size_t N = 30;
    const auto paths = spt::generate_factors(spt::make_grid(2.0, 20000), 2, N, 70);
    double err[2];
    for (int j = 0; j < 2; ++j) {
        const auto f = j == 0 ? paths.coarsened(10) : paths;
        const auto r = spt::parallel_map(N, workers(), [&](std::size_t i) {
            return spt::verify_ranked_decomposition(spt::integrate_log_euler(model, f, i), model).max_relative();
        });
        err[j] = spt::estimate_mean(r).mean;
    }
    const bool ok = std::abs(rel) <= 0.02 && err[1] <= 0.05 && err[1] < err[0];
    return {ok, "E[Lambda(1)] " + fmt(est.mean) + " vs " + fmt(oracle) + " (relative " + fmt(rel) +
                    "); ranked residual " + fmt(err[0]) + " at dt 1e-3, " + fmt(err[1]) + " at dt 1e-4"};
}

// ---- 8: Black-Scholes regime ----

double bs_call(double s, double k, double r, double vol, double T) {
    const double d1 = (std::log(s / k) + (r + 0.5 * vol * vol) * T) / (vol * std::sqrt(T));
    return s * spt::standard_normal_cdf(d1) - k * std::exp(-r * T) * spt::standard_normal_cdf(d1 - vol * std::sqrt(T));
}

Verdict black_scholes() {
    const double r = 0.02, vol = 0.3, T = 1.0, strike = 1.0;
    Eigen::MatrixXd s(2, 2);
    s << vol, 0.0, 0.1, 0.2;
    const auto model = spt::constant_coefficient_market({0.07, 0.04}, s, {1.0, 1.0}, r);
    const auto h = spt::hedge_price(model, spt::call_claim(0, strike), spt::generate_factors(spt::make_grid(T, 4), 2, 100000, 8),
                                    workers());
    const double exact = bs_call(1.0, strike, r, vol, T);
    return {std::abs(h.h - exact) < 3.0 * h.std_error,
            "h = " + fmt(h.h) + " +- " + fmt(h.std_error) + " vs closed form " + fmt(exact)};
}

// ---- 9: strict local martingale ----

Verdict strict_local_martingale() {
    const double delta = 0.3;
    const auto model = spt::diverse_market(3, Eigen::MatrixXd::Identity(3, 3) * 0.2, {}, delta, 0.04, {1, 1, 1}).with_rate(0.02);
    const auto fine = spt::generate_factors(spt::make_grid(20.0, 4000), 3, 100000, 9);
    const std::vector<double> horizons{5.0, 10.0, 20.0};
    const auto coarse = spt::call_decay_study(model, 1.0, horizons, fine.coarsened(2), delta, 0.5, workers());
    const auto halved = spt::call_decay_study(model, 1.0, horizons, fine, delta, 0.5, workers());
    const auto& a = coarse.rows.back();
    const auto& b = halved.rows.back();
    const double z1 = (1.0 - a.deflator) / a.deflator_se, z2 = (1.0 - b.deflator) / b.deflator_se;
    std::string calls;
    for (const auto& row : coarse.rows) calls += " " + fmt(row.h_hat);
    const bool ok = z1 >= 3.0 && z2 >= 2.0 && coarse.below_spot && coarse.nonincreasing && coarse.under_envelope;
    return {ok, "E[L(20)] " + fmt(a.deflator) + " +- " + fmt(a.deflator_se) + " at dt 1e-2, " + fmt(b.deflator) + " +- " +
                    fmt(b.deflator_se) + " at dt 5e-3; call prices at T = 5, 10, 20:" + calls +
                    (coarse.under_envelope ? "; under envelope" : "; above envelope") +
                    " (Monte Carlo evidence, discretization bias not removed)"};
}

// ---- 10: put-call parity ----

Verdict parity() {
    const double delta = 0.3, T = 5.0;
    const auto model = spt::diverse_market(3, Eigen::MatrixXd::Identity(3, 3) * 0.2, {}, delta, 0.04, {1, 1, 1});
    const double p = 1.1 * spt::leader_mirror_threshold(model.certificate().epsilon, delta, T, 1.0 / 3.0);
    const auto g = spt::put_call_parity_gap(model, spt::portfolio_asset(std::make_shared<spt::MarketRule>(), model, 1.0),
                                            spt::portfolio_asset(spt::leader_mirror_rule(3, p), model, 1.0),
                                            spt::generate_factors(spt::make_grid(T, 500), 3, 100000, 10), workers());
    Eigen::MatrixXd s(2, 2);
    s << 0.3, 0.0, 0.1, 0.25;
    const auto control = spt::constant_coefficient_market({0.05, 0.02}, s, {1.0, 2.0});
    const auto c = spt::put_call_parity_gap(control, spt::stock_asset(0), spt::stock_asset(1),
                                            spt::generate_factors(spt::make_grid(2.0, 8), 2, 100000, 11), workers());
    const bool ok = g.initial_gap == 0.0 && g.gap >= 3.0 * g.std_error && std::abs(c.gap - c.initial_gap) < 3.0 * c.std_error;
    return {ok, "witness gap " + fmt(g.gap) + " +- " + fmt(g.std_error) + " with initial gap " + fmt(g.initial_gap) +
                    "; control gap " + fmt(c.gap) + " +- " + fmt(c.std_error) + " vs " + fmt(c.initial_gap)};
}

// ---- 11: instantaneous dominance ----

Verdict instantaneous_dominance() {
    const auto model = spt::instantaneous_dominance_market(0.25, std::log(0.95 / 0.05), std::log(0.9 / 0.1), 1.0);
    const auto fine = spt::generate_factors(spt::make_geometric_grid(1.0, 4000, 1e-8), 2, 1000, 11);
    std::vector<double> frac;
    std::string detail = "both-claims fraction";
    for (std::size_t factor : {4u, 2u, 1u}) {
        const auto f = fine.coarsened(factor);
        frac.push_back(spt::verify_instantaneous_dominance(model, f, workers()).both_fraction);
        detail += " " + fmt(frac.back()) + " (" + std::to_string(f.grid().steps()) + " steps)";
    }
    const bool ok = frac.back() >= 0.99 && std::is_sorted(frac.begin(), frac.end());
    return {ok, detail};
}

// ---- 12: determinism across thread counts ----

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// CSV files plus the numeric sections of summary.json.
std::string numeric_output(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string out;
    for (const auto& f : files) out += f.filename().string() + "\n" + slurp(f);
    const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
    for (const char* key : {"summary", "claims"})
        if (j.contains(key)) out += j[key].dump();
    return out;
}

Verdict determinism() {
    const char* exe = std::getenv("SPT_LAB");
    const char* configs = std::getenv("SPT_CONFIGS");
    if (!exe || !configs) return {false, "SPT_LAB and SPT_CONFIGS must be set"};
    const fs::path scratch = fs::temp_directory_path() / ("spt-lab-acceptance-" + std::to_string(::getpid()));
    std::vector<fs::path> inis;
    for (const auto& e : fs::directory_iterator(configs))
        if (e.path().extension() == ".ini") inis.push_back(e.path());
    std::sort(inis.begin(), inis.end());
    std::size_t same = 0;
    std::string mismatched;
    for (const auto& ini : inis) {
        std::string outputs[2];
        for (int t = 0; t < 2; ++t) {
            const auto dir = scratch / ini.stem() / (t == 0 ? "t1" : "t4");
            // fewer paths keep the run short; the path streams are the same
            const std::string cmd = std::string(exe) + " run " + ini.string() + " --out " + dir.string() +
                                    " --paths 64 --threads " + (t == 0 ? "1" : "4") + " >/dev/null 2>&1";
            const int status = std::system(cmd.c_str());
            const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
            if ((code != 0 && code != 4) || !fs::exists(dir / "summary.json")) {
                outputs[t] = "exit " + std::to_string(code);
                continue;
            }
            outputs[t] = numeric_output(dir);
        }
        if (outputs[0] == outputs[1] && outputs[0].rfind("exit ", 0) != 0)
            ++same;
        else
            mismatched += " " + ini.stem().string();
    }
    fs::remove_all(scratch);
    return {same == inis.size() && !inis.empty(),
            std::to_string(same) + "/" + std::to_string(inis.size()) + " configs byte-identical with 1 and 4 threads" +
                (mismatched.empty() ? "" : "; differing:" + mismatched)};
}

const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
    {"algebraic identities", algebraic_identities},
    {"master formula convergence", master_formula},
    {"diverse model stays diverse", model_diversity},
    {"diversity-weighted portfolio beats the market", arbitrage_bound},
    {"mirror constructions", mirror_constructions},
    {"two-stock OU model", ou_model},
    {"local time oracle", local_time},
    {"hedging in the Black-Scholes regime", black_scholes},
    {"strict local martingale deflator", strict_local_martingale},
    {"put-call parity failure", parity},
    {"instantaneous dominance", instantaneous_dominance},
    {"determinism across thread counts", determinism},
};

bool run(std::size_t c) {
    const auto& [name, fn] = criteria[c - 1];
    Verdict v;
    try {
        v = fn();
    } catch (const std::exception& e) {
        v = {false, std::string("error: ") + e.what()};
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << " " << c << " " << name << ": " << v.detail << std::endl;
    return v.pass;
}

} // namespace

int main(int argc, char** argv) {
    if (argc > 2) {
        std::cerr << "usage: acceptance [criterion 1-12]\n";
        return 2;
    }
    if (argc == 2) {
        const int c = std::atoi(argv[1]);
        if (c < 1 || c > int(criteria.size())) {
            std::cerr << "criterion must be between 1 and " << criteria.size() << "\n";
            return 2;
        }
        return run(std::size_t(c)) ? 0 : 1;
    }
    bool all = true;
    for (std::size_t c = 1; c <= criteria.size(); ++c) all = run(c) && all;
    return all ? 0 : 1;
}
