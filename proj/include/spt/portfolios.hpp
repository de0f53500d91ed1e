#pragma once

#include "spt/error.hpp"
#include "spt/markets.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace spt {

using WeightVector = std::vector<double>;

namespace detail {

inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw std::invalid_argument(std::string("dimension mismatch: ") + what);
}

inline void require_square(const Eigen::MatrixXd& a, std::size_t n) {
    if (static_cast<std::size_t>(a.rows()) != n || static_cast<std::size_t>(a.cols()) != n)
        throw std::invalid_argument("dimension mismatch: covariance must be n x n");
}

} // namespace detail

// ---- weight algebra ----

inline WeightVector market_portfolio(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("empty price vector");
    double total = 0.0;
    for (double v : x) {
        if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("prices must be positive and finite");
        total += v;
    }
    WeightVector mu(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) mu[i] = x[i] / total;
    return mu;
}

// pi_i = mu_i^p / sum_j mu_j^p. p = 1 returns mu unchanged.
inline void diversity_weighted(std::span<const double> mu, double p, std::span<double> out) {
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("diversity-weighted exponent must lie in (0, 1]");
    if (p == 1.0) {
        std::copy(mu.begin(), mu.end(), out.begin());
        return;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        out[i] = std::pow(mu[i], p);
        s += out[i];
    }
    for (std::size_t i = 0; i < mu.size(); ++i) out[i] /= s;
}

inline WeightVector diversity_weighted(std::span<const double> mu, double p) {
    WeightVector out(mu.size());
    diversity_weighted(mu, p, out);
    return out;
}

// p pi + (1 - p) m
inline WeightVector mirror_portfolio(std::span<const double> pi, std::span<const double> m, double p) {
    if (p == 0.0) throw std::invalid_argument("mirror exponent must be non-zero");
    detail::require_same_size(pi.size(), m.size(), "portfolio and baseline");
    WeightVector out(pi.size());
    for (std::size_t i = 0; i < pi.size(); ++i) out[i] = p * pi[i] + (1.0 - p) * m[i];
    return out;
}

// Half the gap between the weighted average variance and the portfolio variance.
inline double excess_growth(std::span<const double> pi, const Eigen::MatrixXd& a) {
    const std::size_t n = pi.size();
    detail::require_square(a, n);
    double avg = 0.0, var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        avg += pi[i] * a(i, i);
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += a(i, j) * pi[j];
        var += pi[i] * row;
    }
    return 0.5 * (avg - var);
}

struct RelativeCovariance {
    Eigen::MatrixXd tau;  // covariance relative to the baseline rho
    double tau_pp = 0.0;  // (pi - rho)' a (pi - rho)
};

// tau_ij = a_ij - (a rho)_i - (a rho)_j + rho' a rho
inline Eigen::MatrixXd relative_covariance_matrix(std::span<const double> rho, const Eigen::MatrixXd& a) {
    const std::size_t n = rho.size();
    detail::require_square(a, n);
    Eigen::Map<const Eigen::VectorXd> r(rho.data(), static_cast<Eigen::Index>(n));
    const Eigen::VectorXd ar = a * r;
    const double rar = r.dot(ar);
    Eigen::MatrixXd tau = a;
    tau.colwise() -= ar;
    tau.rowwise() -= ar.transpose();
    tau.array() += rar;
    return tau;
}

inline RelativeCovariance relative_covariance(std::span<const double> pi, std::span<const double> rho,
                                              const Eigen::MatrixXd& a) {
    detail::require_same_size(pi.size(), rho.size(), "portfolio and baseline");
    RelativeCovariance out;
    out.tau = relative_covariance_matrix(rho, a);
    Eigen::VectorXd d(static_cast<Eigen::Index>(pi.size()));
    for (std::size_t i = 0; i < pi.size(); ++i) d(static_cast<Eigen::Index>(i)) = pi[i] - rho[i];
    out.tau_pp = d.dot(a * d);
    return out;
}

// |gamma*_pi - (1/2)(sum pi_i tau_ii - pi' tau pi)| with tau relative to rho.
inline double numeraire_invariance_residual(std::span<const double> pi, std::span<const double> rho,
                                            const Eigen::MatrixXd& a) {
    detail::require_same_size(pi.size(), rho.size(), "portfolio and baseline");
    const Eigen::MatrixXd tau = relative_covariance_matrix(rho, a);
    const std::size_t n = pi.size();
    double avg = 0.0, quad = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        avg += pi[i] * tau(i, i);
        for (std::size_t j = 0; j < n; ++j) quad += pi[i] * tau(i, j) * pi[j];
    }
    return std::abs(excess_growth(pi, a) - 0.5 * (avg - quad));
}

// Sum to one within tol; all-long additionally non-negative.
inline bool valid_weights(std::span<const double> w, bool all_long, double tol = 1e-12) {
    double s = 0.0;
    for (double v : w) {
        if (!std::isfinite(v)) return false;
        if (all_long && v < 0.0) return false;
        s += v;
    }
    return std::abs(s - 1.0) <= tol;
}

// ---- rules ----

// Weights as a function of (t, mu) together with their sensitivity
// J_ij = d pi_i / d log X_j, which the wealth integrator uses for its
// second-order correction.
class PortfolioRule {
public:
    virtual ~PortfolioRule() = default;
    virtual std::string name() const = 0;
    virtual bool extended() const = 0;
    virtual void weights(double t, std::span<const double> mu, std::span<double> out) const = 0;
    // Row-major n x n.
    virtual void sensitivity(double t, std::span<const double> mu, std::span<const double> pi,
                             std::span<double> jac) const = 0;
};

namespace detail {

// C_ij = diag(w) - w w'
inline void simplex_covariance(std::span<const double> w, std::span<double> out, double scale = 1.0) {
    const std::size_t n = w.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = scale * ((i == j ? w[i] : 0.0) - w[i] * w[j]);
}

} // namespace detail

class MarketRule final : public PortfolioRule {
public:
    std::string name() const override { return "market"; }
    bool extended() const override { return false; }
    void weights(double, std::span<const double> mu, std::span<double> out) const override {
        std::copy(mu.begin(), mu.end(), out.begin());
    }
    void sensitivity(double, std::span<const double> mu, std::span<const double>, std::span<double> jac) const override {
        detail::simplex_covariance(mu, jac);
    }
};

class ConstantRule final : public PortfolioRule {
public:
    explicit ConstantRule(WeightVector w) : w_(std::move(w)) {
        if (!valid_weights(w_, false)) throw std::invalid_argument("constant weights must sum to one");
        all_long_ = valid_weights(w_, true);
    }
    std::string name() const override { return "constant"; }
    bool extended() const override { return !all_long_; }
    void weights(double, std::span<const double>, std::span<double> out) const override {
        std::copy(w_.begin(), w_.end(), out.begin());
    }
    void sensitivity(double, std::span<const double>, std::span<const double>, std::span<double> jac) const override {
        std::fill(jac.begin(), jac.end(), 0.0);
    }

private:
    WeightVector w_;
    bool all_long_ = true;
};

class DiversityWeightedRule final : public PortfolioRule {
public:
    explicit DiversityWeightedRule(double p) : p_(p) {
        if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("diversity-weighted exponent must lie in (0, 1]");
    }
    std::string name() const override { return "diversity-weighted"; }
    bool extended() const override { return false; }
    double exponent() const noexcept { return p_; }
    void weights(double, std::span<const double> mu, std::span<double> out) const override {
        diversity_weighted(mu, p_, out);
    }
    void sensitivity(double, std::span<const double>, std::span<const double> pi, std::span<double> jac) const override {
        detail::simplex_covariance(pi, jac, p_);
    }

private:
    double p_;
};

// p pi(t) + (1 - p) mu(t)
class MirrorRule final : public PortfolioRule {
public:
    MirrorRule(std::shared_ptr<const PortfolioRule> base, double p) : base_(std::move(base)), p_(p) {
        if (!base_) throw std::invalid_argument("mirror base rule is null");
        if (p == 0.0) throw std::invalid_argument("mirror exponent must be non-zero");
    }
    std::string name() const override { return "mirror(" + base_->name() + ")"; }
    bool extended() const override { return p_ > 1.0 || p_ < 0.0 || base_->extended(); }
    double exponent() const noexcept { return p_; }
    const PortfolioRule& base() const noexcept { return *base_; }

    void weights(double t, std::span<const double> mu, std::span<double> out) const override {
        base_->weights(t, mu, out);
        for (std::size_t i = 0; i < mu.size(); ++i) out[i] = p_ * out[i] + (1.0 - p_) * mu[i];
    }
    void sensitivity(double t, std::span<const double> mu, std::span<const double>, std::span<double> jac) const override {
        const std::size_t n = mu.size();
        std::vector<double> bw(n), cm(n * n);
        base_->weights(t, mu, bw);
        base_->sensitivity(t, mu, bw, jac);
        detail::simplex_covariance(mu, cm);
        for (std::size_t k = 0; k < n * n; ++k) jac[k] = p_ * jac[k] + (1.0 - p_) * cm[k];
    }

private:
    std::shared_ptr<const PortfolioRule> base_;
    double p_;
};

// Long p in stock 1, short p - 1 in the market.
inline std::shared_ptr<const MirrorRule> leader_mirror_rule(std::size_t n, double p) {
    if (!(p > 1.0)) throw std::invalid_argument("p must exceed 1");
    if (n < 1) throw std::invalid_argument("need at least one stock");
    WeightVector e1(n, 0.0);
    e1[0] = 1.0;
    return std::make_shared<MirrorRule>(std::make_shared<ConstantRule>(std::move(e1)), p);
}

// p(T) = 1 + 2 log(1/mu_1(0)) / (eps delta^2 T)
inline double leader_mirror_threshold(double epsilon, double delta, double T, double mu1_0) {
    return 1.0 + 2.0 / (epsilon * delta * delta * T) * std::log(1.0 / mu1_0);
}

// ---- wealth ----

struct ValuePath {
    std::shared_ptr<const PathGrid> grid;
    std::vector<double> log_value;
    bool extended = false;

    double initial() const { return std::exp(log_value.front()); }
    double value(std::size_t k) const { return std::exp(log_value[k]); }
    double terminal() const { return std::exp(log_value.back()); }
    double log_terminal() const { return log_value.back(); }
};

// Weights are taken at the left end of each step.
//
// All-long rules:  d log Z = log sum_i pi_i e^{dy_i} + (1/2)[s'Ks - tr(Ka) dt],  K = J - C_pi
// Extended rules:  d log(Z/Z^mu) = (pi - mu).d log mu + (g*_pi - g*_mu) dt + (1/2)[s'Ks - tr(Ka) dt],
//                  K = J - C_mu, and Z^mu is carried exactly as z sum X / sum X(0).
// Here s = sigma dW and C_w = diag(w) - w w'. The bracket is the Milstein term
// for the state-dependent weights; it makes the scheme exact for the market
// portfolio and for any single stock.
inline ValuePath portfolio_value(const PortfolioRule& rule, const MarketModel& model, const PricePath& path, double z) {
    if (!(z > 0.0) || !std::isfinite(z)) throw std::invalid_argument("initial capital must be positive");
    const std::size_t n = path.n, K = path.steps();
    if (n != model.stocks()) throw std::invalid_argument("path does not match model");
    const VolatilityMatrix& vol = model.volatility();
    const Eigen::MatrixXd& a = vol.covariance();
    const bool ext = rule.extended();

    ValuePath out;
    out.grid = path.grid;
    out.extended = ext;
    out.log_value.resize(K + 1);
    out.log_value[0] = std::log(z);

    std::vector<double> pi(n), jac(n * n), shock(n), dy(n);
    double log_market0 = path.log_total(0);
    for (std::size_t k = 0; k < K; ++k) {
        const double t = path.time(k), dt = path.dt(k);
        const auto mu = path.mu(k);
        rule.weights(t, mu, pi);
        for (double w : pi)
            if (!std::isfinite(w)) throw integration_failure(path.index, k, "non-finite portfolio weight");
        rule.sensitivity(t, mu, pi, jac);

        // K = J - C_base
        const std::span<const double> base = ext ? mu : std::span<const double>(pi);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) jac[i * n + j] -= (i == j ? base[i] : 0.0) - base[i] * base[j];

        vol.apply(path.dw(k), shock);
        double quad = 0.0, trace = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                quad += shock[i] * jac[i * n + j] * shock[j];
                trace += jac[i * n + j] * a(j, i);
            }
        const double milstein = 0.5 * (quad - trace * dt);

        const auto y0 = path.log_x(k), y1 = path.log_x(k + 1);
        for (std::size_t i = 0; i < n; ++i) dy[i] = y1[i] - y0[i];

        if (!ext) {
            double mx = dy[0];
            for (double v : dy) mx = std::max(mx, v);
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += pi[i] * std::exp(dy[i] - mx);
            if (!(s > 0.0)) throw integration_failure(path.index, k, "wealth left the positive half-line");
            out.log_value[k + 1] = out.log_value[k] + mx + std::log(s) + milstein;
        } else {
            const double dlm = path.log_total(k + 1) - path.log_total(k);
            double lin = 0.0;
            for (std::size_t i = 0; i < n; ++i) lin += (pi[i] - mu[i]) * (dy[i] - dlm);
            const double gap = excess_growth(pi, a) - excess_growth(mu, a);
            const double ratio = out.log_value[k] - (std::log(z) + path.log_total(k) - log_market0);
            const double next_ratio = ratio + lin + gap * dt + milstein;
            out.log_value[k + 1] = std::log(z) + path.log_total(k + 1) - log_market0 + next_ratio;
        }
        if (!std::isfinite(out.log_value[k + 1])) throw integration_failure(path.index, k, "non-finite wealth");
    }
    return out;
}

// ---- trading strategies ----

// Fills dollar holdings phi_i given the step index, time, prices and current wealth.
using TradingStrategy =
    std::function<void(std::size_t k, double t, std::span<const double> prices, double wealth, std::span<double> phi)>;

struct StrategyValuePath {
    std::shared_ptr<const PathGrid> grid;
    std::vector<double> value;
    bool admissible = true;  // Z >= 0 at every grid point
    double min_value = 0.0;
};

// Self-financing update over each step: holdings earn the realized stock
// returns, the remainder earns the money-market return, B(t) = e^{rt}.
inline StrategyValuePath strategy_value(const TradingStrategy& phi, const PricePath& path, double r, double z) {
    if (!std::isfinite(z)) throw std::invalid_argument("initial capital must be finite");
    const std::size_t n = path.n, K = path.steps();
    StrategyValuePath out;
    out.grid = path.grid;
    out.value.resize(K + 1);
    out.value[0] = z;
    out.min_value = z;
    std::vector<double> x0(n), x1(n), h(n);
    for (std::size_t i = 0; i < n; ++i) x0[i] = path.price(0, i);
    for (std::size_t k = 0; k < K; ++k) {
        const double wealth = out.value[k];
        phi(k, path.time(k), x0, wealth, h);
        double held = 0.0, gain = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(h[i])) throw integration_failure(path.index, k, "non-finite holding");
            x1[i] = path.price(k + 1, i);
            held += h[i];
            gain += h[i] * (x1[i] / x0[i] - 1.0);
        }
        const double growth = std::expm1(r * path.dt(k));
        out.value[k + 1] = wealth + gain + (wealth - held) * growth;
        out.min_value = std::min(out.min_value, out.value[k + 1]);
        std::swap(x0, x1);
    }
    out.admissible = out.min_value >= 0.0;
    return out;
}

// Holdings phi_i = pi_i Z for a rule.
inline TradingStrategy proportional_strategy(std::shared_ptr<const PortfolioRule> rule) {
    return [rule](std::size_t, double t, std::span<const double> x, double wealth, std::span<double> phi) {
        auto mu = market_portfolio(x);
        rule->weights(t, mu, phi);
        for (double& v : phi) v *= wealth;
    };
}

// ---- buy-and-hold mixes of pi-hat and the market ----

// Both value paths start at 1. The dollar split is fixed at time 0:
//   rho: 1 dollar in pi-hat and (p-1)/mu_1(0)^p in the market,
//   eta: p/mu_1(0)^p in the market and -1 dollar in pi-hat.
struct MixPath {
    std::vector<double> value;        // Z(t_k)
    std::vector<double> weights;      // (K+1) x n
    std::vector<double> market_gap;   // Z(t_k) - c Z^mu(t_k), c = Z(0); computed without cancellation
    double initial = 0.0;
    double min_weight = 0.0;
    double max_weight_sum_error = 0.0;
};

namespace detail {

inline MixPath buy_and_hold_mix(const ValuePath& pihat, const ValuePath& market, const PricePath& path, double p,
                                double mu1_0, bool long_pihat) {
    if (!(p > 1.0)) throw std::invalid_argument("p must exceed 1");
    if (!(mu1_0 > 0.0 && mu1_0 < 1.0)) throw std::invalid_argument("mu_1(0) must lie in (0, 1)");
    const std::size_t n = path.n, K = path.steps();
    // Work in units of mu_1(0)^p dollars to keep every term of order one.
    const double scale = std::pow(mu1_0, p);
    const double c_mkt = long_pihat ? (p - 1.0) : p;
    const double c_hat = (long_pihat ? 1.0 : -1.0) * scale;
    MixPath out;
    out.initial = (c_mkt + c_hat) / scale;
    out.value.resize(K + 1);
    out.weights.resize((K + 1) * n);
    out.market_gap.resize(K + 1);
    out.min_weight = 1.0;
    for (std::size_t k = 0; k <= K; ++k) {
        const double zm = market.value(k), zh = pihat.value(k);
        const auto mu = path.mu(k);
        const double total = c_mkt * zm + c_hat * zh;
        out.value[k] = total / scale;
        // Z - Z(0) Z^mu reduces to +-(Z^pihat - Z^mu).
        out.market_gap[k] = (long_pihat ? 1.0 : -1.0) * (zh - zm);
        double wsum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double ph = (i == 0 ? p : 0.0) + (1.0 - p) * mu[i];
            const double w = (c_mkt * mu[i] * zm + c_hat * ph * zh) / total;
            out.weights[k * n + i] = w;
            out.min_weight = std::min(out.min_weight, w);
            wsum += w;
        }
        out.max_weight_sum_error = std::max(out.max_weight_sum_error, std::abs(wsum - 1.0));
    }
    return out;
}

} // namespace detail

inline MixPath rho_mix(const ValuePath& pihat, const ValuePath& market, const PricePath& path, double p,
                              double mu1_0) {
    return detail::buy_and_hold_mix(pihat, market, path, p, mu1_0, true);
}

inline MixPath eta_mix(const ValuePath& pihat, const ValuePath& market, const PricePath& path, double p,
                              double mu1_0) {
    return detail::buy_and_hold_mix(pihat, market, path, p, mu1_0, false);
}

} // namespace spt
