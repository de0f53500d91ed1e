#pragma once

#include "spt/error.hpp"
#include "spt/paths.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace spt {

inline constexpr std::size_t npos = static_cast<std::size_t>(-1);

// Ellipticity bounds: eps |xi|^2 <= xi' a xi <= M |xi|^2.
struct Certificate {
    double epsilon = 0.0;
    double bound = 0.0;
};

class VolatilityMatrix {
public:
    enum class Check { ellipticity, none };

    explicit VolatilityMatrix(Eigen::MatrixXd sigma, Check check = Check::ellipticity) : sigma_(std::move(sigma)) {
        const auto n = sigma_.rows(), m = sigma_.cols();
        if (n < 1 || m < n) throw invalid_model("volatility must be n x m with m >= n >= 1");
        if (!sigma_.allFinite()) throw invalid_model("volatility has non-finite entries");
        cov_ = sigma_ * sigma_.transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov_, Eigen::EigenvaluesOnly);
        cert_.epsilon = es.eigenvalues().minCoeff();
        cert_.bound = es.eigenvalues().maxCoeff();
        if (check == Check::ellipticity) {
            const double tol = 1e-12 * std::max(1.0, cert_.bound);
            if (!(cert_.epsilon > tol))
                throw invalid_model("covariance sigma sigma' is singular or indefinite (smallest eigenvalue " +
                                    std::to_string(cert_.epsilon) + ")");
            risk_ = sigma_.transpose() * cov_.llt().solve(Eigen::MatrixXd::Identity(n, n));
        } else {
            cert_.epsilon = std::max(cert_.epsilon, 0.0);
            risk_ = sigma_.transpose() * cov_.completeOrthogonalDecomposition().pseudoInverse();
        }
        diag_.resize(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) diag_[static_cast<std::size_t>(i)] = cov_(i, i);
    }

    std::size_t stocks() const noexcept { return static_cast<std::size_t>(sigma_.rows()); }
    std::size_t factors() const noexcept { return static_cast<std::size_t>(sigma_.cols()); }
    const Eigen::MatrixXd& sigma() const noexcept { return sigma_; }
    const Eigen::MatrixXd& covariance() const noexcept { return cov_; }
    std::span<const double> variances() const noexcept { return diag_; }
    Certificate certificate() const noexcept { return cert_; }
    // sigma' (sigma sigma')^{-1}, maps excess returns to the market price of risk.
    const Eigen::MatrixXd& risk_projection() const noexcept { return risk_; }

    // out = sigma * dw
    void apply(std::span<const double> dw, std::span<double> out) const noexcept {
        const std::size_t n = stocks(), m = factors();
        const double* s = sigma_.data();
        for (std::size_t i = 0; i < n; ++i) out[i] = 0.0;
        for (std::size_t v = 0; v < m; ++v) {
            const double w = dw[v];
            if (w == 0.0) continue;
            for (std::size_t i = 0; i < n; ++i) out[i] += s[v * n + i] * w;
        }
    }

private:
    Eigen::MatrixXd sigma_;
    Eigen::MatrixXd cov_;
    Eigen::MatrixXd risk_;
    std::vector<double> diag_;
    Certificate cert_;
};

// Market snapshot handed to drift rules.
struct MarketState {
    std::size_t step = 0;
    double t = 0.0;
    double dt = 0.0;  // length of the step about to be taken (0 at the horizon)
    double horizon = 0.0;
    std::span<const double> log_prices;
    std::span<const double> weights;
    std::span<const double> shock;  // sigma dW of the step about to be taken (empty at the horizon)
};

// Per-path record carried through integration by path-dependent rules.
struct PathState {
    bool stopped = false;      // stopping time reached
    double stop_time = std::numeric_limits<double>::quiet_NaN();
    bool drift_on = false;     // patched model: base drift switched on
    double drift_integral = 0.0;
    std::size_t breaches = 0;  // grid points on or past a barrier
    std::size_t first_breach = npos;
    double max_leader = 0.0;   // largest weight seen on the grid
};

class DriftRule {
public:
    virtual ~DriftRule() = default;
    // Growth rates gamma_i for the step starting at s.t.
    virtual void growth(const MarketState& s, PathState& state, std::span<double> gamma) const = 0;
    // Called at t_0 and after every step.
    virtual void observe(const MarketState&, PathState&) const {}
};

class ConstantDrift final : public DriftRule {
public:
    explicit ConstantDrift(std::vector<double> gamma) : gamma_(std::move(gamma)) {}
    void growth(const MarketState&, PathState&, std::span<double> g) const override {
        std::copy(gamma_.begin(), gamma_.end(), g.begin());
    }
    std::span<const double> rates() const noexcept { return gamma_; }

private:
    std::vector<double> gamma_;
};

// Index of the largest weight, ties to the lowest index.
inline std::size_t leader_index(std::span<const double> w) noexcept {
    std::size_t lead = 0;
    for (std::size_t i = 1; i < w.size(); ++i)
        if (w[i] > w[lead]) lead = i;
    return lead;
}

// Stocks outside the lead grow at g_i; the leader gets -(M/delta)/Q with
// Q = log((1-delta)/mu_(1)) floored at q_floor.
class DiverseDrift final : public DriftRule {
public:
    DiverseDrift(std::vector<double> g, double delta, double bound, double q_floor)
        : g_(std::move(g)), delta_(delta), bound_(bound), q_floor_(q_floor) {}

    void growth(const MarketState& s, PathState&, std::span<double> gamma) const override {
        std::copy(g_.begin(), g_.end(), gamma.begin());
        const std::size_t lead = leader_index(s.weights);
        gamma[lead] = leader_growth(s.weights[lead]);
    }

    void observe(const MarketState& s, PathState& st) const override {
        const double top = s.weights[leader_index(s.weights)];
        st.max_leader = std::max(st.max_leader, top);
        if (top >= 1.0 - delta_) {
            if (st.breaches == 0) st.first_breach = s.step;
            ++st.breaches;
        }
    }

    double leader_growth(double mu_top) const noexcept {
        const double q = std::max(std::log((1.0 - delta_) / mu_top), q_floor_);
        return -(bound_ / delta_) / q;
    }
    double delta() const noexcept { return delta_; }
    double bound() const noexcept { return bound_; }
    std::span<const double> baseline() const noexcept { return g_; }

private:
    std::vector<double> g_;
    double delta_;
    double bound_;
    double q_floor_;
};

// b_1 = 0, b_2 = -alpha (log X_2 - log X_1) once t >= switch_time.
class OuDrift final : public DriftRule {
public:
    OuDrift(double alpha, double switch_time, std::vector<double> half_var)
        : alpha_(alpha), switch_(switch_time), half_var_(std::move(half_var)) {}

    void growth(const MarketState& s, PathState&, std::span<double> gamma) const override {
        gamma[0] = -half_var_[0];
        const double z = s.log_prices[1] - s.log_prices[0];
        gamma[1] = (s.t >= switch_ ? -alpha_ * z : 0.0) - half_var_[1];
    }

private:
    double alpha_;
    double switch_;
    std::vector<double> half_var_;
};

// Zero rates of return until S = inf{mu_(1) >= 1 - eta} ^ T; from S on the
// base diverse drift applies, but only on paths where S <= T/2.
class PatchedDrift final : public DriftRule {
public:
    PatchedDrift(std::shared_ptr<const DiverseDrift> base, double eta, double horizon, std::vector<double> half_var)
        : base_(std::move(base)), eta_(eta), horizon_(horizon), half_var_(std::move(half_var)) {}

    void growth(const MarketState& s, PathState& st, std::span<double> gamma) const override {
        if (st.drift_on) {
            base_->growth(s, st, gamma);
            return;
        }
        for (std::size_t i = 0; i < gamma.size(); ++i) gamma[i] = -half_var_[i];
    }

    void observe(const MarketState& s, PathState& st) const override {
        const double top = s.weights[leader_index(s.weights)];
        st.max_leader = std::max(st.max_leader, top);
        if (!st.stopped && (top >= 1.0 - eta_ || s.t >= horizon_)) {
            st.stopped = true;
            st.stop_time = std::min(s.t, horizon_);
            st.drift_on = st.stop_time <= 0.5 * horizon_;
        }
        if (st.drift_on && top >= 1.0 - base_->delta()) {
            if (st.breaches == 0) st.first_breach = s.step;
            ++st.breaches;
        }
    }

    double eta() const noexcept { return eta_; }
    double horizon() const noexcept { return horizon_; }
    const DiverseDrift& base() const noexcept { return *base_; }

private:
    std::shared_ptr<const DiverseDrift> base_;
    double eta_;
    double horizon_;
    std::vector<double> half_var_;
};

// Two stocks: gamma_1 = 0; gamma_2 = alpha t^(alpha-1) until Y = log X_2 - log X_1
// leaves (-eta', eta'), then the confining drift q(Y) = c (1/(eta+Y) - 1/(eta-Y)).
// The singular part is applied as its exact step average (t_{k+1}^alpha - t_k^alpha)/dt.
// The confining part is drift-implicit: Y' = Y + shock + q(Y') dt has a unique
// root in (-eta, eta) since q decreases from +inf to -inf, so Y never crosses a pole.
class DominanceDrift final : public DriftRule {
public:
    DominanceDrift(double alpha, double eta, double eta_inner, double strength, double pole_floor)
        : alpha_(alpha), eta_(eta), eta_in_(eta_inner), c_(strength), floor_(pole_floor) {}

    void growth(const MarketState& s, PathState& st, std::span<double> gamma) const override {
        gamma[0] = 0.0;
        const double y = s.log_prices[1] - s.log_prices[0];
        if (!st.stopped) {
            gamma[1] = (std::pow(s.t + s.dt, alpha_) - std::pow(s.t, alpha_)) / s.dt;
        } else if (s.shock.size() == 2) {
            gamma[1] = confining(implicit_step(y + s.shock[1] - s.shock[0], s.dt));
        } else {
            gamma[1] = confining(y);
        }
        st.drift_integral += gamma[1] * s.dt;
    }

    // Root of y = y_star + q(y) dt in (-eta, eta) by bisection.
    double implicit_step(double y_star, double dt) const noexcept {
        double lo = -eta_, hi = eta_;
        for (int it = 0; it < 200 && hi - lo > 1e-15 * eta_; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid - y_star - confining(mid) * dt < 0.0) lo = mid; else hi = mid;
        }
        return 0.5 * (lo + hi);
    }

    void observe(const MarketState& s, PathState& st) const override {
        const double y = s.log_prices[1] - s.log_prices[0];
        if (!st.stopped && s.step > 0 && std::abs(y) >= eta_in_) {
            st.stopped = true;
            st.stop_time = s.t;
        }
        if (std::abs(y) >= eta_) {
            if (st.breaches == 0) st.first_breach = s.step;
            ++st.breaches;
        }
    }

    // Pointwise singular growth alpha t^(alpha-1) before the exit time.
    double singular_growth(double t) const noexcept { return alpha_ * std::pow(t, alpha_ - 1.0); }

    // Pushes up near -eta, down near +eta. Distance to each pole floored.
    double confining(double y) const noexcept {
        const double up = std::max(eta_ + y, floor_);
        const double down = std::max(eta_ - y, floor_);
        return c_ * (1.0 / up - 1.0 / down);
    }
    double alpha() const noexcept { return alpha_; }
    double eta() const noexcept { return eta_; }
    double eta_inner() const noexcept { return eta_in_; }

private:
    double alpha_;
    double eta_;
    double eta_in_;
    double c_;
    double floor_;
};

class MarketModel {
public:
    MarketModel(std::string name, VolatilityMatrix vol, std::vector<double> x0, std::shared_ptr<const DriftRule> drift,
                double rate = 0.0)
        : name_(std::move(name)), vol_(std::move(vol)), x0_(std::move(x0)), drift_(std::move(drift)), rate_(rate) {
        if (x0_.size() != vol_.stocks()) throw invalid_model("initial prices do not match stock count");
        for (double x : x0_)
            if (!(x > 0.0) || !std::isfinite(x)) throw invalid_model("initial prices must be positive");
        if (!drift_) throw invalid_model("drift rule is null");
        if (!(rate_ >= 0.0) || !std::isfinite(rate_)) throw invalid_model("short rate must be finite and >= 0");
    }

    const std::string& name() const noexcept { return name_; }
    std::size_t stocks() const noexcept { return vol_.stocks(); }
    std::size_t factors() const noexcept { return vol_.factors(); }
    const VolatilityMatrix& volatility() const noexcept { return vol_; }
    Certificate certificate() const noexcept { return vol_.certificate(); }
    std::span<const double> initial_prices() const noexcept { return x0_; }
    const DriftRule& drift() const noexcept { return *drift_; }
    std::shared_ptr<const DriftRule> drift_ptr() const noexcept { return drift_; }
    double rate() const noexcept { return rate_; }

    // Barrier delta guaranteed by construction, if any.
    std::optional<double> guaranteed_delta() const noexcept { return delta_; }
    MarketModel& set_guaranteed_delta(double d) {
        delta_ = d;
        return *this;
    }
    MarketModel with_rate(double r) const {
        MarketModel out = *this;
        if (!(r >= 0.0) || !std::isfinite(r)) throw invalid_model("short rate must be finite and >= 0");
        out.rate_ = r;
        return out;
    }

private:
    std::string name_;
    VolatilityMatrix vol_;
    std::vector<double> x0_;
    std::shared_ptr<const DriftRule> drift_;
    double rate_;
    std::optional<double> delta_;
};

// mu_i = X_i / sum X_j, from log prices.
inline void weights_from_log(std::span<const double> y, std::span<double> mu) noexcept {
    double mx = y[0];
    for (double v : y) mx = std::max(mx, v);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        mu[i] = std::exp(y[i] - mx);
        s += mu[i];
    }
    for (double& v : mu) v /= s;
}

inline double log_sum_exp(std::span<const double> y) noexcept {
    double mx = y[0];
    for (double v : y) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : y) s += std::exp(v - mx);
    return mx + std::log(s);
}

// One simulated path: log prices and weights at every grid point, the growth
// rates used on every step, and the Brownian increments that drove it.
struct PricePath {
    std::shared_ptr<const PathGrid> grid;
    std::size_t n = 0;
    std::size_t m = 0;
    std::size_t index = 0;
    std::vector<double> log_prices;  // (K+1) x n
    std::vector<double> weights;     // (K+1) x n
    std::vector<double> growth;      // K x n
    std::vector<double> increments;  // K x m
    PathState state;

    std::size_t steps() const noexcept { return grid->steps(); }
    double time(std::size_t k) const { return grid->time(k); }
    double dt(std::size_t k) const { return grid->dt(k); }
    std::span<const double> log_x(std::size_t k) const { return {log_prices.data() + k * n, n}; }
    std::span<const double> mu(std::size_t k) const { return {weights.data() + k * n, n}; }
    std::span<const double> gamma(std::size_t k) const { return {growth.data() + k * n, n}; }
    std::span<const double> dw(std::size_t k) const { return {increments.data() + k * m, m}; }
    double price(std::size_t k, std::size_t i) const { return std::exp(log_prices[k * n + i]); }
    double leader(std::size_t k) const {
        auto w = mu(k);
        return w[leader_index(w)];
    }
    double log_total(std::size_t k) const { return log_sum_exp(log_x(k)); }
};

// log X_i(t_{k+1}) = log X_i(t_k) + gamma_i dt + sum_v sigma_iv dW_v
inline PricePath integrate_log_euler(const MarketModel& model, std::shared_ptr<const PathGrid> grid,
                                     std::vector<double> increments, std::size_t path_index = 0) {
    const std::size_t n = model.stocks(), m = model.factors(), K = grid->steps();
    if (increments.size() != K * m) throw std::invalid_argument("increments do not match grid and factor count");

    PricePath p;
    p.grid = std::move(grid);
    p.n = n;
    p.m = m;
    p.index = path_index;
    p.increments = std::move(increments);
    p.log_prices.resize((K + 1) * n);
    p.weights.resize((K + 1) * n);
    p.growth.resize(K * n);

    const auto x0 = model.initial_prices();
    for (std::size_t i = 0; i < n; ++i) p.log_prices[i] = std::log(x0[i]);
    weights_from_log({p.log_prices.data(), n}, {p.weights.data(), n});

    const DriftRule& drift = model.drift();
    const VolatilityMatrix& vol = model.volatility();
    std::vector<double> shock(n);
    MarketState s;
    s.horizon = p.grid->horizon();

    for (std::size_t k = 0;; ++k) {
        s.step = k;
        s.t = p.grid->time(k);
        s.dt = k < K ? p.grid->dt(k) : 0.0;
        s.log_prices = {p.log_prices.data() + k * n, n};
        s.weights = {p.weights.data() + k * n, n};
        drift.observe(s, p.state);
        if (k == K) break;

        vol.apply(p.dw(k), shock);
        s.shock = shock;
        std::span<double> g(p.growth.data() + k * n, n);
        drift.growth(s, p.state, g);
        for (std::size_t i = 0; i < n; ++i)
            if (!std::isfinite(g[i])) throw integration_failure(path_index, k, "non-finite growth rate");
        s.shock = {};

        const double* y = p.log_prices.data() + k * n;
        double* y1 = p.log_prices.data() + (k + 1) * n;
        for (std::size_t i = 0; i < n; ++i) {
            y1[i] = y[i] + g[i] * s.dt + shock[i];
            if (!std::isfinite(y1[i])) throw integration_failure(path_index, k, "non-finite log price");
        }
        weights_from_log({y1, n}, {p.weights.data() + (k + 1) * n, n});
    }
    return p;
}

inline PricePath integrate_log_euler(const MarketModel& model, const FactorPaths& factors, std::size_t path_index) {
    if (factors.factors() != model.factors())
        throw std::invalid_argument("factor count " + std::to_string(factors.factors()) + " does not match model (" +
                                    std::to_string(model.factors()) + ")");
    return integrate_log_euler(model, factors.grid_ptr(), factors.increments(path_index), path_index);
}

// ---- shipped models ----

inline MarketModel constant_coefficient_market(const std::vector<double>& b, const Eigen::MatrixXd& sigma,
                                               std::vector<double> x0, double rate = 0.0) {
    VolatilityMatrix vol(sigma);
    if (b.size() != vol.stocks()) throw invalid_model("rate-of-return vector does not match stock count");
    std::vector<double> gamma(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) gamma[i] = b[i] - 0.5 * vol.variances()[i];
    return MarketModel("constant", std::move(vol), std::move(x0), std::make_shared<ConstantDrift>(std::move(gamma)),
                       rate);
}

inline MarketModel diverse_market(std::size_t n, const Eigen::MatrixXd& sigma, std::vector<double> g, double delta,
                                  double bound, std::vector<double> x0 = {}, double q_floor = 1e-8) {
    if (n < 2) throw std::invalid_argument("diverse market needs n >= 2");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
    if (!(bound > 0.0)) throw std::invalid_argument("M must be positive");
    if (!(q_floor > 0.0)) throw std::invalid_argument("Q floor must be positive");
    if (g.empty()) g.assign(n, 0.0);
    if (g.size() != n) throw std::invalid_argument("g has wrong length");
    for (double v : g)
        if (!(v >= 0.0)) throw std::invalid_argument("g_i must be non-negative");
    if (x0.empty()) x0.assign(n, 1.0);
    VolatilityMatrix vol(sigma);
    if (vol.stocks() != n) throw invalid_model("volatility does not match stock count");
    if (x0.size() != n) throw invalid_model("initial prices do not match stock count");
    double total = 0.0, top = 0.0;
    for (double x : x0) {
        total += x;
        top = std::max(top, x);
    }
    if (top / total >= 1.0 - delta)
        throw invalid_initial_condition("largest initial weight " + std::to_string(top / total) +
                                        " must be below 1 - delta = " + std::to_string(1.0 - delta));
    auto drift = std::make_shared<DiverseDrift>(std::move(g), delta, bound, q_floor);
    MarketModel model("diverse", std::move(vol), std::move(x0), std::move(drift));
    model.set_guaranteed_delta(delta);
    return model;
}

inline MarketModel ou_two_stock(double alpha, double x0, double switch_time = 1.0) {
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
    if (!(x0 > 0.0)) throw std::invalid_argument("x0 must be positive");
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(2, 2) / std::sqrt(2.0);
    VolatilityMatrix vol(sigma);
    std::vector<double> half{0.5 * vol.variances()[0], 0.5 * vol.variances()[1]};
    return MarketModel("ou", std::move(vol), {x0, x0}, std::make_shared<OuDrift>(alpha, switch_time, std::move(half)));
}

inline MarketModel patched_weakly_diverse(const MarketModel& base, double eta, double horizon) {
    auto diverse = std::dynamic_pointer_cast<const DiverseDrift>(base.drift_ptr());
    if (!diverse) throw std::invalid_argument("patched model needs a diverse base model");
    const double delta = diverse->delta();
    if (!(2.0 * delta < eta && eta < 0.5))
        throw std::invalid_argument("need 2 delta < eta < 1/2 (delta = " + std::to_string(delta) +
                                    ", eta = " + std::to_string(eta) + ")");
    if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
    const auto var = base.volatility().variances();
    std::vector<double> half(var.size());
    for (std::size_t i = 0; i < var.size(); ++i) half[i] = 0.5 * var[i];
    std::vector<double> x0(base.initial_prices().begin(), base.initial_prices().end());
    return MarketModel("patched", base.volatility(), std::move(x0),
                       std::make_shared<PatchedDrift>(diverse, eta, horizon, std::move(half)), base.rate());
}

inline MarketModel instantaneous_dominance_market(double alpha, double eta, double eta_inner, double strength,
                                                  double pole_floor = 1e-12) {
    if (!(alpha > 0.0 && alpha < 0.5)) throw std::invalid_argument("alpha must lie in (0, 1/2)");
    if (!(eta_inner > 0.0 && eta_inner < eta)) throw std::invalid_argument("need 0 < eta' < eta");
    if (!(strength > 0.0)) throw std::invalid_argument("c must be positive");
    return MarketModel("dominance", VolatilityMatrix(Eigen::MatrixXd::Identity(2, 2)), {1.0, 1.0},
                       std::make_shared<DominanceDrift>(alpha, eta, eta_inner, strength, pole_floor));
}

} // namespace spt
