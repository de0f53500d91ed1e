#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spt {

// Time grid t_0 = 0 < t_1 < ... < t_K = T.
class PathGrid {
public:
    PathGrid() = default;
    explicit PathGrid(std::vector<double> times, bool uniform)
        : times_(std::move(times)), uniform_(uniform) {
        if (times_.size() < 2) throw std::invalid_argument("grid needs at least one step");
        if (times_.front() != 0.0) throw std::invalid_argument("grid must start at 0");
        for (std::size_t k = 1; k < times_.size(); ++k)
            if (!(times_[k] > times_[k - 1])) throw std::invalid_argument("grid times must increase");
    }

    std::size_t steps() const noexcept { return times_.size() - 1; }
    double horizon() const noexcept { return times_.back(); }
    double time(std::size_t k) const { return times_[k]; }
    double dt(std::size_t k) const { return times_[k + 1] - times_[k]; }
    // Nominal spacing of a uniform grid.
    double nominal_dt() const noexcept { return horizon() / static_cast<double>(steps()); }
    bool uniform() const noexcept { return uniform_; }
    std::span<const double> times() const noexcept { return times_; }

    // Every factor-th point. Used for refinement studies on a shared Brownian path.
    PathGrid coarsen(std::size_t factor) const {
        if (factor == 0 || steps() % factor != 0)
            throw std::invalid_argument("coarsening factor must divide the step count");
        std::vector<double> t;
        t.reserve(steps() / factor + 1);
        for (std::size_t k = 0; k <= steps(); k += factor) t.push_back(times_[k]);
        return PathGrid(std::move(t), uniform_);
    }

    // Index of the first grid time >= t (steps() + 1 when t > T).
    std::size_t first_index_at_or_after(double t) const {
        std::size_t lo = 0, hi = times_.size();
        while (lo < hi) {
            std::size_t mid = (lo + hi) / 2;
            if (times_[mid] < t) lo = mid + 1; else hi = mid;
        }
        return lo;
    }

private:
    std::vector<double> times_{0.0, 1.0};
    bool uniform_ = true;
};

inline PathGrid make_grid(double T, std::size_t n_steps) {
    if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("horizon must be positive");
    if (n_steps == 0) throw std::invalid_argument("n_steps must be at least 1");
    std::vector<double> t(n_steps + 1);
    for (std::size_t k = 0; k <= n_steps; ++k)
        t[k] = T * static_cast<double>(k) / static_cast<double>(n_steps);
    t[n_steps] = T;
    return PathGrid(std::move(t), true);
}

// t_0 = 0, t_k = T q^(K-k) for k >= 1, with t_1 = first_time.
inline PathGrid make_geometric_grid(double T, std::size_t n_steps, double first_time) {
    if (!(T > 0.0)) throw std::invalid_argument("horizon must be positive");
    if (n_steps < 2) throw std::invalid_argument("geometric grid needs at least two steps");
    if (!(first_time > 0.0 && first_time < T)) throw std::invalid_argument("first_time must lie in (0, T)");
    const double K = static_cast<double>(n_steps);
    const double log_q = std::log(first_time / T) / (K - 1.0);
    std::vector<double> t(n_steps + 1);
    t[0] = 0.0;
    for (std::size_t k = 1; k < n_steps; ++k)
        t[k] = T * std::exp(log_q * (K - static_cast<double>(k)));
    t[1] = first_time;
    t[n_steps] = T;
    return PathGrid(std::move(t), false);
}

// Per-path seed: std::seed_seq over the 32-bit halves of (master_seed, path_index).
inline std::mt19937_64 path_engine(std::uint64_t master_seed, std::uint64_t path_index) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(path_index), static_cast<std::uint32_t>(path_index >> 32)};
    return std::mt19937_64(seq);
}

// Brownian increments for n_paths paths of m factors. Nothing is stored: each
// path is regenerated from its own seed on demand, so the object is immutable
// and any evaluation order gives the same numbers.
class FactorPaths {
public:
    FactorPaths(std::shared_ptr<const PathGrid> grid, std::size_t m, std::size_t n_paths, std::uint64_t master_seed)
        : fine_(std::move(grid)), view_(fine_), m_(m), n_paths_(n_paths), seed_(master_seed) {
        if (!fine_) throw std::invalid_argument("grid is null");
        if (m == 0) throw std::invalid_argument("factor count must be at least 1");
        if (n_paths == 0) throw std::invalid_argument("path count must be at least 1");
    }

    std::size_t factors() const noexcept { return m_; }
    std::size_t paths() const noexcept { return n_paths_; }
    std::uint64_t master_seed() const noexcept { return seed_; }
    const PathGrid& grid() const noexcept { return *view_; }
    std::shared_ptr<const PathGrid> grid_ptr() const noexcept { return view_; }
    std::size_t aggregation() const noexcept { return block_; }

    // Same Brownian paths observed on every factor-th grid point.
    FactorPaths coarsened(std::size_t factor) const {
        FactorPaths out = *this;
        out.block_ = block_ * factor;
        out.view_ = std::make_shared<const PathGrid>(fine_->coarsen(out.block_));
        return out;
    }

    // Row-major steps x m.
    void increments(std::size_t path, std::span<double> out) const {
        if (path >= n_paths_) throw std::out_of_range("path index " + std::to_string(path));
        const std::size_t steps = view_->steps();
        if (out.size() != steps * m_) throw std::invalid_argument("increment buffer has wrong size");
        auto eng = path_engine(seed_, path);
        std::normal_distribution<double> normal(0.0, 1.0);
        if (block_ == 1) {
            for (std::size_t k = 0; k < steps; ++k) {
                const double s = std::sqrt(fine_->dt(k));
                for (std::size_t v = 0; v < m_; ++v) out[k * m_ + v] = s * normal(eng);
            }
            return;
        }
        std::size_t fk = 0;
        for (std::size_t k = 0; k < steps; ++k) {
            for (std::size_t v = 0; v < m_; ++v) out[k * m_ + v] = 0.0;
            for (std::size_t j = 0; j < block_; ++j, ++fk) {
                const double s = std::sqrt(fine_->dt(fk));
                for (std::size_t v = 0; v < m_; ++v) out[k * m_ + v] += s * normal(eng);
            }
        }
    }

    std::vector<double> increments(std::size_t path) const {
        std::vector<double> out(view_->steps() * m_);
        increments(path, out);
        return out;
    }

private:
    std::shared_ptr<const PathGrid> fine_;
    std::shared_ptr<const PathGrid> view_;
    std::size_t m_;
    std::size_t n_paths_;
    std::uint64_t seed_;
    std::size_t block_ = 1;
};

inline FactorPaths generate_factors(const PathGrid& grid, std::size_t m, std::size_t n_paths, std::uint64_t master_seed) {
    return FactorPaths(std::make_shared<const PathGrid>(grid), m, n_paths, master_seed);
}

} // namespace spt
