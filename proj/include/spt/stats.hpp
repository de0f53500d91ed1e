#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

namespace spt {

// Neumaier summation. Order dependent, so callers reduce in index order.
class CompensatedSum {
public:
    void add(double x) noexcept {
        double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            c_ += (sum_ - t) + x;
        else
            c_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + c_; }

private:
    double sum_ = 0.0;
    double c_ = 0.0;
};

struct MeanEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    double stddev = 0.0;
    std::size_t count = 0;
};

// Two-pass mean and standard error of the mean.
inline MeanEstimate estimate_mean(std::span<const double> xs) {
    MeanEstimate out;
    out.count = xs.size();
    if (xs.empty()) {
        out.mean = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    CompensatedSum s;
    for (double x : xs) s.add(x);
    out.mean = s.value() / static_cast<double>(xs.size());
    if (xs.size() < 2) return out;
    CompensatedSum ss;
    for (double x : xs) ss.add((x - out.mean) * (x - out.mean));
    double var = ss.value() / static_cast<double>(xs.size() - 1);
    out.stddev = std::sqrt(var);
    out.std_error = out.stddev / std::sqrt(static_cast<double>(xs.size()));
    return out;
}

inline double root_mean_square(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    CompensatedSum s;
    for (double x : xs) s.add(x * x);
    return std::sqrt(s.value() / static_cast<double>(xs.size()));
}

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

} // namespace spt
