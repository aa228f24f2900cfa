#pragma once
// Small numeric kernels used across the pipeline: exact summation, linear
// interpolation quantiles, population moments and an OLS slope.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "trustspeech/errors.hpp"

namespace trustspeech {

// Exact (correctly rounded) sum of doubles, Shewchuk-style partials as in
// Python's math.fsum. The result is independent of input order, which makes
// weighted-statistics identities (condition duplication leaves mu and sigma
// unchanged) hold exactly instead of approximately.
class ExactSum {
public:
    void add(double x) {
        std::size_t used = 0;
        for (double p : partials_) {
            if (std::abs(x) < std::abs(p)) std::swap(x, p);
            const double hi = x + p;
            const double lo = p - (hi - x);
            if (lo != 0.0) partials_[used++] = lo;
            x = hi;
        }
        partials_.resize(used);
        partials_.push_back(x);
    }

    double value() const {
        double total = 0.0;
        for (double p : partials_) total += p;
        return total;
    }

private:
    std::vector<double> partials_;
};

inline double exact_sum(std::span<const double> xs) {
    ExactSum s;
    for (double x : xs) s.add(x);
    return s.value();
}

inline double exact_mean(std::span<const double> xs) {
    if (xs.empty()) throw ArgumentError("exact_mean: empty input");
    return exact_sum(xs) / static_cast<double>(xs.size());
}

// Linear-interpolation quantile: h = (n-1)*p, interpolate between the
// floor and ceil order statistics. `sorted` must be ascending.
inline double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw ArgumentError("quantile_sorted: empty input");
    if (p <= 0.0) return sorted.front();
    if (p >= 1.0) return sorted.back();
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(h));
    if (lo == hi) return sorted[lo];
    const double w = h - static_cast<double>(lo);
    return sorted[lo] + w * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> xs, double p) {
    if (xs.empty()) throw ArgumentError("quantile: empty input");
    std::sort(xs.begin(), xs.end());
    return quantile_sorted(xs, p);
}

inline double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

// Population (uncorrected) standard deviation.
inline double population_std(std::span<const double> xs) {
    if (xs.empty()) throw ArgumentError("population_std: empty input");
    const double mu = exact_mean(xs);
    ExactSum s;
    for (double x : xs) s.add((x - mu) * (x - mu));
    return std::sqrt(s.value() / static_cast<double>(xs.size()));
}

// Ordinary least-squares slope of y against x. Needs >= 2 points and
// non-degenerate x.
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ArgumentError("ols_slope: size mismatch");
    if (x.size() < 2) throw ArgumentError("ols_slope: need at least 2 points");
    const double mx = exact_mean(x);
    const double my = exact_mean(y);
    ExactSum sxy, sxx;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy.add((x[i] - mx) * (y[i] - my));
        sxx.add((x[i] - mx) * (x[i] - mx));
    }
    const double den = sxx.value();
    if (den == 0.0) throw ArgumentError("ols_slope: degenerate x values");
    return sxy.value() / den;
}

}  // namespace trustspeech
