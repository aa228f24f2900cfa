#pragma once
// Weighted per-speaker and per-question normalization plus series-level
// quantile summaries.
//
// The weighting makes the statistics invariant to condition imbalance:
// mu = (mean_L + mean_H)/2 and var = sum w_i (x_i - mu)^2 with
// w_i = 1/(2 n_{c_i}). All sums run through exact summation and the weights
// are powers-of-two rescalings under duplication, so duplicating every
// sample of one condition leaves mu and sigma bit-identical.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "trustspeech/corpus.hpp"
#include "trustspeech/errors.hpp"
#include "trustspeech/features.hpp"
#include "trustspeech/numeric.hpp"

namespace trustspeech {

struct NormalizationStats {
    std::string scope;  // "speaker" or "question"
    std::string key;    // speaker_id or question_id
    std::array<double, kNumFeatures> mu{};
    std::array<double, kNumFeatures> sigma{};
    int n_rows_l = 0;  // rows per condition (feature presence may be lower)
    int n_rows_h = 0;
    bool fallback = false;  // question scope only: identity stats substituted
};

struct WeightedRow {
    const FeatureVector* fv;
    Condition condition;
};

namespace detail {

// Per-feature weighted stats over the present (non-missing) values. A
// feature absent from one condition falls back to the present side's mean
// and half-weighted spread; absent from both, to mu=0 sigma=0 (z becomes 0).
inline void weighted_feature_stats(const std::vector<WeightedRow>& rows, std::size_t f,
                                   double& mu_out, double& sigma_out) {
    std::vector<double> xs_l, xs_h;
    for (const auto& row : rows) {
        if (row.fv->missing[f]) continue;
        (row.condition == Condition::L ? xs_l : xs_h).push_back(row.fv->values[f]);
    }
    if (xs_l.empty() && xs_h.empty()) {
        mu_out = 0.0;
        sigma_out = 0.0;
        return;
    }
    double mu;
    if (xs_l.empty() || xs_h.empty()) {
        mu = exact_mean(xs_l.empty() ? xs_h : xs_l);
    } else {
        mu = (exact_mean(xs_l) + exact_mean(xs_h)) / 2.0;
    }
    ExactSum var;
    const double w_l = xs_l.empty() ? 0.0 : 1.0 / (2.0 * static_cast<double>(xs_l.size()));
    const double w_h = xs_h.empty() ? 0.0 : 1.0 / (2.0 * static_cast<double>(xs_h.size()));
    for (double x : xs_l) {
        const double d = x - mu;
        var.add(w_l * (d * d));
    }
    for (double x : xs_h) {
        const double d = x - mu;
        var.add(w_h * (d * d));
    }
    mu_out = mu;
    sigma_out = std::sqrt(var.value());
}

inline NormalizationStats weighted_stats(const std::vector<WeightedRow>& rows,
                                         std::string scope, std::string key) {
    NormalizationStats stats;
    stats.scope = std::move(scope);
    stats.key = std::move(key);
    for (const auto& row : rows)
        (row.condition == Condition::L ? stats.n_rows_l : stats.n_rows_h) += 1;
    for (std::size_t f = 0; f < kNumFeatures; ++f)
        weighted_feature_stats(rows, f, stats.mu[f], stats.sigma[f]);
    return stats;
}

}  // namespace detail

inline NormalizationStats speaker_stats(const std::vector<WeightedRow>& rows,
                                        const std::string& speaker_id) {
    int n_l = 0, n_h = 0;
    for (const auto& row : rows) (row.condition == Condition::L ? n_l : n_h) += 1;
    if (n_l == 0 || n_h == 0)
        throw DataError("speaker_stats: speaker " + speaker_id + " has no " +
                        (n_l == 0 ? std::string("L") : std::string("H")) + " samples");
    return detail::weighted_stats(rows, "speaker", speaker_id);
}

// Question-scope stats over training speakers. A question seen in only one
// condition gets identity stats (mu=0, sigma=1) so its test samples pass
// through unchanged; callers may log stats.fallback.
inline NormalizationStats question_stats(const std::vector<WeightedRow>& rows,
                                         const std::string& question_id) {
    int n_l = 0, n_h = 0;
    for (const auto& row : rows) (row.condition == Condition::L ? n_l : n_h) += 1;
    if (n_l == 0 || n_h == 0) {
        NormalizationStats stats;
        stats.scope = "question";
        stats.key = question_id;
        stats.mu.fill(0.0);
        stats.sigma.fill(1.0);
        stats.n_rows_l = n_l;
        stats.n_rows_h = n_h;
        stats.fallback = true;
        return stats;
    }
    return detail::weighted_stats(rows, "question", question_id);
}

// z = (x - mu)/sigma; sigma = 0 passes 0 through. Missing features are
// imputed to z = 0 (the speaker-typical value) with the flag preserved, and
// stay 0 through any later normalization stage.
inline FeatureVector apply_z(const FeatureVector& v, const NormalizationStats& stats) {
    FeatureVector out;
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        out.missing[f] = v.missing[f];
        if (v.missing[f]) {
            out.values[f] = 0.0;
        } else if (stats.sigma[f] == 0.0) {
            out.values[f] = 0.0;
        } else {
            out.values[f] = (v.values[f] - stats.mu[f]) / stats.sigma[f];
        }
    }
    return out;
}

inline constexpr std::size_t kNumSeriesFeatures = 3 * kNumFeatures;  // 48

inline constexpr std::array<double, 3> kSeriesQuantiles = {0.25, 0.50, 0.75};

// Per-feature 25/50/75% quantiles across a series' questions, feature-major:
// (f0.q25, f0.q50, f0.q75, f1.q25, ...).
inline std::array<double, kNumSeriesFeatures> summarize_series(
    const std::vector<std::array<double, kNumFeatures>>& questions) {
    if (questions.empty()) throw ArgumentError("summarize_series: empty series");
    std::array<double, kNumSeriesFeatures> out{};
    std::vector<double> column(questions.size());
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        for (std::size_t q = 0; q < questions.size(); ++q) column[q] = questions[q][f];
        std::sort(column.begin(), column.end());
        for (std::size_t k = 0; k < kSeriesQuantiles.size(); ++k)
            out[f * 3 + k] = quantile_sorted(column, kSeriesQuantiles[k]);
    }
    return out;
}

// Names for the 48 series-level inputs, e.g. "f0_median.q50".
inline std::vector<std::string> series_feature_names() {
    std::vector<std::string> names;
    names.reserve(kNumSeriesFeatures);
    for (std::size_t f = 0; f < kNumFeatures; ++f)
        for (double q : kSeriesQuantiles)
            names.push_back(std::string(kFeatureNames[f]) + ".q" +
                            std::to_string(static_cast<int>(q * 100)));
    return names;
}

inline nlohmann::json stats_to_json(const NormalizationStats& s) {
    nlohmann::json j;
    j["scope"] = s.scope;
    j["key"] = s.key;
    j["mu"] = s.mu;
    j["sigma"] = s.sigma;
    j["n_L"] = s.n_rows_l;
    j["n_H"] = s.n_rows_h;
    return j;
}

}  // namespace trustspeech
