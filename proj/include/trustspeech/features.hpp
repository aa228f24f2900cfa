#pragma once
// The 16 utterance-level features: 3 speaking-rate, 7 pitch, 2 energy, and 4
// formant measures. Pitch and formant statistics run on pause-masked tracks;
// features that cannot be computed (no voiced frames, too few defined frames
// for a regression) carry an explicit missing flag so the vector length stays
// fixed for the classifier.

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trustspeech/alignment.hpp"
#include "trustspeech/errors.hpp"
#include "trustspeech/numeric.hpp"
#include "trustspeech/signal.hpp"
#include "trustspeech/syllabify.hpp"
#include "trustspeech/wave.hpp"

namespace trustspeech {

inline constexpr std::size_t kNumFeatures = 16;

inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "syllrate_full",    "syllrate_speech",   "pause_speech_ratio", "f0_range",
    "f0_median",        "f0_regmed_mean",    "f0_regmed_std",      "f0_regrange_mean",
    "f0_regrange_std",  "f0_final_slope",    "energy_range",       "energy_final_slope",
    "f1_regrange_mean", "f1_regrange_std",   "f2_regrange_mean",   "f2_regrange_std"};

enum Feature : std::size_t {
    kSyllrateFull = 0,
    kSyllrateSpeech,
    kPauseSpeechRatio,
    kF0Range,
    kF0Median,
    kF0RegmedMean,
    kF0RegmedStd,
    kF0RegrangeMean,
    kF0RegrangeStd,
    kF0FinalSlope,
    kEnergyRange,
    kEnergyFinalSlope,
    kF1RegrangeMean,
    kF1RegrangeStd,
    kF2RegrangeMean,
    kF2RegrangeStd,
};

struct FeatureVector {
    std::array<double, kNumFeatures> values{};  // NaN where missing
    std::array<bool, kNumFeatures> missing{};

    FeatureVector() {
        values.fill(std::numeric_limits<double>::quiet_NaN());
        missing.fill(true);
    }
    void set(std::size_t i, double v) {
        values[i] = v;
        missing[i] = false;
    }
};

struct RateFeatures {
    double syllrate_full;
    double syllrate_speech;
    double pause_speech_ratio;
};

inline RateFeatures rate_features(int n_syll, const SpeechSegmentation& seg) {
    if (n_syll < 1) throw ArgumentError("rate_features: syllable count must be >= 1");
    if (!(seg.t_speech > 0.0))
        throw DataError("rate_features: utterance has zero speech duration");
    const double n = static_cast<double>(n_syll);
    return {n / seg.t_full, n / seg.t_speech, seg.t_pause / seg.t_speech};
}

inline std::optional<double> quantile_range(std::vector<double> values, double lo = 0.05,
                                            double hi = 0.95) {
    if (values.empty()) return std::nullopt;
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, hi) - quantile_sorted(values, lo);
}

struct RegionStats {
    double regmed_mean;
    double regmed_std;
    double regrange_mean;
    double regrange_std;
};

inline std::optional<RegionStats> region_stats(const Track& track,
                                               const std::vector<TrackRegion>& regions) {
    if (regions.empty()) return std::nullopt;
    std::vector<double> medians, ranges;
    medians.reserve(regions.size());
    ranges.reserve(regions.size());
    for (const auto& region : regions) {
        std::vector<double> vals;
        vals.reserve(region.frames.size());
        for (std::size_t i : region.frames) vals.push_back(track.values[i]);
        std::sort(vals.begin(), vals.end());
        medians.push_back(quantile_sorted(vals, 0.5));
        ranges.push_back(vals.back() - vals.front());
    }
    return RegionStats{exact_mean(medians), population_std(medians), exact_mean(ranges),
                       population_std(ranges)};
}

// OLS slope (per second) over the last min(n_frames, defined) frames.
inline std::optional<double> final_slope(const Track& track, int n_frames = 25) {
    std::vector<double> times, vals;
    for (std::size_t i = 0; i < track.size(); ++i) {
        if (!track.defined[i]) continue;
        times.push_back(track.time_of(i));
        vals.push_back(track.values[i]);
    }
    if (times.size() < 2) return std::nullopt;
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(n_frames), times.size());
    const std::size_t off = times.size() - k;
    return ols_slope({times.data() + off, k}, {vals.data() + off, k});
}

// Full per-utterance pipeline: segmentation, syllable count, the three
// tracks masked to speech, and the assembled 16-feature vector.
inline FeatureVector extract_all(const Waveform& audio, const std::vector<WordInterval>& words,
                                 const std::string& transcript, const TrackerConfig& cfg = {}) {
    const SpeechSegmentation seg = segment_speech(words);
    const int n_syll = count_syllables(transcript);

    FeatureVector fv;
    const RateFeatures rate = rate_features(n_syll, seg);
    fv.set(kSyllrateFull, rate.syllrate_full);
    fv.set(kSyllrateSpeech, rate.syllrate_speech);
    fv.set(kPauseSpeechRatio, rate.pause_speech_ratio);

    const Track f0 = mask_track(track_f0(audio, cfg), seg.speech_intervals);
    // Energy and formants inherit the voicing decision from the F0 tracker,
    // then everything is masked to the aligned speech span.
    Track energy = track_energy(audio, cfg);
    for (std::size_t i = 0; i < energy.size(); ++i) {
        if (!f0.defined[i]) {
            energy.defined[i] = 0;
            energy.values[i] = std::numeric_limits<double>::quiet_NaN();
        }
    }
    energy = mask_track(energy, seg.speech_intervals);
    FormantTracks formants = track_formants(audio, f0, cfg);
    formants.f1 = mask_track(formants.f1, seg.speech_intervals);
    formants.f2 = mask_track(formants.f2, seg.speech_intervals);

    const std::vector<double> f0_vals = defined_values(f0);
    if (!f0_vals.empty()) {
        fv.set(kF0Range, *quantile_range(f0_vals));
        fv.set(kF0Median, median(f0_vals));
        if (auto rs = region_stats(f0, split_regions(f0))) {
            fv.set(kF0RegmedMean, rs->regmed_mean);
            fv.set(kF0RegmedStd, rs->regmed_std);
            fv.set(kF0RegrangeMean, rs->regrange_mean);
            fv.set(kF0RegrangeStd, rs->regrange_std);
        }
        if (auto slope = final_slope(f0)) fv.set(kF0FinalSlope, *slope);
    }

    const std::vector<double> energy_vals = defined_values(energy);
    if (!energy_vals.empty()) fv.set(kEnergyRange, *quantile_range(energy_vals));
    if (auto slope = final_slope(energy)) fv.set(kEnergyFinalSlope, *slope);

    if (auto rs = region_stats(formants.f1, split_regions(formants.f1))) {
        fv.set(kF1RegrangeMean, rs->regrange_mean);
        fv.set(kF1RegrangeStd, rs->regrange_std);
    }
    if (auto rs = region_stats(formants.f2, split_regions(formants.f2))) {
        fv.set(kF2RegrangeMean, rs->regrange_mean);
        fv.set(kF2RegrangeStd, rs->regrange_std);
    }
    return fv;
}

}  // namespace trustspeech
