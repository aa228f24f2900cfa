#pragma once
// Frame-level acoustic analysis: pitch, energy, and formant tracks on a
// shared 50 ms / 10 ms frame grid, plus the masking and region-splitting
// operations the feature extractor builds on.
//
// The pitch tracker is a normalized-autocorrelation design. Each frame is
// scored over a lag range wider than the reporting range (down to half the
// minimum period and up to 1.25x the maximum) so that out-of-range
// fundamentals produce their true peak inside the searched range; the frame
// is then rejected instead of being folded onto a subharmonic. Among local
// maxima that clear the voicing threshold, the smallest lag within 90% of
// the best score wins, which resolves period-multiple ambiguity for
// harmonically rich voices.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "trustspeech/alignment.hpp"
#include "trustspeech/errors.hpp"
#include "trustspeech/wave.hpp"

namespace trustspeech {

struct TrackerConfig {
    double f0_min_hz = 100.0;          // reporting range lower bound
    double f0_max_hz = 620.0;          // reporting range upper bound
    double frame_length_s = 0.050;
    double frame_shift_s = 0.010;
    double voicing_threshold = 0.45;   // minimum normalized autocorrelation
    double energy_floor = 1e-10;       // mean-square floor before the log
    int lpc_order = 12;
    double formant_rate_hz = 10000.0;  // analysis rate for LPC
    double formant_window_s = 0.025;
    double preemphasis = 0.97;
    double formant_max_bandwidth_hz = 400.0;
    double formant_min_hz = 90.0;
    double formant_max_hz = 4000.0;
};

// One value per frame; undefined frames hold NaN and defined=0.
struct Track {
    std::vector<double> values;
    std::vector<std::uint8_t> defined;
    double t0 = 0.0;            // center time of frame 0, seconds
    double frame_shift = 0.0;   // seconds between frame centers
    double frame_length = 0.0;  // analysis window, seconds

    std::size_t size() const { return values.size(); }
    double time_of(std::size_t i) const { return t0 + static_cast<double>(i) * frame_shift; }
};

struct FormantTracks {
    Track f1;
    Track f2;  // shares the defined pattern of f1
};

// Defined-frame indices forming one analysis region. Frames between two
// members may be undefined (gaps up to the merge threshold are bridged);
// statistics run over the listed frames only.
struct TrackRegion {
    std::vector<std::size_t> frames;
};

namespace detail {

struct FrameGrid {
    std::size_t frame_len;    // samples
    std::size_t frame_shift;  // samples
    std::size_t n_frames;
    double t0;
};

inline void validate_config(const TrackerConfig& cfg, double sample_rate) {
    if (!(sample_rate > 0.0)) throw ArgumentError("tracker: sample_rate must be positive");
    if (!(0.0 < cfg.f0_min_hz && cfg.f0_min_hz < cfg.f0_max_hz &&
          cfg.f0_max_hz < sample_rate / 2.0))
        throw ArgumentError("tracker: need 0 < f0_min < f0_max < sample_rate/2");
    if (!(cfg.frame_shift_s > 0.0 && cfg.frame_shift_s <= cfg.frame_length_s))
        throw ArgumentError("tracker: need 0 < frame_shift <= frame_length");
    if (!(cfg.voicing_threshold > 0.0 && cfg.voicing_threshold < 1.0))
        throw ArgumentError("tracker: voicing_threshold must lie in (0, 1)");
    if (cfg.lpc_order < 2) throw ArgumentError("tracker: lpc_order must be >= 2");
}

inline FrameGrid make_grid(std::size_t n_samples, double sample_rate, const TrackerConfig& cfg) {
    validate_config(cfg, sample_rate);
    FrameGrid g{};
    g.frame_len = static_cast<std::size_t>(std::lround(cfg.frame_length_s * sample_rate));
    g.frame_shift = static_cast<std::size_t>(std::lround(cfg.frame_shift_s * sample_rate));
    if (g.frame_len == 0 || g.frame_shift == 0)
        throw ArgumentError("tracker: frame length and shift must be positive");
    if (n_samples < g.frame_len)
        throw DataError("tracker: waveform shorter than one analysis frame");
    g.n_frames = (n_samples - g.frame_len) / g.frame_shift + 1;
    g.t0 = static_cast<double>(g.frame_len) / 2.0 / sample_rate;
    return g;
}

inline std::vector<double> hamming(std::size_t n) {
    std::vector<double> w(n);
    if (n == 1) {
        w[0] = 1.0;
        return w;
    }
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                      static_cast<double>(n - 1));
    return w;
}

// Zero-phase windowed-sinc lowpass, half_width taps each side.
inline std::vector<double> fir_lowpass(const std::vector<double>& x, double sample_rate,
                                       double cutoff_hz, int half_width = 48) {
    const int m = half_width;
    std::vector<double> h(2 * m + 1);
    const double fc = cutoff_hz / sample_rate;  // normalized (cycles/sample)
    double sum = 0.0;
    for (int k = -m; k <= m; ++k) {
        const double t = static_cast<double>(k);
        double v = k == 0 ? 2.0 * fc
                          : std::sin(2.0 * std::numbers::pi * fc * t) / (std::numbers::pi * t);
        v *= 0.54 + 0.46 * std::cos(std::numbers::pi * t / m);  // Hamming taper
        h[static_cast<std::size_t>(k + m)] = v;
        sum += v;
    }
    for (double& v : h) v /= sum;  // unity DC gain

    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
    std::vector<double> y(x.size(), 0.0);
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double acc = 0.0;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(-m, -i);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(m, n - 1 - i);
        for (std::ptrdiff_t k = lo; k <= hi; ++k)
            acc += x[static_cast<std::size_t>(i + k)] * h[static_cast<std::size_t>(k + m)];
        y[static_cast<std::size_t>(i)] = acc;
    }
    return y;
}

// Windowed-sinc fractional resampler with anti-alias cutoff at 45% of the
// lower of the two rates.
inline Waveform resample(const Waveform& in, double target_rate) {
    if (target_rate <= 0.0) throw ArgumentError("resample: target rate must be positive");
    if (in.sample_rate == target_rate) return in;
    const double fs = in.sample_rate;
    const double fc = 0.45 * std::min(fs, target_rate);
    const double half_width_t = 16.0 / std::min(fs, target_rate);  // seconds per side
    const std::ptrdiff_t n_in = static_cast<std::ptrdiff_t>(in.samples.size());
    const std::size_t n_out =
        static_cast<std::size_t>(std::floor(static_cast<double>(n_in) / fs * target_rate));

    Waveform out;
    out.sample_rate = target_rate;
    out.samples.resize(n_out);
    for (std::size_t m = 0; m < n_out; ++m) {
        const double t = static_cast<double>(m) / target_rate;
        const std::ptrdiff_t lo =
            std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil((t - half_width_t) * fs)));
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(
            n_in - 1, static_cast<std::ptrdiff_t>(std::floor((t + half_width_t) * fs)));
        double acc = 0.0;
        for (std::ptrdiff_t n = lo; n <= hi; ++n) {
            const double u = t - static_cast<double>(n) / fs;
            double v;
            if (std::abs(u) < 1e-12) {
                v = 2.0 * fc;
            } else {
                v = std::sin(2.0 * std::numbers::pi * fc * u) / (std::numbers::pi * u);
            }
            v *= 0.5 + 0.5 * std::cos(std::numbers::pi * u / half_width_t);  // Hann taper
            acc += in.samples[static_cast<std::size_t>(n)] * v;
        }
        out.samples[m] = acc / fs;
    }
    return out;
}

// Levinson-Durbin recursion on autocorrelation r[0..p]. Returns predictor
// coefficients a[1..p] (x[n] ~ sum a[k] x[n-k]) or empty on failure.
inline std::vector<double> levinson_durbin(const std::vector<double>& r, int p) {
    std::vector<double> a(static_cast<std::size_t>(p) + 1, 0.0);
    std::vector<double> prev(a);
    double err = r[0];
    if (!(err > 0.0)) return {};
    for (int i = 1; i <= p; ++i) {
        double acc = r[static_cast<std::size_t>(i)];
        for (int j = 1; j < i; ++j) acc -= a[static_cast<std::size_t>(j)] * r[static_cast<std::size_t>(i - j)];
        const double k = acc / err;
        prev = a;
        a[static_cast<std::size_t>(i)] = k;
        for (int j = 1; j < i; ++j)
            a[static_cast<std::size_t>(j)] =
                prev[static_cast<std::size_t>(j)] - k * prev[static_cast<std::size_t>(i - j)];
        err *= 1.0 - k * k;
        if (!(err > 0.0)) return {};
    }
    return a;
}

// Durand-Kerner root finder for a monic polynomial with real coefficients
// c[0..p-1]: z^p + c[0] z^{p-1} + ... + c[p-1].
inline std::vector<std::complex<double>> polynomial_roots(const std::vector<double>& c) {
    using C = std::complex<double>;
    const std::size_t p = c.size();
    std::vector<C> roots(p);
    const C seed(0.4, 0.9);
    C acc(1.0, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
        acc *= seed;
        roots[i] = acc;
    }
    auto eval = [&](C z) {
        C v(1.0, 0.0);
        for (std::size_t i = 0; i < p; ++i) v = v * z + C(c[i], 0.0);
        return v;
    };
    for (int iter = 0; iter < 200; ++iter) {
        double worst = 0.0;
        for (std::size_t i = 0; i < p; ++i) {
            C denom(1.0, 0.0);
            for (std::size_t j = 0; j < p; ++j)
                if (j != i) denom *= roots[i] - roots[j];
            if (std::abs(denom) < 1e-300) denom = C(1e-300, 0.0);
            const C delta = eval(roots[i]) / denom;
            roots[i] -= delta;
            worst = std::max(worst, std::abs(delta));
        }
        if (worst < 1e-12) break;
    }
    return roots;
}

}  // namespace detail

inline Track track_f0(const Waveform& w, const TrackerConfig& cfg = {}) {
    using namespace detail;
    if (cfg.f0_min_hz <= 0.0 || cfg.f0_max_hz <= cfg.f0_min_hz)
        throw ArgumentError("track_f0: invalid f0 range");
    const double fs = w.sample_rate;
    const FrameGrid grid = make_grid(w.samples.size(), fs, cfg);

    Track track;
    track.t0 = grid.t0;
    track.frame_shift = cfg.frame_shift_s;
    track.frame_length = cfg.frame_length_s;
    track.values.assign(grid.n_frames, std::numeric_limits<double>::quiet_NaN());
    track.defined.assign(grid.n_frames, 0);

    // Mild lowpass keeps the periodicity peak clean of formant structure.
    const std::vector<double> x = fir_lowpass(w.samples, fs, std::min(1300.0, 0.45 * fs));

    // Search lags for 0.8*f0_min up to 2*f0_max so out-of-range fundamentals
    // are seen at their true period and rejected, not octave-folded.
    const std::size_t lag_min =
        std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(fs / (2.0 * cfg.f0_max_hz))));
    const std::size_t lag_max = static_cast<std::size_t>(std::ceil(fs / (0.8 * cfg.f0_min_hz)));
    if (lag_max + 8 >= grid.frame_len)
        throw ArgumentError("track_f0: frame too short for the configured f0 range");
    const std::size_t win = grid.frame_len - lag_max;  // correlation window

    std::vector<double> ncc(lag_max + 2, 0.0);
    std::vector<double> sq_prefix(grid.frame_len + 1, 0.0);
    for (std::size_t f = 0; f < grid.n_frames; ++f) {
        const double* frame = x.data() + f * grid.frame_shift;

        double mean = 0.0;
        for (std::size_t i = 0; i < grid.frame_len; ++i) mean += frame[i];
        mean /= static_cast<double>(grid.frame_len);

        sq_prefix[0] = 0.0;
        for (std::size_t i = 0; i < grid.frame_len; ++i) {
            const double v = frame[i] - mean;
            sq_prefix[i + 1] = sq_prefix[i] + v * v;
        }
        const double e0 = sq_prefix[win];
        if (e0 < 1e-12) continue;  // silence

        double best = 0.0;
        for (std::size_t lag = lag_min; lag <= lag_max + 1 && lag + win <= grid.frame_len; ++lag) {
            double dot = 0.0;
            for (std::size_t i = 0; i < win; ++i)
                dot += (frame[i] - mean) * (frame[i + lag] - mean);
            const double el = sq_prefix[lag + win] - sq_prefix[lag];
            ncc[lag] = el > 1e-12 ? dot / std::sqrt(e0 * el) : 0.0;
            best = std::max(best, ncc[lag]);
        }
        if (best < cfg.voicing_threshold) continue;

        // Smallest local maximum within 90% of the best score.
        std::size_t chosen = 0;
        for (std::size_t lag = lag_min + 1; lag <= lag_max; ++lag) {
            if (ncc[lag] > ncc[lag - 1] && ncc[lag] >= ncc[lag + 1] &&
                ncc[lag] >= cfg.voicing_threshold && ncc[lag] >= 0.9 * best) {
                chosen = lag;
                break;
            }
        }
        if (chosen == 0) continue;

        // Parabolic interpolation around the integer lag.
        double lag_refined = static_cast<double>(chosen);
        const double y0 = ncc[chosen - 1], y1 = ncc[chosen], y2 = ncc[chosen + 1];
        const double denom = y0 - 2.0 * y1 + y2;
        if (std::abs(denom) > 1e-12) {
            const double shift = 0.5 * (y0 - y2) / denom;
            if (std::abs(shift) <= 1.0) lag_refined += shift;
        }
        const double f0 = fs / lag_refined;
        if (f0 < cfg.f0_min_hz || f0 > cfg.f0_max_hz) continue;

        track.values[f] = std::log(f0);
        track.defined[f] = 1;
    }
    return track;
}

inline Track track_energy(const Waveform& w, const TrackerConfig& cfg = {}) {
    using namespace detail;
    const FrameGrid grid = make_grid(w.samples.size(), w.sample_rate, cfg);

    Track track;
    track.t0 = grid.t0;
    track.frame_shift = cfg.frame_shift_s;
    track.frame_length = cfg.frame_length_s;
    track.values.assign(grid.n_frames, std::numeric_limits<double>::quiet_NaN());
    track.defined.assign(grid.n_frames, 0);

    const std::vector<double> win = hamming(grid.frame_len);
    double win_norm = 0.0;
    for (double v : win) win_norm += v * v;

    for (std::size_t f = 0; f < grid.n_frames; ++f) {
        const double* frame = w.samples.data() + f * grid.frame_shift;
        double acc = 0.0;
        for (std::size_t i = 0; i < grid.frame_len; ++i) {
            const double v = win[i] * frame[i];
            acc += v * v;
        }
        const double mean_square = acc / win_norm;
        track.values[f] = std::log(std::max(mean_square, cfg.energy_floor));
        track.defined[f] = 1;
    }
    return track;
}

// Formants are estimated only on frames the F0 tracker judged voiced, per
// the reference pipeline; `voicing` must come from track_f0 on the same
// waveform so the frame grids line up.
inline FormantTracks track_formants(const Waveform& w, const Track& voicing,
                                    const TrackerConfig& cfg = {}) {
    using namespace detail;
    const FrameGrid grid = make_grid(w.samples.size(), w.sample_rate, cfg);
    if (voicing.size() != grid.n_frames)
        throw ArgumentError("track_formants: voicing track does not match the frame grid");

    auto blank = [&] {
        Track t;
        t.t0 = grid.t0;
        t.frame_shift = cfg.frame_shift_s;
        t.frame_length = cfg.frame_length_s;
        t.values.assign(grid.n_frames, std::numeric_limits<double>::quiet_NaN());
        t.defined.assign(grid.n_frames, 0);
        return t;
    };
    FormantTracks tracks{blank(), blank()};

    const Waveform rs = resample(w, cfg.formant_rate_hz);
    std::vector<double> pre(rs.samples.size());
    for (std::size_t i = 0; i < rs.samples.size(); ++i)
        pre[i] = rs.samples[i] - (i > 0 ? cfg.preemphasis * rs.samples[i - 1] : 0.0);

    const std::size_t wlen =
        static_cast<std::size_t>(std::lround(cfg.formant_window_s * cfg.formant_rate_hz));
    const std::vector<double> win = hamming(wlen);
    const int p = cfg.lpc_order;
    std::vector<double> frame(wlen);
    std::vector<double> r(static_cast<std::size_t>(p) + 1);

    for (std::size_t f = 0; f < grid.n_frames; ++f) {
        if (!voicing.defined[f]) continue;
        const double center = grid.t0 + static_cast<double>(f) * cfg.frame_shift_s;
        const std::ptrdiff_t begin =
            static_cast<std::ptrdiff_t>(std::lround(center * cfg.formant_rate_hz)) -
            static_cast<std::ptrdiff_t>(wlen) / 2;
        if (begin < 0 || begin + static_cast<std::ptrdiff_t>(wlen) >
                             static_cast<std::ptrdiff_t>(pre.size()))
            continue;
        for (std::size_t i = 0; i < wlen; ++i)
            frame[i] = win[i] * pre[static_cast<std::size_t>(begin) + i];

        for (int k = 0; k <= p; ++k) {
            double acc = 0.0;
            for (std::size_t i = 0; i + static_cast<std::size_t>(k) < wlen; ++i)
                acc += frame[i] * frame[i + static_cast<std::size_t>(k)];
            r[static_cast<std::size_t>(k)] = acc;
        }
        if (r[0] < 1e-9) continue;  // silence
        const std::vector<double> a = levinson_durbin(r, p);
        if (a.empty()) continue;

        // A(z) = z^p - a1 z^{p-1} - ... - ap; roots give resonances.
        std::vector<double> coeffs(static_cast<std::size_t>(p));
        for (int k = 1; k <= p; ++k)
            coeffs[static_cast<std::size_t>(k - 1)] = -a[static_cast<std::size_t>(k)];
        const auto roots = polynomial_roots(coeffs);

        std::vector<double> formants;
        for (const auto& z : roots) {
            if (z.imag() <= 0.0) continue;  // keep one of each conjugate pair
            const double mag = std::abs(z);
            if (mag <= 0.0 || mag >= 1.0) continue;
            const double freq =
                std::atan2(z.imag(), z.real()) * cfg.formant_rate_hz / (2.0 * std::numbers::pi);
            const double bw = -std::log(mag) * cfg.formant_rate_hz / std::numbers::pi;
            if (bw < cfg.formant_max_bandwidth_hz && freq > cfg.formant_min_hz &&
                freq < cfg.formant_max_hz)
                formants.push_back(freq);
        }
        if (formants.size() < 2) continue;
        std::sort(formants.begin(), formants.end());
        tracks.f1.values[f] = formants[0];
        tracks.f2.values[f] = formants[1];
        tracks.f1.defined[f] = 1;
        tracks.f2.defined[f] = 1;
    }
    return tracks;
}

// Frames whose center falls outside every speech interval become undefined.
inline Track mask_track(const Track& track,
                        const std::vector<std::pair<double, double>>& speech) {
    Track out = track;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!out.defined[i]) continue;
        const double t = out.time_of(i);
        bool in_speech = false;
        for (const auto& [s, e] : speech) {
            if (t >= s - 1e-9 && t <= e + 1e-9) {
                in_speech = true;
                break;
            }
        }
        if (!in_speech) {
            out.defined[i] = 0;
            out.values[i] = std::numeric_limits<double>::quiet_NaN();
        }
    }
    return out;
}

// Values of defined frames in order.
inline std::vector<double> defined_values(const Track& track) {
    std::vector<double> out;
    for (std::size_t i = 0; i < track.size(); ++i)
        if (track.defined[i]) out.push_back(track.values[i]);
    return out;
}

// Splits defined frames into regions: a gap between consecutive defined
// frames longer than max_gap_s starts a new region; shorter gaps are
// bridged and the undefined frames inside them are skipped.
inline std::vector<TrackRegion> split_regions(const Track& track, double max_gap_s = 0.050) {
    std::vector<TrackRegion> regions;
    std::size_t prev = 0;
    bool have_prev = false;
    for (std::size_t i = 0; i < track.size(); ++i) {
        if (!track.defined[i]) continue;
        const double gap =
            have_prev ? static_cast<double>(i - prev) * track.frame_shift : 0.0;
        if (!have_prev || gap > max_gap_s + 1e-12) regions.emplace_back();
        regions.back().frames.push_back(i);
        prev = i;
        have_prev = true;
    }
    return regions;
}

}  // namespace trustspeech
