#pragma once
// Synthetic corpus generator for end-to-end verification: sawtooth-source,
// resonator-filtered utterances with word-gap structure, per-speaker base
// pitch/tempo/pause parameters, and condition effects injected in the
// generative parameters so the whole DSP stack is exercised.
//
// Effect units are per-speaker standard deviations of the corresponding
// extracted feature. Each varying parameter has a question-anchored
// component (shared by all speakers for a question) and an utterance-noise
// component; the documented sigma constants below are the totals the
// effects are calibrated against. Question normalization removes the
// question-anchored part, which is what makes the speaker+question mode
// outperform weaker normalization on this corpus, mirroring the target
// experiment's ordering.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "trustspeech/alignment.hpp"
#include "trustspeech/corpus.hpp"
#include "trustspeech/errors.hpp"
#include "trustspeech/rng.hpp"
#include "trustspeech/syllabify.hpp"
#include "trustspeech/wave.hpp"

namespace trustspeech {

struct SynthSpec {
    int n_speakers = 8;
    int questions_per_series = 12;  // shared between conditions
    int n_l_only = 0;               // extra questions appearing only in L
    std::map<std::string, double> effect;  // feature name -> H shift in sigma units
    double speaker_variability = 1.0;      // scales between-speaker parameter spread
    double noise_level = 0.005;            // additive white-noise amplitude
    std::uint64_t seed = 1;
    double sample_rate = 16000.0;
};

namespace synth_detail {

// Within-speaker sigma of each effect-bearing feature, split into a
// question-anchored share and an utterance-noise share (quadrature sums
// give the totals the effect units refer to).
inline constexpr double kF0SigmaLog = 0.05;       // ln-Hz, total
inline constexpr double kTempoSigma = 0.06;       // relative syllable duration, total
inline constexpr double kPauseSigma = 0.30;       // relative pause duration, total
inline constexpr double kQuestionShare = 0.8;     // question component / total
inline constexpr double kNoiseShare = 0.6;        // noise component / total

inline constexpr std::uint64_t kSpeakerTag = 0x73706b72;   // "spkr"
inline constexpr std::uint64_t kQuestionTag = 0x71737462;  // "qstb"
inline constexpr std::uint64_t kUttTag = 0x75747472;       // "uttr"

inline const std::vector<std::string>& question_bank() {
    static const std::vector<std::string> bank = {
        "¿en qué año llegó el hombre a la luna?",
        "¿cuál es la capital de francia?",
        "¿cuántos continentes hay en el planeta?",
        "¿qué río atraviesa la ciudad de parís?",
        "¿en qué año terminó la segunda guerra mundial?",
        "¿cuál es el océano más grande del mundo?",
        "¿cuántos lados tiene un hexágono?",
        "¿qué planeta está más cerca del sol?",
        "¿en qué país se encuentra la torre de pisa?",
        "¿cuál es el metal más liviano?",
        "¿cuántas cuerdas tiene una guitarra clásica?",
        "¿qué gas respiramos principalmente?",
        "¿en qué año se descubrió américa?",
        "¿cuál es la montaña más alta del mundo?",
        "¿cuántos días tiene el año 2024?",
        "¿qué animal es el más rápido del mundo?",
        "¿en qué ciudad se encuentra el coliseo romano?",
        "¿cuál es el idioma más hablado del mundo?",
        "¿cuántos huesos tiene el cuerpo humano adulto?",
        "¿qué científico propuso la teoría de la relatividad?",
        "¿en qué año comenzó la primera guerra mundial?",
        "¿cuál es el desierto más grande del planeta?",
        "¿cuántos jugadores tiene un equipo de fútbol?",
        "¿qué órgano bombea la sangre en el cuerpo?",
        "¿en qué continente se encuentra egipto?",
        "¿cuál es la capital de japón?",
        "¿cuántos minutos tiene una hora y media?",
        "¿qué pintor realizó la obra guernica?",
        "¿en qué año cayó el muro de berlín?",
        "¿cuál es el país más grande del mundo?",
        "¿cuántas patas tiene una araña?",
        "¿qué instrumento mide la temperatura?",
        "¿en qué año se fundó la ciudad de buenos aires?",
        "¿cuál es el símbolo químico del oro?",
        "¿cuántos colores tiene el arcoíris?",
        "¿qué escritor creó a don quijote de la mancha?"};
    return bank;
}

struct SpeakerParams {
    double base_f0;        // Hz
    double syll_dur;       // seconds per syllable
    double pause_dur;      // seconds per inserted pause
    double formant_scale;  // vowel target multiplier
};

struct QuestionOffsets {
    double f0;     // ln-Hz, question-anchored
    double tempo;  // relative, question-anchored
    double pause;  // relative, question-anchored
};

inline SpeakerParams speaker_params(const SynthSpec& spec, int s) {
    Rng rng = Rng::substream(spec.seed, {kSpeakerTag, static_cast<std::uint64_t>(s)});
    const double v = spec.speaker_variability;
    SpeakerParams p;
    p.base_f0 = 150.0 * std::exp(v * rng.uniform(-0.28, 0.28));
    p.syll_dur = 0.17 * std::exp(v * rng.uniform(-0.15, 0.15));
    p.pause_dur = 0.25 * std::exp(v * rng.uniform(-0.3, 0.3));
    p.formant_scale = std::exp(v * rng.uniform(-0.08, 0.08));
    return p;
}

inline QuestionOffsets question_offsets(const SynthSpec& spec, int q) {
    Rng rng = Rng::substream(spec.seed, {kQuestionTag, static_cast<std::uint64_t>(q)});
    QuestionOffsets o;
    o.f0 = rng.normal() * kQuestionShare * kF0SigmaLog;
    o.tempo = rng.normal() * kQuestionShare * kTempoSigma;
    o.pause = rng.normal() * kQuestionShare * kPauseSigma;
    return o;
}

// Two-pole resonator, coefficients switchable mid-stream.
struct Resonator {
    double a1 = 0.0, a2 = 0.0, g = 1.0;
    double y1 = 0.0, y2 = 0.0;

    void tune(double freq_hz, double bw_hz, double fs) {
        const double r = std::exp(-std::numbers::pi * bw_hz / fs);
        a1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq_hz / fs);
        a2 = -r * r;
        g = 1.0 - r;
    }
    double step(double x) {
        const double y = g * x + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        return y;
    }
};

struct VowelTarget {
    double f1, f2;
};

inline const std::array<VowelTarget, 5>& vowel_targets() {
    static const std::array<VowelTarget, 5> targets = {
        VowelTarget{700.0, 1200.0}, VowelTarget{450.0, 1800.0}, VowelTarget{300.0, 2300.0},
        VowelTarget{450.0, 900.0}, VowelTarget{325.0, 750.0}};
    return targets;
}

}  // namespace synth_detail

inline void validate(const SynthSpec& spec) {
    std::vector<std::string> problems;
    if (spec.n_speakers < 2) problems.push_back("n_speakers must be >= 2");
    if (spec.questions_per_series < 1) problems.push_back("questions_per_series must be >= 1");
    if (spec.n_l_only < 0) problems.push_back("n_l_only must be >= 0");
    const int total = spec.questions_per_series + spec.n_l_only;
    if (total > static_cast<int>(synth_detail::question_bank().size()))
        problems.push_back("questions_per_series + n_l_only must be <= 36");
    if (spec.noise_level < 0.0) problems.push_back("noise_level must be >= 0");
    if (spec.sample_rate < 16000.0) problems.push_back("sample_rate must be >= 16000");
    for (const auto& [name, shift] : spec.effect) {
        if (name != "syllrate_full" && name != "f0_median" && name != "pause_speech_ratio")
            problems.push_back("unsupported effect feature \"" + name +
                               "\" (syllrate_full|f0_median|pause_speech_ratio)");
        (void)shift;
    }
    if (!problems.empty()) {
        std::string msg = "invalid synth spec:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ConfigError(msg);
    }
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    SynthSpec spec;
    if (auto it = j.find("n_speakers"); it != j.end()) spec.n_speakers = it->get<int>();
    if (auto it = j.find("questions_per_series"); it != j.end())
        spec.questions_per_series = it->get<int>();
    if (auto it = j.find("n_l_only"); it != j.end()) spec.n_l_only = it->get<int>();
    if (auto it = j.find("effect"); it != j.end())
        spec.effect = it->get<std::map<std::string, double>>();
    if (auto it = j.find("speaker_variability"); it != j.end())
        spec.speaker_variability = it->get<double>();
    if (auto it = j.find("noise_level"); it != j.end()) spec.noise_level = it->get<double>();
    if (auto it = j.find("seed"); it != j.end()) spec.seed = it->get<std::uint64_t>();
    if (auto it = j.find("sample_rate"); it != j.end()) spec.sample_rate = it->get<double>();
    validate(spec);
    return spec;
}

namespace synth_detail {

struct BuiltUtterance {
    Waveform audio;
    std::vector<WordInterval> words;
};

inline BuiltUtterance build_utterance(const SynthSpec& spec, const SpeakerParams& sp,
                                      const QuestionOffsets& qo, const std::string& transcript,
                                      bool is_h, Rng& rng) {
    const double fs = spec.sample_rate;

    const double e_f0 = is_h && spec.effect.contains("f0_median")
                            ? spec.effect.at("f0_median") * kF0SigmaLog
                            : 0.0;
    const double e_rate = is_h && spec.effect.contains("syllrate_full")
                              ? spec.effect.at("syllrate_full") * kTempoSigma
                              : 0.0;
    const double e_pause = is_h && spec.effect.contains("pause_speech_ratio")
                               ? spec.effect.at("pause_speech_ratio") * kPauseSigma
                               : 0.0;

    double utt_f0 = sp.base_f0 *
                    std::exp(qo.f0 + rng.normal() * kNoiseShare * kF0SigmaLog + e_f0);
    utt_f0 = std::clamp(utt_f0, 108.0, 420.0);
    const double syll_dur = sp.syll_dur *
                            (1.0 + qo.tempo + rng.normal() * kNoiseShare * kTempoSigma) /
                            (1.0 + e_rate);
    const double pause_dur =
        std::max(0.12, sp.pause_dur *
                           (1.0 + qo.pause + rng.normal() * kNoiseShare * kPauseSigma) *
                           (1.0 + e_pause));

    // Word layout: syllable-proportional durations, tiny merged gaps, and
    // two real pauses at roughly one third and two thirds of the utterance.
    std::vector<std::string> tokens;
    {
        std::string cur;
        for (char c : transcript) {
            if (c == ' ') {
                if (!cur.empty()) tokens.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (!cur.empty()) tokens.push_back(cur);
    }
    if (tokens.empty()) throw ArgumentError("build_utterance: empty transcript");

    BuiltUtterance built;
    const std::size_t pause_a = tokens.size() / 3;
    const std::size_t pause_b = 2 * tokens.size() / 3;
    double t = 0.12 + rng.uniform(0.0, 0.06);  // leading silence
    for (std::size_t w = 0; w < tokens.size(); ++w) {
        int n_syll = 1;
        try {
            n_syll = count_syllables(tokens[w]);
        } catch (const ArgumentError&) {
            continue;  // punctuation-only token
        }
        const double dur = std::max(0.06, static_cast<double>(n_syll) * syll_dur *
                                              (1.0 + rng.uniform(-0.04, 0.04)));
        built.words.push_back({t, t + dur, tokens[w]});
        t += dur;
        if (w + 1 == tokens.size()) break;
        if (tokens.size() >= 4 && (w + 1 == pause_a || w + 1 == pause_b)) {
            t += pause_dur * (1.0 + rng.uniform(-0.05, 0.05));
        } else {
            t += rng.uniform(0.015, 0.04);  // below the merge threshold
        }
    }
    const double total = t + 0.12 + rng.uniform(0.0, 0.06);  // trailing silence

    // Sawtooth source with mild vibrato and declination, gated per word.
    const std::size_t n = static_cast<std::size_t>(std::ceil(total * fs));
    std::vector<double> source(n, 0.0);
    const double t_first = built.words.front().start;
    const double t_last = built.words.back().end;
    const double vib_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double phase = 0.0;
    std::size_t word_at = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double ti = static_cast<double>(i) / fs;
        while (word_at < built.words.size() && ti >= built.words[word_at].end) ++word_at;
        const bool in_word = word_at < built.words.size() && ti >= built.words[word_at].start;
        const double decl = std::exp(-0.06 * std::clamp((ti - t_first) / (t_last - t_first),
                                                        0.0, 1.0));
        const double f0 = utt_f0 * decl *
                          (1.0 + 0.035 * std::sin(2.0 * std::numbers::pi * 1.7 * ti + vib_phase));
        phase += f0 / fs;
        phase -= std::floor(phase);
        if (!in_word) continue;
        // raised-cosine edges avoid clicks and keep energy well defined
        const auto& word = built.words[word_at];
        const double edge = 0.012;
        double env = 1.0;
        if (ti - word.start < edge)
            env = 0.5 - 0.5 * std::cos(std::numbers::pi * (ti - word.start) / edge);
        else if (word.end - ti < edge)
            env = 0.5 - 0.5 * std::cos(std::numbers::pi * (word.end - ti) / edge);
        source[i] = env * (2.0 * phase - 1.0);
    }

    // Formant coloring: vowel targets cycle per word.
    Resonator r1, r2;
    std::vector<double> out(n, 0.0);
    word_at = 0;
    std::size_t tuned_for = static_cast<std::size_t>(-1);
    for (std::size_t i = 0; i < n; ++i) {
        const double ti = static_cast<double>(i) / fs;
        while (word_at < built.words.size() && ti >= built.words[word_at].end) ++word_at;
        const std::size_t w = std::min(word_at, built.words.size() - 1);
        if (w != tuned_for) {
            const VowelTarget& v = vowel_targets()[w % vowel_targets().size()];
            r1.tune(v.f1 * sp.formant_scale, 90.0, fs);
            r2.tune(v.f2 * sp.formant_scale, 140.0, fs);
            tuned_for = w;
        }
        out[i] = r2.step(r1.step(source[i]));
    }

    double peak = 1e-9;
    for (double v : out) peak = std::max(peak, std::abs(v));
    const double gain = 0.4 / peak;
    for (std::size_t i = 0; i < n; ++i)
        out[i] = out[i] * gain + spec.noise_level * rng.uniform(-1.0, 1.0);

    built.audio.samples = std::move(out);
    built.audio.sample_rate = fs;
    return built;
}

inline void write_alignment_json(const std::filesystem::path& path,
                                 const std::vector<WordInterval>& words) {
    nlohmann::json j;
    j["words"] = nlohmann::json::array();
    for (const auto& w : words)
        j["words"].push_back({{"start", w.start}, {"end", w.end}, {"word", w.label}});
    std::ofstream out(path);
    if (!out) throw DataError("cannot write alignment: " + path.string());
    out << j.dump(2) << "\n";
}

inline void write_alignment_textgrid(const std::filesystem::path& path,
                                     const std::vector<WordInterval>& words,
                                     double xmax) {
    // Full-coverage interval tier: silence entries fill the gaps.
    struct Row {
        double xmin, xmax;
        std::string text;
    };
    std::vector<Row> rows;
    double t = 0.0;
    for (const auto& w : words) {
        if (w.start > t) rows.push_back({t, w.start, ""});
        rows.push_back({w.start, w.end, w.label});
        t = w.end;
    }
    if (xmax > t) rows.push_back({t, xmax, ""});

    std::ofstream out(path);
    if (!out) throw DataError("cannot write alignment: " + path.string());
    out.precision(17);
    out << "File type = \"ooTextFile\"\n"
        << "Object class = \"TextGrid\"\n\n"
        << "xmin = 0\nxmax = " << xmax << "\n"
        << "tiers? <exists>\nsize = 1\n"
        << "item []:\n"
        << "    item [1]:\n"
        << "        class = \"IntervalTier\"\n"
        << "        name = \"words\"\n"
        << "        xmin = 0\n"
        << "        xmax = " << xmax << "\n"
        << "        intervals: size = " << rows.size() << "\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out << "        intervals [" << i + 1 << "]:\n"
            << "            xmin = " << rows[i].xmin << "\n"
            << "            xmax = " << rows[i].xmax << "\n"
            << "            text = \"" << rows[i].text << "\"\n";
    }
    if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace synth_detail

struct SynthResult {
    std::filesystem::path manifest_path;
    int n_records = 0;
};

// Writes WAVs, alignments (TextGrid and JSON alternate so both parser paths
// see real traffic), and a loadable manifest under out_dir.
inline SynthResult generate_corpus(const SynthSpec& spec,
                                   const std::filesystem::path& out_dir) {
    using namespace synth_detail;
    validate(spec);
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "audio");
    fs::create_directories(out_dir / "align");

    const auto& bank = question_bank();
    const int n_shared = spec.questions_per_series;
    const int n_total = n_shared + spec.n_l_only;

    nlohmann::json manifest;
    manifest["questions"] = nlohmann::json::array();
    auto question_id = [](int q) {
        std::string id = "q";
        if (q < 10) id += "0";
        return id + std::to_string(q);
    };
    for (int q = 0; q < n_total; ++q)
        manifest["questions"].push_back({{"id", question_id(q)}, {"l_only", q >= n_shared}});
    manifest["records"] = nlohmann::json::array();
    manifest["generator"] = {{"seed", spec.seed},
                             {"n_speakers", spec.n_speakers},
                             {"questions_per_series", spec.questions_per_series},
                             {"n_l_only", spec.n_l_only}};

    int n_records = 0;
    for (int s = 0; s < spec.n_speakers; ++s) {
        const SpeakerParams sp = speaker_params(spec, s);
        std::string speaker = "spk";
        if (s < 10) speaker += "0";
        speaker += std::to_string(s);

        for (int cond = 0; cond < 2; ++cond) {
            const bool is_h = cond == 1;
            const int n_questions = is_h ? n_shared : n_total;
            const std::string series = speaker + (is_h ? "_H" : "_L");
            for (int q = 0; q < n_questions; ++q) {
                Rng rng = Rng::substream(
                    spec.seed, {kUttTag, static_cast<std::uint64_t>(s),
                                static_cast<std::uint64_t>(cond), static_cast<std::uint64_t>(q)});
                const QuestionOffsets qo = question_offsets(spec, q);
                const std::string& transcript = bank[static_cast<std::size_t>(q)];
                const BuiltUtterance built =
                    build_utterance(spec, sp, qo, transcript, is_h, rng);

                const std::string stem = series + "_" + question_id(q);
                const std::string wav_rel = "audio/" + stem + ".wav";
                const bool textgrid = (s + q) % 2 == 0;
                const std::string align_rel =
                    "align/" + stem + (textgrid ? ".TextGrid" : ".json");
                write_wav((out_dir / wav_rel).string(), built.audio);
                if (textgrid)
                    write_alignment_textgrid(out_dir / align_rel, built.words,
                                             built.audio.duration());
                else
                    write_alignment_json(out_dir / align_rel, built.words);

                manifest["records"].push_back({{"speaker_id", speaker},
                                               {"session_id", speaker + "_ses0"},
                                               {"series_id", series},
                                               {"question_id", question_id(q)},
                                               {"condition", is_h ? "H" : "L"},
                                               {"order_index", q},
                                               {"audio_path", wav_rel},
                                               {"alignment_path", align_rel},
                                               {"transcript", transcript}});
                ++n_records;
            }
        }
    }

    SynthResult result;
    result.manifest_path = out_dir / "manifest.json";
    result.n_records = n_records;
    std::ofstream out(result.manifest_path);
    if (!out) throw DataError("cannot write manifest: " + result.manifest_path.string());
    out << manifest.dump(2) << "\n";
    if (!out) throw DataError("write failed: " + result.manifest_path.string());
    return result;
}

}  // namespace trustspeech
