#pragma once
// Command-line surface: extract / eval / rfe / synth / report / syllables.
// Config files are JSON with full defaulting to the reference experiment
// settings; validation collects every violated field before failing.
// Exit codes: 0 success, 1 runtime/data error, 2 usage/config error.

#include <array>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trustspeech/alignment.hpp"
#include "trustspeech/corpus.hpp"
#include "trustspeech/dataset.hpp"
#include "trustspeech/errors.hpp"
#include "trustspeech/experiment.hpp"
#include "trustspeech/features.hpp"
#include "trustspeech/signal.hpp"
#include "trustspeech/syllabify.hpp"
#include "trustspeech/synth.hpp"
#include "trustspeech/wave.hpp"

namespace trustspeech::cli {

inline std::string iso_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

// Full defaulting: every key is optional; unknown keys and out-of-range
// values are all reported together.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    std::vector<std::string> problems;
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");

    static const std::set<std::string> known = {"task",        "norm_mode",      "n_seeds",
                                                "min_per_condition", "forest",    "bootstrap_reps",
                                                "bootstrap_seed"};
    static const std::set<std::string> known_forest = {"n_trees",  "max_depth", "n_candidates",
                                                       "min_samples_split", "bootstrap", "seed"};
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) problems.push_back("unknown key \"" + key + "\"");
        (void)value;
    }

    auto take = [&](const char* key, auto& dst) {
        if (auto it = j.find(key); it != j.end()) {
            try {
                dst = it->get<std::remove_reference_t<decltype(dst)>>();
            } catch (const nlohmann::json::exception&) {
                problems.push_back(std::string(key) + ": wrong type");
            }
        }
    };
    std::string task_s = to_string(cfg.task);
    std::string norm_s = to_string(cfg.norm_mode);
    take("task", task_s);
    take("norm_mode", norm_s);
    take("n_seeds", cfg.n_seeds);
    take("min_per_condition", cfg.min_per_condition);
    take("bootstrap_reps", cfg.bootstrap_reps);
    take("bootstrap_seed", cfg.bootstrap_seed);
    if (auto it = j.find("forest"); it != j.end()) {
        if (!it->is_object()) {
            problems.push_back("forest: must be an object");
        } else {
            for (const auto& [key, value] : it->items()) {
                if (!known_forest.contains(key))
                    problems.push_back("unknown key \"forest." + key + "\"");
                (void)value;
            }
            auto take_f = [&](const char* key, auto& dst) {
                if (auto fit = it->find(key); fit != it->end()) {
                    try {
                        dst = fit->get<std::remove_reference_t<decltype(dst)>>();
                    } catch (const nlohmann::json::exception&) {
                        problems.push_back(std::string("forest.") + key + ": wrong type");
                    }
                }
            };
            take_f("n_trees", cfg.forest.n_trees);
            take_f("max_depth", cfg.forest.max_depth);
            take_f("n_candidates", cfg.forest.n_candidates);
            take_f("min_samples_split", cfg.forest.min_samples_split);
            take_f("bootstrap", cfg.forest.bootstrap);
            take_f("seed", cfg.forest.seed);
        }
    }

    try {
        cfg.task = task_from_string(task_s);
    } catch (const ConfigError& e) {
        problems.push_back(e.what());
    }
    try {
        cfg.norm_mode = norm_mode_from_string(norm_s);
    } catch (const ConfigError& e) {
        problems.push_back(e.what());
    }
    if (cfg.n_seeds < 1) problems.push_back("n_seeds: must be >= 1");
    if (cfg.min_per_condition < 1) problems.push_back("min_per_condition: must be >= 1");
    if (cfg.forest.n_trees < 1) problems.push_back("forest.n_trees: must be >= 1");
    if (cfg.forest.max_depth < 1) problems.push_back("forest.max_depth: must be >= 1");
    if (cfg.forest.n_candidates < 0) problems.push_back("forest.n_candidates: must be >= 0");
    if (cfg.forest.min_samples_split < 2)
        problems.push_back("forest.min_samples_split: must be >= 2");
    if (cfg.bootstrap_reps < 1) problems.push_back("bootstrap_reps: must be >= 1");

    if (!problems.empty()) {
        std::string msg = "invalid experiment config:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ConfigError(msg);
    }
    return cfg;
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
    return {{"task", to_string(cfg.task)},
            {"norm_mode", to_string(cfg.norm_mode)},
            {"n_seeds", cfg.n_seeds},
            {"min_per_condition", cfg.min_per_condition},
            {"forest",
             {{"n_trees", cfg.forest.n_trees},
              {"max_depth", cfg.forest.max_depth},
              {"n_candidates", cfg.forest.n_candidates},
              {"min_samples_split", cfg.forest.min_samples_split},
              {"bootstrap", cfg.forest.bootstrap},
              {"seed", cfg.forest.seed}}},
            {"bootstrap_reps", cfg.bootstrap_reps},
            {"bootstrap_seed", cfg.bootstrap_seed}};
}

inline nlohmann::json scores_to_json(const ScoreSet& scores) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : scores.entries)
        arr.push_back({{"speaker_id", e.speaker_id},
                       {"unit_id", e.unit_id},
                       {"condition", to_string(e.condition)},
                       {"posterior_true", e.posterior_true},
                       {"posterior_h", e.posterior_h}});
    return arr;
}

inline void write_scores_csv(const std::filesystem::path& path, const ScoreSet& scores) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write scores CSV: " + path.string());
    out << "speaker_id,unit_id,condition,posterior_true,posterior_h\n";
    for (const auto& e : scores.entries)
        out << e.speaker_id << "," << e.unit_id << "," << to_string(e.condition) << ","
            << detail::format_double(e.posterior_true) << ","
            << detail::format_double(e.posterior_h) << "\n";
    if (!out) throw DataError("write failed: " + path.string());
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path.string());
    out << content;
    if (!out) throw DataError("write failed: " + path.string());
}

// Rows from either a prior extraction (CSV) or a manifest (full DSP run);
// exactly one source must be given.
inline std::vector<FeatureRow> load_rows(const std::string& features_csv,
                                         const std::string& manifest_path,
                                         const std::string& save_features = "") {
    if (features_csv.empty() == manifest_path.empty())
        throw ArgumentError("exactly one of --features and --manifest is required");
    if (!features_csv.empty()) return read_feature_csv(features_csv);
    const SessionManifest manifest = apply_filters(load_manifest(manifest_path));
    std::vector<FeatureRow> rows = extract_dataset(manifest);
    if (!save_features.empty()) write_feature_csv(save_features, rows);
    return rows;
}

struct TrackDumpOptions {
    std::string dir;  // empty: no dump
};

inline void dump_tracks(const std::filesystem::path& dir, const UtteranceRecord& rec,
                        const TrackerConfig& cfg) {
    const Waveform audio = read_wav(rec.audio_path);
    const std::vector<WordInterval> words = parse_alignment(rec.alignment_path);
    const SpeechSegmentation seg = segment_speech(words);
    const Track f0 = mask_track(track_f0(audio, cfg), seg.speech_intervals);
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

    const std::filesystem::path path = dir / (rec.series_id + "_" + rec.question_id + "_tracks.csv");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write track dump: " + path.string());
    out << "time_s,f0_log,f0_defined,energy_log,energy_defined,f1_hz,f2_hz,formants_defined\n";
    for (std::size_t i = 0; i < f0.size(); ++i) {
        out << detail::format_double(f0.time_of(i)) << ",";
        if (f0.defined[i]) out << detail::format_double(f0.values[i]);
        out << "," << (f0.defined[i] ? 1 : 0) << ",";
        if (energy.defined[i]) out << detail::format_double(energy.values[i]);
        out << "," << (energy.defined[i] ? 1 : 0) << ",";
        if (formants.f1.defined[i]) out << detail::format_double(formants.f1.values[i]);
        out << ",";
        if (formants.f2.defined[i]) out << detail::format_double(formants.f2.values[i]);
        out << "," << (formants.f1.defined[i] ? 1 : 0) << "\n";
    }
}

inline void cmd_extract(const std::string& manifest_path, const std::string& out_csv,
                        const TrackerConfig& tracker, const TrackDumpOptions& dump) {
    const SessionManifest manifest = apply_filters(load_manifest(manifest_path));
    const std::vector<FeatureRow> rows = extract_dataset(manifest, tracker);
    write_feature_csv(out_csv, rows);
    if (!dump.dir.empty()) {
        std::filesystem::create_directories(dump.dir);
        for (const auto& rec : manifest.records) dump_tracks(dump.dir, rec, tracker);
    }
    std::cout << "wrote " << rows.size() << " rows to " << out_csv << "\n";
}

inline void cmd_eval(const std::string& features_csv, const std::string& manifest_path,
                     const std::string& save_features, const ExperimentConfig& cfg,
                     const std::string& out_json, const std::string& scores_csv,
                     bool no_timestamp) {
    const std::vector<FeatureRow> rows = load_rows(features_csv, manifest_path, save_features);
    const ScoreSet scores = run_loso(rows, cfg);
    const double ce = cross_entropy(scores);
    const double acc = accuracy(scores);
    const auto [ci_lo, ci_hi] = bootstrap_ci(scores, cfg.bootstrap_reps, cfg.bootstrap_seed);

    nlohmann::json results = {{"config", experiment_config_to_json(cfg)},
                              {"metrics",
                               {{"ce", ce}, {"ce_ci", {ci_lo, ci_hi}}, {"accuracy", acc}}},
                              {"per_unit_scores", scores_to_json(scores)}};
    if (!no_timestamp) results["generated_at"] = iso_timestamp();
    if (!out_json.empty()) write_text_file(out_json, results.dump(2) + "\n");
    if (!scores_csv.empty()) write_scores_csv(scores_csv, scores);

    std::printf("task=%s norm=%s CE=%.4f CI=[%.4f,%.4f] acc=%.4f\n", to_string(cfg.task).c_str(),
                to_string(cfg.norm_mode).c_str(), ce, ci_lo, ci_hi, acc);
}

inline void cmd_rfe(const std::string& features_csv, const std::string& manifest_path,
                    const ExperimentConfig& cfg, const std::string& out_json,
                    const std::string& trace_csv, bool no_timestamp) {
    const std::vector<FeatureRow> rows = load_rows(features_csv, manifest_path);
    const RfeTrace trace = rfe(rows, cfg);

    nlohmann::json steps = nlohmann::json::array();
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const RfeStep& s = trace.steps[i];
        steps.push_back({{"step", i + 1},
                         {"removed_feature", s.removed_feature},
                         {"ce", s.ce},
                         {"accuracy", s.accuracy},
                         {"n_remaining", s.remaining.size()}});
    }
    nlohmann::json results = {
        {"config", experiment_config_to_json(cfg)},
        {"initial",
         {{"ce", trace.initial_ce}, {"accuracy", trace.initial_accuracy}, {"n_features", kNumFeatures}}},
        {"steps", steps},
        {"best",
         {{"ce", trace.best_ce}, {"accuracy", trace.best_accuracy}, {"features", trace.best_subset}}}};
    if (!no_timestamp) results["generated_at"] = iso_timestamp();
    if (!out_json.empty()) write_text_file(out_json, results.dump(2) + "\n");

    if (!trace_csv.empty()) {
        std::string csv = "step,removed_feature,ce\n";
        csv += "0,," + detail::format_double(trace.initial_ce) + "\n";
        for (std::size_t i = 0; i < trace.steps.size(); ++i)
            csv += std::to_string(i + 1) + "," + trace.steps[i].removed_feature + "," +
                   detail::format_double(trace.steps[i].ce) + "\n";
        write_text_file(trace_csv, csv);
    }

    std::printf("rfe: initial CE=%.4f best CE=%.4f with %zu features\n", trace.initial_ce,
                trace.best_ce, trace.best_subset.size());
}

inline void cmd_synth(const std::string& spec_path, const std::string& out_dir) {
    SynthSpec spec;
    if (!spec_path.empty()) spec = synth_spec_from_json(load_json_file(spec_path));
    const SynthResult result = generate_corpus(spec, out_dir);
    std::cout << "wrote " << result.n_records << " records, manifest at "
              << result.manifest_path.string() << "\n";
}

inline void cmd_report(const std::string& features_csv, const std::string& norm_mode_s,
                       const std::string& results_path, const std::string& out_csv, int top_k) {
    if (top_k < 1) throw ArgumentError("--top-k must be >= 1");
    const std::vector<FeatureRow> rows = read_feature_csv(features_csv);
    const auto mode = norm_mode_from_string(norm_mode_s);
    const std::vector<FeatureRow> normalized = normalize_dataset(rows, mode);
    const std::vector<ShiftEntry> report = feature_shift_report(normalized);

    if (!out_csv.empty()) {
        std::string csv = "feature,speaker_id,median_l,median_h,abs_shift\n";
        for (const auto& e : report)
            csv += e.feature + "," + e.speaker_id + "," + detail::format_double(e.median_l) +
                   "," + detail::format_double(e.median_h) + "," +
                   detail::format_double(e.abs_shift) + "\n";
        write_text_file(out_csv, csv);
    }

    if (!results_path.empty()) {
        const nlohmann::json results = load_json_file(results_path);
        if (results.contains("metrics")) {
            const auto& m = results.at("metrics");
            std::printf("metrics: CE=%.4f CI=[%.4f,%.4f] acc=%.4f\n", m.at("ce").get<double>(),
                        m.at("ce_ci").at(0).get<double>(), m.at("ce_ci").at(1).get<double>(),
                        m.at("accuracy").get<double>());
        }
    }

    std::map<std::string, std::vector<const ShiftEntry*>> by_feature;
    for (const auto& e : report) by_feature[e.feature].push_back(&e);
    for (std::string_view name : kFeatureNames) {
        const auto it = by_feature.find(std::string(name));
        if (it == by_feature.end()) continue;
        const auto& entries = it->second;
        int n_up = 0, n_valid = 0;
        for (const ShiftEntry* e : entries) {
            if (std::isnan(e->median_l) || std::isnan(e->median_h)) continue;
            ++n_valid;
            if (e->median_h > e->median_l) ++n_up;
        }
        std::printf("%s: H > L for %d/%d speakers; top shifts:", it->first.c_str(), n_up,
                    n_valid);
        const int k = std::min<int>(top_k, static_cast<int>(entries.size()));
        for (int i = 0; i < k; ++i)
            std::printf(" %s (%.3f)", entries[static_cast<std::size_t>(i)]->speaker_id.c_str(),
                        entries[static_cast<std::size_t>(i)]->abs_shift);
        std::printf("\n");
    }
}

inline void cmd_syllables(const std::vector<std::string>& tokens) {
    if (tokens.empty()) throw ArgumentError("syllables: no input text");
    std::string text;
    for (const auto& t : tokens) {
        if (!text.empty()) text += " ";
        text += t;
    }
    for (const auto& token : tokens) {
        // letters-only tokens get a full breakdown; anything else just a count
        bool pure_letters = !token.empty();
        for (char32_t cp : detail::decode_utf8(token)) {
            if (!detail::is_spanish_letter(detail::to_lower_es(cp))) {
                pure_letters = false;
                break;
            }
        }
        if (pure_letters) {
            const SyllableBreakdown b = syllabify(token);
            std::string joined;
            for (const auto& s : b.syllables) {
                if (!joined.empty()) joined += "-";
                joined += s;
            }
            std::cout << token << ": " << joined << " (" << b.syllables.size()
                      << (b.vowelless ? ", no vowel" : "") << ")\n";
        } else {
            try {
                std::cout << token << ": " << count_syllables(token) << "\n";
            } catch (const ArgumentError&) {
                std::cout << token << ": 0\n";
            }
        }
    }
    std::cout << "total: " << count_syllables(text) << "\n";
}

inline int run_cli(int argc, const char* const* argv) {
    CLI::App app{"trustspeech: hyperarticulated-speech analysis pipeline"};
    app.require_subcommand(1);

    // extract
    auto* ext = app.add_subcommand("extract", "Extract the 16 features from a corpus manifest");
    std::string ext_manifest, ext_out = "features.csv", ext_dump;
    TrackerConfig tracker;
    ext->add_option("--manifest", ext_manifest, "Corpus manifest JSON")->required();
    ext->add_option("--out", ext_out, "Output feature CSV");
    ext->add_option("--dump-tracks", ext_dump, "Directory for per-utterance track CSVs");
    ext->add_option("--f0-min", tracker.f0_min_hz, "F0 search floor (Hz)");
    ext->add_option("--f0-max", tracker.f0_max_hz, "F0 search ceiling (Hz)");
    ext->add_option("--voicing-threshold", tracker.voicing_threshold,
                    "Autocorrelation voicing threshold");

    // shared eval/rfe options
    struct EvalOpts {
        std::string features, manifest, save_features, config;
        std::string task, norm;
        int n_seeds = -1, n_trees = -1;
        std::int64_t forest_seed = -1;
        std::string out_json, scores_csv, trace_csv;
        bool no_timestamp = false;
    };
    auto add_common = [](CLI::App* cmd, EvalOpts& o) {
        cmd->add_option("--features", o.features, "Feature CSV from a prior extract");
        cmd->add_option("--manifest", o.manifest, "Corpus manifest (extract on the fly)");
        cmd->add_option("--config", o.config, "Experiment config JSON");
        cmd->add_option("--task", o.task, "question_level|series_level");
        cmd->add_option("--norm", o.norm, "none|speaker|speaker_question");
        cmd->add_option("--seeds", o.n_seeds, "Number of forest seeds to average");
        cmd->add_option("--trees", o.n_trees, "Trees per forest");
        cmd->add_option("--forest-seed", o.forest_seed, "Base forest seed");
        cmd->add_flag("--no-timestamp", o.no_timestamp,
                      "Omit generated_at (for byte comparison)");
    };
    auto resolve_config = [](const EvalOpts& o) {
        ExperimentConfig cfg = o.config.empty()
                                   ? ExperimentConfig{}
                                   : experiment_config_from_json(load_json_file(o.config));
        if (!o.task.empty()) cfg.task = task_from_string(o.task);
        if (!o.norm.empty()) cfg.norm_mode = norm_mode_from_string(o.norm);
        if (o.n_seeds >= 0) cfg.n_seeds = o.n_seeds;
        if (o.n_trees >= 0) cfg.forest.n_trees = o.n_trees;
        if (o.forest_seed >= 0) cfg.forest.seed = static_cast<std::uint64_t>(o.forest_seed);
        if (cfg.n_seeds < 1) throw ConfigError("n_seeds: must be >= 1");
        if (cfg.forest.n_trees < 1) throw ConfigError("forest.n_trees: must be >= 1");
        return cfg;
    };

    auto* eval = app.add_subcommand("eval", "Leave-one-speaker-out evaluation");
    EvalOpts eval_opts;
    add_common(eval, eval_opts);
    eval->add_option("--save-features", eval_opts.save_features,
                     "Also write extracted features (manifest mode)");
    eval->add_option("--out", eval_opts.out_json, "Results JSON path");
    eval->add_option("--scores-csv", eval_opts.scores_csv, "Per-unit scores CSV path");

    auto* rfe_cmd = app.add_subcommand("rfe", "Recursive feature elimination");
    EvalOpts rfe_opts;
    add_common(rfe_cmd, rfe_opts);
    rfe_cmd->add_option("--out", rfe_opts.out_json, "Trace JSON path");
    rfe_cmd->add_option("--trace-csv", rfe_opts.trace_csv, "Trace CSV path");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic verification corpus");
    std::string synth_spec, synth_out;
    synth->add_option("--spec", synth_spec, "SynthSpec JSON (defaults used when omitted)");
    synth->add_option("--out", synth_out, "Output corpus directory")->required();

    auto* report = app.add_subcommand("report", "Per-speaker feature shift tables");
    std::string rep_features, rep_norm = "speaker_question", rep_results, rep_out;
    int rep_top_k = 5;
    report->add_option("--features", rep_features, "Feature CSV")->required();
    report->add_option("--norm", rep_norm, "none|speaker|speaker_question");
    report->add_option("--results", rep_results, "Results JSON to summarize alongside");
    report->add_option("--out", rep_out, "Shift table CSV path");
    report->add_option("--top-k", rep_top_k, "Speakers listed per feature");

    auto* syll = app.add_subcommand("syllables", "Count Spanish syllables in text");
    std::vector<std::string> syll_text;
    syll->add_option("text", syll_text, "Words to analyze");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (ext->parsed()) {
            cmd_extract(ext_manifest, ext_out, tracker, TrackDumpOptions{ext_dump});
        } else if (eval->parsed()) {
            cmd_eval(eval_opts.features, eval_opts.manifest, eval_opts.save_features,
                     resolve_config(eval_opts), eval_opts.out_json, eval_opts.scores_csv,
                     eval_opts.no_timestamp);
        } else if (rfe_cmd->parsed()) {
            cmd_rfe(rfe_opts.features, rfe_opts.manifest, resolve_config(rfe_opts),
                    rfe_opts.out_json, rfe_opts.trace_csv, rfe_opts.no_timestamp);
        } else if (synth->parsed()) {
            cmd_synth(synth_spec, synth_out);
        } else if (report->parsed()) {
            cmd_report(rep_features, rep_norm, rep_results, rep_out, rep_top_k);
        } else if (syll->parsed()) {
            cmd_syllables(syll_text);
        }
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace trustspeech::cli
