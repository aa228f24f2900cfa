#pragma once
// Leave-one-speaker-out evaluation. Per fold: speaker normalization uses
// each speaker's own post-filter data, question normalization uses training
// speakers only, per-question condition balancing is redrawn per seed, and
// the per-unit posteriors are averaged over seeds before clamping. Metrics:
// normalized cross-entropy, accuracy at 0.5, and a by-speaker bootstrap CI.
//
// Randomness is budgeted per (fold, seed) through named substreams, so runs
// are reproducible regardless of scheduling, and balancing consumes no
// randomness for questions that are already balanced.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "trustspeech/dataset.hpp"
#include "trustspeech/errors.hpp"
#include "trustspeech/forest.hpp"
#include "trustspeech/normalize.hpp"
#include "trustspeech/numeric.hpp"
#include "trustspeech/rng.hpp"

namespace trustspeech {

inline constexpr std::uint64_t kBalanceStreamTag = 0x62616c616e;   // "balan"
inline constexpr std::uint64_t kFoldForestTag = 0x666f72657374;    // "forest"
inline constexpr std::uint64_t kBootstrapStreamTag = 0x626f6f74;   // "boot"

struct ExperimentConfig {
    enum class Task { question_level, series_level };
    enum class NormMode { none, speaker, speaker_question };

    Task task = Task::series_level;
    NormMode norm_mode = NormMode::speaker_question;
    int n_seeds = 10;
    int min_per_condition = 12;
    TrainConfig forest;  // defaults are the reference settings (500 x depth 20)
    int bootstrap_reps = 1000;
    std::uint64_t bootstrap_seed = 7;

    double posterior_clamp() const { return 1.0 / (2.0 * static_cast<double>(forest.n_trees)); }
};

inline std::string to_string(ExperimentConfig::Task t) {
    return t == ExperimentConfig::Task::question_level ? "question_level" : "series_level";
}

inline std::string to_string(ExperimentConfig::NormMode m) {
    switch (m) {
        case ExperimentConfig::NormMode::none: return "none";
        case ExperimentConfig::NormMode::speaker: return "speaker";
        default: return "speaker_question";
    }
}

inline ExperimentConfig::Task task_from_string(const std::string& s) {
    if (s == "question_level") return ExperimentConfig::Task::question_level;
    if (s == "series_level") return ExperimentConfig::Task::series_level;
    throw ConfigError("unknown task \"" + s + "\" (question_level|series_level)");
}

inline ExperimentConfig::NormMode norm_mode_from_string(const std::string& s) {
    if (s == "none") return ExperimentConfig::NormMode::none;
    if (s == "speaker") return ExperimentConfig::NormMode::speaker;
    if (s == "speaker_question") return ExperimentConfig::NormMode::speaker_question;
    throw ConfigError("unknown norm mode \"" + s + "\" (none|speaker|speaker_question)");
}

struct ScoreEntry {
    std::string speaker_id;
    std::string unit_id;  // "<series>/<question>" or "<series>"
    Condition condition;  // ground truth
    double posterior_true;
    double posterior_h;
};

struct ScoreSet {
    std::vector<ScoreEntry> entries;
};

// Instrumentation for the leak guard: everything a fold's training stage
// consumed, by utterance identity.
struct FoldAudit {
    std::string test_speaker;
    std::vector<std::string> stats_units;     // question-stats inputs
    std::vector<std::string> balance_units;   // post-balancing rows, all seeds
    std::vector<std::string> training_units;  // forest inputs, all seeds
    std::vector<std::string> test_units;
};

namespace detail {

struct WorkingRow {
    const FeatureRow* row;
    std::array<double, kNumFeatures> values;  // normalized + imputed
};

inline std::vector<double> project(const std::array<double, kNumFeatures>& values,
                                   const std::vector<std::size_t>& active) {
    std::vector<double> out;
    out.reserve(active.size());
    for (std::size_t f : active) out.push_back(values[f]);
    return out;
}

// Per-feature quantile summaries over a series' question rows, restricted
// to the active base features; layout matches summarize_series.
inline std::vector<double> summarize_active(const std::vector<const WorkingRow*>& questions,
                                            const std::vector<std::size_t>& active) {
    std::vector<double> out;
    out.reserve(active.size() * kSeriesQuantiles.size());
    std::vector<double> column(questions.size());
    for (std::size_t f : active) {
        for (std::size_t q = 0; q < questions.size(); ++q)
            column[q] = questions[q]->values[f];
        std::sort(column.begin(), column.end());
        for (double p : kSeriesQuantiles) out.push_back(quantile_sorted(column, p));
    }
    return out;
}

inline Condition series_condition(const std::vector<const WorkingRow*>& rows,
                                  const std::string& series_id) {
    const Condition c = rows.front()->row->condition;
    for (const auto* r : rows)
        if (r->row->condition != c)
            throw ValidationError("series " + series_id + " mixes L and H rows");
    return c;
}

}  // namespace detail

inline std::vector<std::size_t> all_features() {
    std::vector<std::size_t> v(kNumFeatures);
    for (std::size_t f = 0; f < kNumFeatures; ++f) v[f] = f;
    return v;
}

inline ScoreSet run_loso(const std::vector<FeatureRow>& rows, const ExperimentConfig& cfg,
                         const std::vector<std::size_t>& active_features,
                         std::vector<FoldAudit>* audit = nullptr) {
    using detail::WorkingRow;
    if (rows.empty()) throw ConfigError("run_loso: empty dataset");
    if (active_features.empty()) throw ArgumentError("run_loso: no active features");
    if (cfg.n_seeds < 1) throw ConfigError("run_loso: n_seeds must be >= 1");

    // Eligibility: enough non-L-only questions in both conditions.
    std::map<std::string, std::pair<int, int>> counts;
    for (const auto& r : rows) {
        auto& c = counts[r.speaker_id];
        if (r.l_only) continue;
        (r.condition == Condition::L ? c.first : c.second) += 1;
    }
    std::vector<std::string> speakers;
    for (const auto& [id, c] : counts)
        if (c.first >= cfg.min_per_condition && c.second >= cfg.min_per_condition)
            speakers.push_back(id);
    if (speakers.empty())
        throw ConfigError("run_loso: no speaker meets min_per_condition = " +
                          std::to_string(cfg.min_per_condition));

    // Speaker normalization over each speaker's own post-filter rows.
    std::vector<WorkingRow> working;
    for (const auto& r : rows)
        if (std::binary_search(speakers.begin(), speakers.end(), r.speaker_id))
            working.push_back(WorkingRow{&r, {}});
    if (cfg.norm_mode == ExperimentConfig::NormMode::none) {
        for (auto& w : working) w.values = imputed_values(w.row->features);
    } else {
        std::map<std::string, std::vector<std::size_t>> by_speaker;
        for (std::size_t i = 0; i < working.size(); ++i)
            by_speaker[working[i].row->speaker_id].push_back(i);
        for (const auto& [speaker, idx] : by_speaker) {
            std::vector<WeightedRow> samples;
            samples.reserve(idx.size());
            for (std::size_t i : idx)
                samples.push_back({&working[i].row->features, working[i].row->condition});
            const NormalizationStats stats = speaker_stats(samples, speaker);
            for (std::size_t i : idx)
                working[i].values =
                    imputed_values(apply_z(working[i].row->features, stats));
        }
    }

    struct UnitScore {
        std::string unit_id;
        Condition condition;
        ExactSum posterior_sum;
    };

    ScoreSet scores;
    for (std::size_t fold = 0; fold < speakers.size(); ++fold) {
        const std::string& test_speaker = speakers[fold];
        std::vector<std::size_t> train_idx, test_idx;
        for (std::size_t i = 0; i < working.size(); ++i) {
            if (working[i].row->speaker_id == test_speaker) {
                if (!working[i].row->l_only) test_idx.push_back(i);
            } else {
                train_idx.push_back(i);
            }
        }

        FoldAudit fold_audit;
        fold_audit.test_speaker = test_speaker;

        // Question-scope stats from training speakers; applied to both sides.
        // Stored per working index so the seed loop reuses them.
        std::vector<std::array<double, kNumFeatures>> fold_values(working.size());
        if (cfg.norm_mode == ExperimentConfig::NormMode::speaker_question) {
            // Re-wrap the speaker-normalized values so the weighted stats
            // see the original missing flags.
            std::vector<FeatureVector> wrapped(working.size());
            for (std::size_t i = 0; i < working.size(); ++i) {
                for (std::size_t f = 0; f < kNumFeatures; ++f) {
                    wrapped[i].values[f] = working[i].values[f];
                    wrapped[i].missing[f] = working[i].row->features.missing[f];
                }
            }
            std::map<std::string, std::vector<WeightedRow>> by_question;
            for (std::size_t i : train_idx) {
                by_question[working[i].row->question_id].push_back(
                    {&wrapped[i], working[i].row->condition});
                fold_audit.stats_units.push_back(working[i].row->identity());
            }
            std::map<std::string, NormalizationStats> stats_by_question;
            for (const auto& [question, samples] : by_question)
                stats_by_question.emplace(question, question_stats(samples, question));
            auto stats_for = [&](const std::string& question) -> NormalizationStats {
                if (auto it = stats_by_question.find(question); it != stats_by_question.end())
                    return it->second;
                return question_stats({}, question);  // identity fallback
            };
            auto apply = [&](std::size_t i) {
                const NormalizationStats st = stats_for(working[i].row->question_id);
                fold_values[i] =
                    imputed_values(apply_z(wrapped[i], st));
            };
            for (std::size_t i : train_idx) apply(i);
            for (std::size_t i : test_idx) apply(i);
        } else {
            for (std::size_t i : train_idx) fold_values[i] = working[i].values;
            for (std::size_t i : test_idx) fold_values[i] = working[i].values;
        }

        // Test units are fixed across seeds.
        std::vector<UnitScore> units;
        std::map<std::string, std::vector<std::size_t>> test_series;
        if (cfg.task == ExperimentConfig::Task::question_level) {
            for (std::size_t i : test_idx) {
                units.push_back({working[i].row->series_id + "/" + working[i].row->question_id,
                                 working[i].row->condition,
                                 ExactSum{}});
                fold_audit.test_units.push_back(working[i].row->identity());
            }
        } else {
            for (std::size_t i : test_idx)
                test_series[working[i].row->series_id].push_back(i);
            for (const auto& [series, idx] : test_series) {
                std::vector<const WorkingRow*> qrows;
                for (std::size_t i : idx) {
                    qrows.push_back(&working[i]);
                    fold_audit.test_units.push_back(working[i].row->identity());
                }
                units.push_back(
                    {series, detail::series_condition(qrows, series), ExactSum{}});
            }
        }

        for (int seed = 0; seed < cfg.n_seeds; ++seed) {
            // Per-question undersampling to equal condition counts.
            Rng balance_rng = Rng::substream(
                cfg.forest.seed, {kBalanceStreamTag, static_cast<std::uint64_t>(fold),
                                  static_cast<std::uint64_t>(seed)});
            std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>>
                by_question;
            for (std::size_t i : train_idx) {
                auto& q = by_question[working[i].row->question_id];
                (working[i].row->condition == Condition::L ? q.first : q.second).push_back(i);
            }
            std::vector<std::size_t> balanced;
            for (const auto& [question, sides] : by_question) {
                const auto& ls = sides.first;
                const auto& hs = sides.second;
                if (ls.empty() || hs.empty()) continue;  // single-condition: discarded
                auto take = [&](const std::vector<std::size_t>& side, std::size_t k) {
                    if (k == side.size()) {  // already balanced: no randomness spent
                        for (std::size_t i : side) balanced.push_back(i);
                        return;
                    }
                    std::vector<std::size_t> pick =
                        balance_rng.sample_without_replacement(side.size(), k);
                    std::sort(pick.begin(), pick.end());
                    for (std::size_t p : pick) balanced.push_back(side[p]);
                };
                const std::size_t k = std::min(ls.size(), hs.size());
                take(ls, k);
                take(hs, k);
            }
            if (balanced.empty())
                throw DataError("run_loso: fold " + test_speaker +
                                ": empty training set after balancing");
            for (std::size_t i : balanced)
                fold_audit.balance_units.push_back(working[i].row->identity());

            // Assemble training matrix.
            std::vector<std::vector<double>> x;
            std::vector<int> y;
            if (cfg.task == ExperimentConfig::Task::question_level) {
                for (std::size_t i : balanced) {
                    x.push_back(detail::project(fold_values[i], active_features));
                    y.push_back(working[i].row->condition == Condition::H ? 1 : 0);
                    fold_audit.training_units.push_back(working[i].row->identity());
                }
            } else {
                std::map<std::string, std::vector<std::size_t>> train_series;
                for (std::size_t i : balanced)
                    train_series[working[i].row->series_id].push_back(i);
                for (const auto& [series, idx] : train_series) {
                    // Summaries run over the fold-normalized values.
                    std::vector<detail::WorkingRow> tmp(idx.size());
                    std::vector<const detail::WorkingRow*> qrows;
                    for (std::size_t j = 0; j < idx.size(); ++j) {
                        tmp[j].row = working[idx[j]].row;
                        tmp[j].values = fold_values[idx[j]];
                        qrows.push_back(&tmp[j]);
                        fold_audit.training_units.push_back(working[idx[j]].row->identity());
                    }
                    x.push_back(detail::summarize_active(qrows, active_features));
                    y.push_back(detail::series_condition(qrows, series) == Condition::H ? 1
                                                                                        : 0);
                }
            }

            TrainConfig forest_cfg = cfg.forest;
            forest_cfg.seed =
                Rng::substream(cfg.forest.seed,
                               {kFoldForestTag, static_cast<std::uint64_t>(fold),
                                static_cast<std::uint64_t>(seed)})
                    .next_u64();
            const Forest forest = train_forest(x, y, forest_cfg);

            // Score this fold's units.
            if (cfg.task == ExperimentConfig::Task::question_level) {
                for (std::size_t u = 0; u < test_idx.size(); ++u) {
                    const std::vector<double> probe =
                        detail::project(fold_values[test_idx[u]], active_features);
                    units[u].posterior_sum.add(predict_proba(forest, probe));
                }
            } else {
                std::size_t u = 0;
                for (const auto& [series, idx] : test_series) {
                    std::vector<detail::WorkingRow> tmp(idx.size());
                    std::vector<const detail::WorkingRow*> qrows;
                    for (std::size_t j = 0; j < idx.size(); ++j) {
                        tmp[j].row = working[idx[j]].row;
                        tmp[j].values = fold_values[idx[j]];
                        qrows.push_back(&tmp[j]);
                    }
                    const std::vector<double> probe =
                        detail::summarize_active(qrows, active_features);
                    units[u].posterior_sum.add(predict_proba(forest, probe));
                    ++u;
                }
            }
        }

        const double clamp = cfg.posterior_clamp();
        for (auto& unit : units) {
            double p = unit.posterior_sum.value() / static_cast<double>(cfg.n_seeds);
            p = std::min(std::max(p, clamp), 1.0 - clamp);
            ScoreEntry entry;
            entry.speaker_id = test_speaker;
            entry.unit_id = unit.unit_id;
            entry.condition = unit.condition;
            entry.posterior_h = p;
            entry.posterior_true = unit.condition == Condition::H ? p : 1.0 - p;
            scores.entries.push_back(std::move(entry));
        }
        if (audit) audit->push_back(std::move(fold_audit));
    }
    return scores;
}

inline ScoreSet run_loso(const std::vector<FeatureRow>& rows, const ExperimentConfig& cfg,
                         std::vector<FoldAudit>* audit = nullptr) {
    return run_loso(rows, cfg, all_features(), audit);
}

// (-1/N sum ln p_i) / ln 2, evaluated per entry in log-2 units so the
// closed-form cases (all 0.5 -> 1.0; {0.5, 0.25} -> 1.5) are bit-exact.
inline double cross_entropy(const ScoreSet& scores) {
    if (scores.entries.empty()) throw ArgumentError("cross_entropy: empty score set");
    ExactSum sum;
    for (const auto& e : scores.entries) sum.add(std::log(e.posterior_true) / std::numbers::ln2);
    return -sum.value() / static_cast<double>(scores.entries.size());
}

// Posterior for H strictly above the threshold predicts H; a tie predicts L.
inline double accuracy(const ScoreSet& scores, double threshold = 0.5) {
    if (scores.entries.empty()) throw ArgumentError("accuracy: empty score set");
    std::size_t correct = 0;
    for (const auto& e : scores.entries) {
        const bool predict_h = e.posterior_h > threshold;
        if (predict_h == (e.condition == Condition::H)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(scores.entries.size());
}

// Percentile bootstrap over speakers: resample the speaker set with
// replacement, repeat each speaker's units per multiplicity, take the CE
// distribution's 2.5/97.5 percentiles.
inline std::pair<double, double> bootstrap_ci(const ScoreSet& scores, int reps = 1000,
                                              std::uint64_t seed = 7) {
    if (scores.entries.empty()) throw ArgumentError("bootstrap_ci: empty score set");
    std::map<std::string, std::vector<double>> terms_by_speaker;
    for (const auto& e : scores.entries)
        terms_by_speaker[e.speaker_id].push_back(std::log(e.posterior_true) /
                                                 std::numbers::ln2);
    std::vector<const std::vector<double>*> speakers;
    for (const auto& [id, terms] : terms_by_speaker) speakers.push_back(&terms);

    Rng rng = Rng::substream(seed, {kBootstrapStreamTag});
    std::vector<double> ces;
    ces.reserve(static_cast<std::size_t>(reps));
    for (int rep = 0; rep < reps; ++rep) {
        ExactSum sum;
        std::size_t n = 0;
        for (std::size_t s = 0; s < speakers.size(); ++s) {
            const auto& terms = *speakers[rng.uniform_index(speakers.size())];
            for (double t : terms) sum.add(t);
            n += terms.size();
        }
        ces.push_back(-sum.value() / static_cast<double>(n));
    }
    std::sort(ces.begin(), ces.end());
    return {quantile_sorted(ces, 0.025), quantile_sorted(ces, 0.975)};
}

struct RfeStep {
    std::string removed_feature;
    std::vector<std::string> remaining;  // names, after this removal
    double ce;
    double accuracy;
};

struct RfeTrace {
    double initial_ce = 0.0;
    double initial_accuracy = 0.0;
    std::vector<RfeStep> steps;
    std::vector<std::string> best_subset;
    double best_ce = 0.0;
    double best_accuracy = 0.0;
};

// Backward elimination on the 16 base features; at series level each
// removal drops the feature's three quantile summaries. The CE driving the
// search is the pooled LOSO CE, reused deliberately as the paper does.
inline RfeTrace rfe(const std::vector<FeatureRow>& rows, const ExperimentConfig& cfg) {
    std::vector<std::size_t> active = all_features();
    if (active.size() < 2) throw ArgumentError("rfe: need at least 2 features");

    auto evaluate = [&](const std::vector<std::size_t>& subset) {
        const ScoreSet s = run_loso(rows, cfg, subset);
        return std::make_pair(cross_entropy(s), accuracy(s));
    };
    auto names_of = [](const std::vector<std::size_t>& subset) {
        std::vector<std::string> names;
        for (std::size_t f : subset) names.emplace_back(kFeatureNames[f]);
        return names;
    };

    RfeTrace trace;
    std::tie(trace.initial_ce, trace.initial_accuracy) = evaluate(active);
    trace.best_subset = names_of(active);
    trace.best_ce = trace.initial_ce;
    trace.best_accuracy = trace.initial_accuracy;

    while (active.size() > 1) {
        double best_ce = 0.0, best_acc = 0.0;
        std::size_t best_pos = active.size();
        for (std::size_t pos = 0; pos < active.size(); ++pos) {
            std::vector<std::size_t> candidate = active;
            candidate.erase(candidate.begin() + static_cast<std::ptrdiff_t>(pos));
            const auto [ce, acc] = evaluate(candidate);
            if (best_pos == active.size() || ce < best_ce) {
                best_ce = ce;
                best_acc = acc;
                best_pos = pos;
            }
        }
        RfeStep step;
        step.removed_feature = std::string(kFeatureNames[active[best_pos]]);
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_pos));
        step.remaining = names_of(active);
        step.ce = best_ce;
        step.accuracy = best_acc;
        if (best_ce < trace.best_ce) {
            trace.best_ce = best_ce;
            trace.best_accuracy = best_acc;
            trace.best_subset = step.remaining;
        }
        trace.steps.push_back(std::move(step));
    }
    return trace;
}

// Fully-normalized copy of a dataset for descriptive reporting (not fold
// safe: question stats pool every speaker).
inline std::vector<FeatureRow> normalize_dataset(const std::vector<FeatureRow>& rows,
                                                 ExperimentConfig::NormMode mode) {
    std::vector<FeatureRow> out = rows;
    if (mode == ExperimentConfig::NormMode::none) return out;

    std::map<std::string, std::vector<std::size_t>> by_speaker;
    for (std::size_t i = 0; i < out.size(); ++i) by_speaker[out[i].speaker_id].push_back(i);
    for (const auto& [speaker, idx] : by_speaker) {
        std::vector<WeightedRow> samples;
        for (std::size_t i : idx) samples.push_back({&rows[i].features, rows[i].condition});
        const NormalizationStats stats = speaker_stats(samples, speaker);
        for (std::size_t i : idx) out[i].features = apply_z(rows[i].features, stats);
    }
    if (mode == ExperimentConfig::NormMode::speaker) return out;

    std::map<std::string, std::vector<std::size_t>> by_question;
    for (std::size_t i = 0; i < out.size(); ++i) by_question[out[i].question_id].push_back(i);
    for (const auto& [question, idx] : by_question) {
        std::vector<WeightedRow> samples;
        for (std::size_t i : idx) samples.push_back({&out[i].features, out[i].condition});
        const NormalizationStats stats = question_stats(samples, question);
        for (std::size_t i : idx) out[i].features = apply_z(out[i].features, stats);
    }
    return out;
}

struct ShiftEntry {
    std::string speaker_id;
    std::string feature;
    double median_l;
    double median_h;
    double abs_shift;
};

// Per speaker and feature: condition medians of the normalized values and
// their absolute difference, ordered per feature by descending shift
// (ties by speaker id). L-only questions are excluded so both medians
// cover comparable material.
inline std::vector<ShiftEntry> feature_shift_report(const std::vector<FeatureRow>& normalized) {
    std::map<std::string, std::vector<const FeatureRow*>> by_speaker;
    for (const auto& r : normalized)
        if (!r.l_only) by_speaker[r.speaker_id].push_back(&r);

    std::vector<ShiftEntry> report;
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        std::vector<ShiftEntry> block;
        for (const auto& [speaker, rws] : by_speaker) {
            std::vector<double> ls, hs;
            for (const auto* r : rws) {
                if (r->features.missing[f]) continue;
                (r->condition == Condition::L ? ls : hs).push_back(r->features.values[f]);
            }
            ShiftEntry e;
            e.speaker_id = speaker;
            e.feature = std::string(kFeatureNames[f]);
            e.median_l = ls.empty() ? std::numeric_limits<double>::quiet_NaN() : median(ls);
            e.median_h = hs.empty() ? std::numeric_limits<double>::quiet_NaN() : median(hs);
            e.abs_shift = std::abs(e.median_h - e.median_l);
            block.push_back(std::move(e));
        }
        std::sort(block.begin(), block.end(), [](const ShiftEntry& a, const ShiftEntry& b) {
            const double sa = std::isnan(a.abs_shift) ? -1.0 : a.abs_shift;
            const double sb = std::isnan(b.abs_shift) ? -1.0 : b.abs_shift;
            if (sa != sb) return sa > sb;
            return a.speaker_id < b.speaker_id;
        });
        for (auto& e : block) report.push_back(std::move(e));
    }
    return report;
}

}  // namespace trustspeech
