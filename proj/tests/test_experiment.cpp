#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "trustspeech/experiment.hpp"

using namespace trustspeech;

namespace {

ScoreEntry entry(const std::string& speaker, Condition cond, double posterior_h) {
    ScoreEntry e;
    e.speaker_id = speaker;
    e.unit_id = speaker + "/u";
    e.condition = cond;
    e.posterior_h = posterior_h;
    e.posterior_true = cond == Condition::H ? posterior_h : 1.0 - posterior_h;
    return e;
}

// Synthetic LOSO dataset: `n_q` shared questions per condition per speaker,
// feature 0 carries the condition (H ~ +1, L ~ -1), the rest is noise.
std::vector<FeatureRow> loso_rows(const std::vector<std::string>& speakers, int n_q, Rng& rng,
                                  double signal = 1.0, double noise = 0.05) {
    std::vector<FeatureRow> rows;
    for (const auto& spk : speakers) {
        for (Condition cond : {Condition::L, Condition::H}) {
            for (int q = 0; q < n_q; ++q) {
                FeatureRow row;
                row.speaker_id = spk;
                row.session_id = spk + "_s1";
                row.series_id = spk + "_" + to_string(cond);
                row.question_id = "q" + std::to_string(q);
                row.condition = cond;
                for (std::size_t f = 0; f < kNumFeatures; ++f) {
                    const double base = f == 0
                                            ? (cond == Condition::H ? signal : -signal)
                                            : 0.0;
                    row.features.set(f, base + noise * rng.normal());
                }
                rows.push_back(std::move(row));
            }
        }
    }
    return rows;
}

ExperimentConfig small_config(ExperimentConfig::Task task) {
    ExperimentConfig cfg;
    cfg.task = task;
    cfg.n_seeds = 2;
    cfg.forest.n_trees = 15;
    cfg.forest.seed = 3;
    return cfg;
}

std::string question_of(const std::string& identity) {
    return identity.substr(identity.rfind('/') + 1);
}

}  // namespace

TEST_CASE("cross_entropy: closed forms are bit-exact") {
    ScoreSet flat;
    for (int i = 0; i < 8; ++i) flat.entries.push_back(entry("s", Condition::H, 0.5));
    REQUIRE(cross_entropy(flat) == 1.0);

    ScoreSet mixed;
    mixed.entries.push_back(entry("s", Condition::H, 0.5));
    mixed.entries.push_back(entry("s", Condition::L, 0.75));  // posterior_true 0.25
    REQUIRE(cross_entropy(mixed) == 1.5);

    // confident-and-right everywhere, limited only by a 0.999 clamp
    ScoreSet sure;
    for (int i = 0; i < 4; ++i) sure.entries.push_back(entry("s", Condition::H, 0.999));
    REQUIRE_THAT(cross_entropy(sure),
                 Catch::Matchers::WithinAbs(0.0014434168696687186, 1e-17));

    REQUIRE_THROWS_AS(cross_entropy(ScoreSet{}), ArgumentError);
}

TEST_CASE("accuracy: threshold semantics, ties predict L") {
    ScoreSet s;
    s.entries.push_back(entry("a", Condition::H, 0.8));   // correct
    s.entries.push_back(entry("a", Condition::L, 0.2));   // correct
    s.entries.push_back(entry("a", Condition::H, 0.5));   // tie -> L: wrong
    s.entries.push_back(entry("a", Condition::L, 0.5));   // tie -> L: correct
    REQUIRE(accuracy(s) == 0.75);
    REQUIRE(accuracy(s, 0.19) == 0.5);  // 0.2 now predicts H
    REQUIRE_THROWS_AS(accuracy(ScoreSet{}), ArgumentError);
}

TEST_CASE("bootstrap_ci: one speaker collapses to a point") {
    ScoreSet s;
    s.entries.push_back(entry("solo", Condition::H, 0.5));
    s.entries.push_back(entry("solo", Condition::L, 0.25));  // posterior_true 0.75
    const auto [lo, hi] = bootstrap_ci(s, 200, 42);
    REQUIRE(lo == hi);
    REQUIRE(lo == cross_entropy(s));
}

TEST_CASE("bootstrap_ci: brackets the speaker mixture") {
    // speaker a: CE 1 per unit; speaker b: CE 0.5 per unit
    ScoreSet s;
    for (int i = 0; i < 4; ++i) {
        s.entries.push_back(entry("a", Condition::H, 0.5));
        s.entries.push_back(entry("b", Condition::H, 0.7071067811865476));
    }
    const auto [lo, hi] = bootstrap_ci(s, 1000, 7);
    REQUIRE(lo <= hi);
    REQUIRE_THAT(lo, Catch::Matchers::WithinAbs(0.5, 1e-12));
    REQUIRE_THAT(hi, Catch::Matchers::WithinAbs(1.0, 1e-12));

    const auto again = bootstrap_ci(s, 1000, 7);
    REQUIRE(again.first == lo);
    REQUIRE(again.second == hi);
    REQUIRE_THROWS_AS(bootstrap_ci(ScoreSet{}), ArgumentError);
}

TEST_CASE("run_loso: question level separates, stays leak-free, reproduces") {
    Rng rng(1234);
    const auto rows = loso_rows({"spkA", "spkB", "spkC"}, 12, rng);
    const auto cfg = small_config(ExperimentConfig::Task::question_level);

    std::vector<FoldAudit> audit;
    const auto scores = run_loso(rows, cfg, &audit);

    REQUIRE(scores.entries.size() == 3 * 24);
    std::set<std::string> speakers;
    const double clamp = cfg.posterior_clamp();
    for (const auto& e : scores.entries) {
        speakers.insert(e.speaker_id);
        REQUIRE(e.posterior_h >= clamp);
        REQUIRE(e.posterior_h <= 1.0 - clamp);
        REQUIRE_THAT(e.unit_id, Catch::Matchers::ContainsSubstring("/q"));
    }
    REQUIRE(speakers == std::set<std::string>{"spkA", "spkB", "spkC"});
    REQUIRE(accuracy(scores) == 1.0);
    REQUIRE(cross_entropy(scores) < 0.5);

    // leak guard: no fold's training stage may touch the held-out speaker
    REQUIRE(audit.size() == 3);
    for (const auto& fold : audit) {
        const std::string prefix = fold.test_speaker + "/";
        for (const auto* units :
             {&fold.stats_units, &fold.balance_units, &fold.training_units}) {
            REQUIRE_FALSE(units->empty());
            for (const auto& id : *units)
                REQUIRE(id.compare(0, prefix.size(), prefix) != 0);
        }
        REQUIRE(fold.test_units.size() == 24);
        for (const auto& id : fold.test_units)
            REQUIRE(id.compare(0, prefix.size(), prefix) == 0);
    }

    const auto replay = run_loso(rows, cfg);
    REQUIRE(replay.entries.size() == scores.entries.size());
    for (std::size_t i = 0; i < scores.entries.size(); ++i) {
        REQUIRE(replay.entries[i].unit_id == scores.entries[i].unit_id);
        REQUIRE(replay.entries[i].posterior_h == scores.entries[i].posterior_h);
    }
}

TEST_CASE("run_loso: series level scores one unit per series") {
    Rng rng(77);
    const auto rows = loso_rows({"spkA", "spkB", "spkC"}, 12, rng);
    const auto scores = run_loso(rows, small_config(ExperimentConfig::Task::series_level));

    REQUIRE(scores.entries.size() == 6);  // 3 speakers x {L, H}
    for (const auto& e : scores.entries)
        REQUIRE(e.unit_id.find('/') == std::string::npos);
    REQUIRE(accuracy(scores) == 1.0);
}

TEST_CASE("run_loso: l_only questions train nothing and are never scored") {
    Rng rng(500);
    auto rows = loso_rows({"spkA", "spkB", "spkC"}, 12, rng);
    for (const auto& spk : {"spkA", "spkB", "spkC"}) {
        FeatureRow probe;
        probe.speaker_id = spk;
        probe.session_id = std::string(spk) + "_s1";
        probe.series_id = std::string(spk) + "_L";
        probe.question_id = "q_probe";
        probe.condition = Condition::L;
        probe.l_only = true;
        for (std::size_t f = 0; f < kNumFeatures; ++f) probe.features.set(f, 100.0);
        rows.push_back(std::move(probe));
    }

    std::vector<FoldAudit> audit;
    const auto scores =
        run_loso(rows, small_config(ExperimentConfig::Task::question_level), &audit);
    REQUIRE(scores.entries.size() == 3 * 24);  // probe rows not scored
    for (const auto& e : scores.entries)
        REQUIRE(e.unit_id.find("q_probe") == std::string::npos);
    for (const auto& fold : audit) {
        for (const auto& id : fold.test_units)
            REQUIRE(question_of(id) != "q_probe");
        // single-condition question: balancing discards it every seed
        for (const auto& id : fold.balance_units)
            REQUIRE(question_of(id) != "q_probe");
    }
}

TEST_CASE("run_loso: per-question balancing equalizes condition counts") {
    Rng rng(888);
    auto rows = loso_rows({"spkA", "spkB", "spkC"}, 12, rng);
    // three extra L takes of q0 for spkA (distinct synthetic series ids so
    // nothing else changes)
    for (int k = 0; k < 3; ++k) {
        FeatureRow extra;
        extra.speaker_id = "spkA";
        extra.session_id = "spkA_s1";
        extra.series_id = "spkA_L" + std::to_string(k + 2);
        extra.question_id = "q0";
        extra.condition = Condition::L;
        for (std::size_t f = 0; f < kNumFeatures; ++f)
            extra.features.set(f, -1.0 + 0.05 * rng.normal());
        rows.push_back(std::move(extra));
    }

    auto cfg = small_config(ExperimentConfig::Task::question_level);
    std::vector<FoldAudit> audit;
    run_loso(rows, cfg, &audit);

    for (const auto& fold : audit) {
        // per seed and question, L and H counts match
        std::map<std::string, std::pair<int, int>> counts;
        for (const auto& id : fold.balance_units) {
            const bool is_l = id.find("_L") != std::string::npos;
            auto& c = counts[question_of(id)];
            (is_l ? c.first : c.second) += 1;
        }
        for (const auto& [q, c] : counts) {
            INFO("fold " << fold.test_speaker << " question " << q);
            REQUIRE(c.first == c.second);
        }
        // q0 for the folds excluding spkA is balanced at 2+2 per seed; with
        // spkA training it has 5 L available and keeps 2 of them
        REQUIRE(counts["q0"].first == 2 * cfg.n_seeds);
        // a question already balanced keeps every row, every seed
        REQUIRE(counts["q1"].first == 2 * cfg.n_seeds);
        std::map<std::string, int> q1_ids;
        for (const auto& id : fold.balance_units)
            if (question_of(id) == "q1") q1_ids[id] += 1;
        REQUIRE(q1_ids.size() == 4);  // 2 speakers x 2 conditions
        for (const auto& [id, n] : q1_ids) REQUIRE(n == cfg.n_seeds);
    }
}

TEST_CASE("run_loso: configuration and data errors") {
    Rng rng(9);
    const auto rows = loso_rows({"spkA", "spkB", "spkC"}, 12, rng);
    auto cfg = small_config(ExperimentConfig::Task::question_level);

    REQUIRE_THROWS_AS(run_loso({}, cfg), ConfigError);

    auto strict = cfg;
    strict.min_per_condition = 50;
    REQUIRE_THROWS_AS(run_loso(rows, strict), ConfigError);

    auto no_seeds = cfg;
    no_seeds.n_seeds = 0;
    REQUIRE_THROWS_AS(run_loso(rows, no_seeds), ConfigError);

    REQUIRE_THROWS_AS(run_loso(rows, cfg, std::vector<std::size_t>{}), ArgumentError);

    // a series mixing conditions is corrupt at series level
    auto mixed = rows;
    mixed[0].series_id = mixed[12 * 2 - 1].series_id;  // an H row joins an L series
    bool ok = mixed[0].condition != mixed[12 * 2 - 1].condition;
    REQUIRE(ok);
    REQUIRE_THROWS_AS(run_loso(mixed, small_config(ExperimentConfig::Task::series_level)),
                      ValidationError);
}

TEST_CASE("rfe: fifteen steps, the informative feature survives") {
    Rng rng(2468);
    const auto rows = loso_rows({"spkA", "spkB", "spkC"}, 12, rng, 1.5, 0.1);
    ExperimentConfig cfg = small_config(ExperimentConfig::Task::question_level);
    cfg.n_seeds = 1;
    cfg.forest.n_trees = 7;

    const RfeTrace trace = rfe(rows, cfg);
    REQUIRE(trace.steps.size() == kNumFeatures - 1);
    for (std::size_t s = 0; s < trace.steps.size(); ++s)
        REQUIRE(trace.steps[s].remaining.size() == kNumFeatures - 1 - s);
    REQUIRE(trace.steps.back().remaining.size() == 1);

    // feature 0 carries all the signal
    const std::string informative(kFeatureNames[0]);
    REQUIRE(trace.steps.back().remaining[0] == informative);
    const auto& best = trace.best_subset;
    REQUIRE(std::find(best.begin(), best.end(), informative) != best.end());
    REQUIRE(trace.best_ce <= trace.initial_ce);
    for (const auto& step : trace.steps) REQUIRE(step.removed_feature != informative);
}

TEST_CASE("normalize_dataset: speaker stage reproduces the pinned z-score") {
    std::vector<FeatureRow> rows;
    for (double v : {0.0, 2.0}) {
        FeatureRow r;
        r.speaker_id = "spk";
        r.series_id = "spk_L";
        r.question_id = v == 0.0 ? "q1" : "q2";
        r.condition = Condition::L;
        for (std::size_t f = 0; f < kNumFeatures; ++f) r.features.set(f, v);
        rows.push_back(std::move(r));
    }
    FeatureRow h;
    h.speaker_id = "spk";
    h.series_id = "spk_H";
    h.question_id = "q1";
    h.condition = Condition::H;
    for (std::size_t f = 0; f < kNumFeatures; ++f) h.features.set(f, 4.0);
    rows.push_back(std::move(h));

    const auto none = normalize_dataset(rows, ExperimentConfig::NormMode::none);
    REQUIRE(none[2].features.values[0] == 4.0);

    const auto spk = normalize_dataset(rows, ExperimentConfig::NormMode::speaker);
    REQUIRE_THAT(spk[2].features.values[0],
                 Catch::Matchers::WithinAbs(0.9045340337332909, 1e-15));

    // question stage on top: q1 has one row per condition -> mu = mid, var
    // from both sides; the two q1 rows land symmetrically
    const auto both = normalize_dataset(rows, ExperimentConfig::NormMode::speaker_question);
    REQUIRE_THAT(both[0].features.values[0] + both[2].features.values[0],
                 Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("feature_shift_report: block structure, ranking, l_only exclusion") {
    Rng rng(13579);
    std::vector<FeatureRow> rows;
    for (const std::string spk : {"s1", "s2", "s3"}) {
        for (Condition cond : {Condition::L, Condition::H}) {
            for (int q = 0; q < 6; ++q) {
                FeatureRow r;
                r.speaker_id = spk;
                r.series_id = spk + "_" + to_string(cond);
                r.question_id = "q" + std::to_string(q);
                r.condition = cond;
                for (std::size_t f = 0; f < kNumFeatures; ++f) {
                    double v = 0.1 * rng.normal();
                    if (f == kF0Median && cond == Condition::H) v += 1.0;
                    r.features.set(f, v);
                }
                rows.push_back(std::move(r));
            }
        }
    }
    // an l_only outlier that must not contaminate the medians
    FeatureRow probe;
    probe.speaker_id = "s1";
    probe.series_id = "s1_L";
    probe.question_id = "q_probe";
    probe.condition = Condition::L;
    probe.l_only = true;
    for (std::size_t f = 0; f < kNumFeatures; ++f) probe.features.set(f, 1e6);
    rows.push_back(probe);

    const auto report = feature_shift_report(rows);
    REQUIRE(report.size() == 3 * kNumFeatures);

    // blocks follow feature order, speakers sorted by descending shift
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        for (std::size_t s = 0; s < 3; ++s) {
            const auto& e = report[f * 3 + s];
            REQUIRE(e.feature == std::string(kFeatureNames[f]));
            REQUIRE(std::abs(e.median_l) < 1000.0);  // probe excluded
            if (s > 0) REQUIRE(report[f * 3 + s - 1].abs_shift >= e.abs_shift);
            if (f == kF0Median) {
                REQUIRE(e.median_h - e.median_l > 0.5);
            } else {
                REQUIRE(e.abs_shift < 0.5);
            }
        }
    }
}

TEST_CASE("feature_shift_report: identical conditions shift by zero") {
    std::vector<FeatureRow> rows;
    for (Condition cond : {Condition::L, Condition::H}) {
        for (int q = 0; q < 3; ++q) {
            FeatureRow r;
            r.speaker_id = "solo";
            r.series_id = std::string("solo_") + to_string(cond);
            r.question_id = "q" + std::to_string(q);
            r.condition = cond;
            for (std::size_t f = 0; f < kNumFeatures; ++f)
                r.features.set(f, static_cast<double>(q));
            rows.push_back(std::move(r));
        }
    }
    for (const auto& e : feature_shift_report(rows)) {
        REQUIRE(e.median_l == e.median_h);
        REQUIRE(e.abs_shift == 0.0);
    }
}
