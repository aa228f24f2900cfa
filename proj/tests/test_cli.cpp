#include <catch2/catch_amalgamated.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trustspeech/cli.hpp"

using namespace trustspeech;
using Catch::Matchers::ContainsSubstring;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "trustspeech_tests" / "cli" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

// Redirects fds 1 and 2 into files for the lifetime of the object; run_cli
// writes through std::cout/std::printf and std::cerr, all of which share them.
class CaptureStreams {
  public:
    CaptureStreams(const std::filesystem::path& out_path, const std::filesystem::path& err_path) {
        std::fflush(stdout);
        std::fflush(stderr);
        saved_out_ = ::dup(1);
        saved_err_ = ::dup(2);
        redirect(out_path, 1);
        redirect(err_path, 2);
    }
    ~CaptureStreams() {
        std::fflush(stdout);
        std::fflush(stderr);
        std::cout.flush();
        std::cerr.flush();
        ::dup2(saved_out_, 1);
        ::dup2(saved_err_, 2);
        ::close(saved_out_);
        ::close(saved_err_);
    }
    CaptureStreams(const CaptureStreams&) = delete;
    CaptureStreams& operator=(const CaptureStreams&) = delete;

  private:
    static void redirect(const std::filesystem::path& path, int fd) {
        const int file = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        REQUIRE(file >= 0);
        ::dup2(file, fd);
        ::close(file);
    }
    int saved_out_;
    int saved_err_;
};

CliResult run(const std::vector<std::string>& args) {
    std::vector<std::string> full = {"trustspeech"};
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(full.size());
    for (const auto& a : full) argv.push_back(a.c_str());

    const auto dir = std::filesystem::temp_directory_path() / "trustspeech_tests" / "cli";
    std::filesystem::create_directories(dir);
    const auto out_path = dir / "stdout.txt";
    const auto err_path = dir / "stderr.txt";

    CliResult result;
    {
        CaptureStreams capture(out_path, err_path);
        result.code = cli::run_cli(static_cast<int>(argv.size()), argv.data());
    }
    result.out = slurp(out_path);
    result.err = slurp(err_path);
    return result;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

void write_tone(const std::filesystem::path& path, double freq_hz) {
    Waveform w;
    w.sample_rate = 16000.0;
    w.samples.resize(16000);
    for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] =
            0.4 * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / 16000.0);
    write_wav(path.string(), w);
}

// Two-record corpus: one tone per speaker, alignment covering [0.05, 0.95].
std::filesystem::path write_tiny_corpus(const std::filesystem::path& dir) {
    write_tone(dir / "utt1.wav", 150.0);
    write_tone(dir / "utt2.wav", 200.0);
    const std::string align = R"({"words":[{"start":0.05,"end":0.95,"word":"hola"}]})";
    write_file(dir / "utt1.json", align);
    write_file(dir / "utt2.json", align);
    write_file(dir / "manifest.json", R"({
      "questions": [{"id": "q1"}],
      "records": [
        {"speaker_id": "spk01", "session_id": "s1", "series_id": "sA",
         "question_id": "q1", "condition": "L", "order_index": 0,
         "audio_path": "utt1.wav", "alignment_path": "utt1.json", "transcript": "hola"},
        {"speaker_id": "spk02", "session_id": "s2", "series_id": "sB",
         "question_id": "q1", "condition": "H", "order_index": 0,
         "audio_path": "utt2.wav", "alignment_path": "utt2.json", "transcript": "hola"}
      ]
    })");
    return dir / "manifest.json";
}

}  // namespace

TEST_CASE("run_cli: usage errors exit 2, data errors exit 1") {
    // parser-level rejections
    REQUIRE(run({}).code == 2);                      // a subcommand is required
    REQUIRE(run({"frobnicate"}).code == 2);          // unknown subcommand
    REQUIRE(run({"extract"}).code == 2);             // --manifest is required
    REQUIRE(run({"extract", "--bogus"}).code == 2);  // unknown flag
    REQUIRE(run({"synth"}).code == 2);               // --out is required

    const CliResult help = run({"--help"});
    REQUIRE(help.code == 0);
    REQUIRE_THAT(help.out, ContainsSubstring("extract"));
    REQUIRE_THAT(help.out, ContainsSubstring("syllables"));

    // argument contract: exactly one row source
    const CliResult neither = run({"eval"});
    REQUIRE(neither.code == 2);
    REQUIRE_THAT(neither.err, ContainsSubstring("exactly one"));
    REQUIRE(run({"eval", "--features", "a.csv", "--manifest", "b.json"}).code == 2);

    REQUIRE(run({"report", "--features", "x.csv", "--top-k", "0"}).code == 2);
    REQUIRE(run({"syllables"}).code == 2);

    // missing input files are data errors, not usage errors
    const CliResult missing = run({"eval", "--manifest", "/nonexistent/manifest.json"});
    REQUIRE(missing.code == 1);
    REQUIRE_THAT(missing.err, ContainsSubstring("error:"));
}

TEST_CASE("run_cli: config problems are collected and exit 2") {
    const auto dir = fresh_dir("config");

    const auto bad = dir / "bad.json";
    write_file(bad, R"({"task": "question_level", "learning_rate": 0.1, "n_seeds": 0,
                        "forest": {"n_trees": 0, "epochs": 3}})");
    const CliResult r = run({"eval", "--features", "unused.csv", "--config", bad.string()});
    REQUIRE(r.code == 2);
    REQUIRE_THAT(r.err, ContainsSubstring("invalid experiment config:"));
    REQUIRE_THAT(r.err, ContainsSubstring("unknown key \"learning_rate\""));
    REQUIRE_THAT(r.err, ContainsSubstring("unknown key \"forest.epochs\""));
    REQUIRE_THAT(r.err, ContainsSubstring("n_seeds: must be >= 1"));
    REQUIRE_THAT(r.err, ContainsSubstring("forest.n_trees: must be >= 1"));

    const auto garbled = dir / "garbled.json";
    write_file(garbled, "{{{");
    REQUIRE(run({"eval", "--features", "unused.csv", "--config", garbled.string()}).code == 2);

    // flag overrides go through the same validation
    REQUIRE(run({"eval", "--features", "unused.csv", "--seeds", "0"}).code == 2);
    REQUIRE(run({"eval", "--features", "unused.csv", "--trees", "0"}).code == 2);
    REQUIRE(run({"eval", "--features", "unused.csv", "--task", "bogus"}).code == 2);
    REQUIRE(run({"eval", "--features", "unused.csv", "--norm", "bogus"}).code == 2);
    REQUIRE(run({"synth", "--spec", (dir / "missing.json").string(), "--out", dir.string()}).code ==
            2);
}

TEST_CASE("run_cli: extract writes feature and track CSVs") {
    const auto dir = fresh_dir("extract");
    const auto manifest = write_tiny_corpus(dir);

    const CliResult r = run({"extract", "--manifest", manifest.string(), "--out",
                             (dir / "feats.csv").string(), "--dump-tracks",
                             (dir / "tracks").string()});
    REQUIRE(r.code == 0);
    REQUIRE_THAT(r.out, ContainsSubstring("wrote 2 rows"));

    const auto rows = read_feature_csv(dir / "feats.csv");
    REQUIRE(rows.size() == 2);
    REQUIRE(rows[0].identity() == "spk01/sA/q1");
    REQUIRE_THAT(rows[0].features.values[kF0Median],
                 Catch::Matchers::WithinAbs(std::log(150.0), 0.02));
    REQUIRE_THAT(rows[1].features.values[kF0Median],
                 Catch::Matchers::WithinAbs(std::log(200.0), 0.02));

    // one track dump per record, named by series and question
    const std::string dump = slurp(dir / "tracks" / "sA_q1_tracks.csv");
    REQUIRE(std::filesystem::exists(dir / "tracks" / "sB_q1_tracks.csv"));
    REQUIRE_THAT(dump, ContainsSubstring(
                           "time_s,f0_log,f0_defined,energy_log,energy_defined,"
                           "f1_hz,f2_hz,formants_defined\n"));
    REQUIRE(count_lines(dump) == 97);  // header + one line per 1 s / 10 ms frame

    // tracker flags reach the DSP config; failures are tagged with the identity
    const CliResult bad = run({"extract", "--manifest", manifest.string(), "--out",
                               (dir / "feats2.csv").string(), "--f0-max", "9000"});
    REQUIRE(bad.code == 1);
    REQUIRE_THAT(bad.err, ContainsSubstring("spk01/sA/q1"));
    REQUIRE_THAT(bad.err, ContainsSubstring("f0_max"));
}

TEST_CASE("run_cli: synth, eval, rfe, and report pipeline") {
    const auto dir = fresh_dir("pipeline");
    const auto corpus = dir / "corpus";

    write_file(dir / "spec.json", R"({"n_speakers": 3, "questions_per_series": 5,
                                      "n_l_only": 1, "seed": 9,
                                      "effect": {"f0_median": 0.9, "syllrate_full": 0.6}})");
    const CliResult synth =
        run({"synth", "--spec", (dir / "spec.json").string(), "--out", corpus.string()});
    REQUIRE(synth.code == 0);
    // 3 speakers x (6 questions in L + 5 in H)
    REQUIRE_THAT(synth.out, ContainsSubstring("wrote 33 records"));
    REQUIRE(std::filesystem::exists(corpus / "manifest.json"));

    write_file(dir / "cfg.json", R"({"task": "question_level", "norm_mode": "speaker",
                                     "n_seeds": 1, "min_per_condition": 3,
                                     "bootstrap_reps": 64, "bootstrap_seed": 5,
                                     "forest": {"n_trees": 9, "seed": 4}})");

    const CliResult eval0 = run({"eval", "--manifest", (corpus / "manifest.json").string(),
                                 "--save-features", (dir / "feats.csv").string(), "--config",
                                 (dir / "cfg.json").string(), "--out", (dir / "r0.json").string(),
                                 "--scores-csv", (dir / "scores.csv").string(), "--no-timestamp"});
    REQUIRE(eval0.code == 0);
    REQUIRE_THAT(eval0.out, ContainsSubstring("CE="));

    const std::string feats = slurp(dir / "feats.csv");
    REQUIRE(count_lines(feats) == 34);  // header + 33 rows

    const std::string scores = slurp(dir / "scores.csv");
    REQUIRE_THAT(scores,
                 ContainsSubstring("speaker_id,unit_id,condition,posterior_true,posterior_h\n"));
    // test units: 5 shared questions x 2 conditions x 3 speakers; l_only excluded
    REQUIRE(count_lines(scores) == 31);

    const nlohmann::json r0 = nlohmann::json::parse(slurp(dir / "r0.json"));
    REQUIRE(r0.contains("config"));
    REQUIRE_FALSE(r0.contains("generated_at"));
    REQUIRE(r0.at("per_unit_scores").size() == 30);
    const auto& metrics = r0.at("metrics");
    REQUIRE(metrics.at("ce").get<double>() > 0.0);
    REQUIRE(metrics.at("accuracy").get<double>() >= 0.0);
    REQUIRE(metrics.at("accuracy").get<double>() <= 1.0);
    REQUIRE(metrics.at("ce_ci").at(0).get<double>() <= metrics.at("ce_ci").at(1).get<double>());

    // the saved CSV reproduces the manifest run exactly, and reruns are byte-identical
    for (const char* name : {"r1.json", "r2.json"}) {
        const CliResult again =
            run({"eval", "--features", (dir / "feats.csv").string(), "--config",
                 (dir / "cfg.json").string(), "--out", (dir / name).string(), "--no-timestamp"});
        REQUIRE(again.code == 0);
    }
    REQUIRE(slurp(dir / "r1.json") == slurp(dir / "r0.json"));
    REQUIRE(slurp(dir / "r2.json") == slurp(dir / "r1.json"));

    const CliResult stamped = run({"eval", "--features", (dir / "feats.csv").string(), "--config",
                                   (dir / "cfg.json").string(), "--out",
                                   (dir / "r3.json").string()});
    REQUIRE(stamped.code == 0);
    REQUIRE(nlohmann::json::parse(slurp(dir / "r3.json")).contains("generated_at"));

    const CliResult rfe_run =
        run({"rfe", "--features", (dir / "feats.csv").string(), "--config",
             (dir / "cfg.json").string(), "--out", (dir / "rfe.json").string(), "--trace-csv",
             (dir / "trace.csv").string(), "--no-timestamp"});
    REQUIRE(rfe_run.code == 0);
    REQUIRE_THAT(rfe_run.out, ContainsSubstring("rfe:"));

    const std::string trace = slurp(dir / "trace.csv");
    REQUIRE(count_lines(trace) == 17);  // header + initial + 15 elimination steps
    REQUIRE(trace.rfind("step,removed_feature,ce\n0,,", 0) == 0);
    REQUIRE_THAT(trace, ContainsSubstring("\n15,"));

    const nlohmann::json rfe_json = nlohmann::json::parse(slurp(dir / "rfe.json"));
    REQUIRE(rfe_json.at("steps").size() == 15);
    REQUIRE(rfe_json.at("initial").at("n_features").get<int>() == 16);
    REQUIRE_FALSE(rfe_json.at("best").at("features").empty());
    REQUIRE(rfe_json.at("best").at("ce").get<double>() <=
            rfe_json.at("initial").at("ce").get<double>());

    const CliResult report = run({"report", "--features", (dir / "feats.csv").string(), "--norm",
                                  "speaker_question", "--results", (dir / "r1.json").string(),
                                  "--out", (dir / "shifts.csv").string(), "--top-k", "2"});
    REQUIRE(report.code == 0);
    REQUIRE_THAT(report.out, ContainsSubstring("metrics:"));
    REQUIRE_THAT(report.out, ContainsSubstring("f0_median:"));

    const std::string shifts = slurp(dir / "shifts.csv");
    REQUIRE_THAT(shifts, ContainsSubstring("feature,speaker_id,median_l,median_h,abs_shift\n"));
    REQUIRE(count_lines(shifts) == 49);  // header + 16 features x 3 speakers
}

TEST_CASE("run_cli: syllables prints breakdowns and a total") {
    const CliResult r = run({"syllables", "hola", "mundo"});
    REQUIRE(r.code == 0);
    REQUIRE_THAT(r.out, ContainsSubstring("hola: ho-la (2)"));
    REQUIRE_THAT(r.out, ContainsSubstring("mundo: mun-do (2)"));
    REQUIRE_THAT(r.out, ContainsSubstring("total: 4"));
}
