#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "trustspeech/dataset.hpp"

using namespace trustspeech;
using Catch::Matchers::ContainsSubstring;

namespace {

std::filesystem::path temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "trustspeech_tests" / "dataset";
    std::filesystem::create_directories(dir);
    return dir;
}

FeatureRow make_row(const std::string& speaker, const std::string& question, Condition cond,
                    double base) {
    FeatureRow row;
    row.speaker_id = speaker;
    row.session_id = speaker + "_s1";
    row.series_id = speaker + "_" + to_string(cond);
    row.question_id = question;
    row.condition = cond;
    for (std::size_t f = 0; f < kNumFeatures; ++f)
        row.features.set(f, base + static_cast<double>(f));
    return row;
}

void rewrite_line(const std::filesystem::path& src, const std::filesystem::path& dst,
                  std::size_t line_no, const std::string& replacement) {
    std::ifstream in(src);
    std::ofstream out(dst);
    std::string line;
    for (std::size_t i = 1; std::getline(in, line); ++i)
        out << (i == line_no ? replacement : line) << "\n";
}

}  // namespace

TEST_CASE("feature CSV: round-trip is exact") {
    std::vector<FeatureRow> rows = {make_row("spk01", "q1", Condition::L, 0.1),
                                    make_row("spk01", "q1", Condition::H, -3.7),
                                    make_row("spk02", "q2", Condition::L, 1e-17)};
    rows[0].features.set(3, 1.0 / 3.0);
    rows[0].features.set(4, -0.49999999999999994);
    rows[1].features.values[5] = std::numeric_limits<double>::quiet_NaN();
    rows[1].features.missing[5] = true;

    const auto path = temp_dir() / "roundtrip.csv";
    write_feature_csv(path, rows);
    const auto back = read_feature_csv(path);

    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        REQUIRE(back[i].speaker_id == rows[i].speaker_id);
        REQUIRE(back[i].session_id == rows[i].session_id);
        REQUIRE(back[i].series_id == rows[i].series_id);
        REQUIRE(back[i].question_id == rows[i].question_id);
        REQUIRE(back[i].condition == rows[i].condition);
        for (std::size_t f = 0; f < kNumFeatures; ++f) {
            REQUIRE(back[i].features.missing[f] == rows[i].features.missing[f]);
            if (!rows[i].features.missing[f])
                REQUIRE(back[i].features.values[f] == rows[i].features.values[f]);
        }
    }
}

TEST_CASE("feature CSV: l_only inferred as never-seen-in-H") {
    std::vector<FeatureRow> rows = {make_row("spk01", "q_shared", Condition::L, 1.0),
                                    make_row("spk01", "q_shared", Condition::H, 2.0),
                                    make_row("spk01", "q_probe", Condition::L, 3.0),
                                    make_row("spk02", "q_probe", Condition::L, 4.0)};
    const auto path = temp_dir() / "lonly.csv";
    write_feature_csv(path, rows);
    const auto back = read_feature_csv(path);
    for (const auto& row : back) {
        if (row.question_id == "q_probe") REQUIRE(row.l_only);
        else REQUIRE_FALSE(row.l_only);
    }
}

TEST_CASE("feature CSV: malformed input is rejected with location") {
    const auto good = temp_dir() / "good.csv";
    write_feature_csv(good, {make_row("spk01", "q1", Condition::L, 1.0)});

    const auto bad_header = temp_dir() / "bad_header.csv";
    rewrite_line(good, bad_header, 1, "id,who,what");
    REQUIRE_THROWS_AS(read_feature_csv(bad_header), SchemaError);

    const auto short_row = temp_dir() / "short_row.csv";
    rewrite_line(good, short_row, 2, "spk01,s1,x,q1,L,0.5");
    REQUIRE_THROWS_MATCHES(read_feature_csv(short_row), ParseError,
                           Catch::Matchers::MessageMatches(ContainsSubstring(":2")));

    // corrupt one numeric field, keeping the column count
    {
        std::ifstream in(good);
        std::string header, row;
        std::getline(in, header);
        std::getline(in, row);
        const auto pos = row.find(",1,");  // first feature value "1"
        row.replace(pos, 3, ",oops,");
        std::ofstream out(temp_dir() / "bad_value.csv");
        out << header << "\n" << row << "\n";
    }
    REQUIRE_THROWS_MATCHES(read_feature_csv(temp_dir() / "bad_value.csv"), ParseError,
                           Catch::Matchers::MessageMatches(ContainsSubstring("oops")));

    const auto empty = temp_dir() / "empty.csv";
    std::ofstream(empty).close();
    REQUIRE_THROWS_AS(read_feature_csv(empty), ParseError);
    REQUIRE_THROWS_AS(read_feature_csv(temp_dir() / "does_not_exist.csv"), DataError);
}

TEST_CASE("imputed_values: missing entries become zero") {
    FeatureVector fv;
    fv.set(0, 2.5);
    fv.set(7, -1.0);
    const auto vals = imputed_values(fv);
    REQUIRE(vals[0] == 2.5);
    REQUIRE(vals[7] == -1.0);
    for (std::size_t f = 0; f < kNumFeatures; ++f)
        if (f != 0 && f != 7) REQUIRE(vals[f] == 0.0);
}

TEST_CASE("extract_dataset: runs the pipeline and tags failures") {
    const auto dir = temp_dir();

    // one real utterance: a 1 s tone with a matching alignment
    Waveform w;
    w.sample_rate = 16000.0;
    w.samples.resize(16000);
    for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] =
            0.4 * std::sin(2.0 * std::numbers::pi * 150.0 * static_cast<double>(i) / 16000.0);
    write_wav((dir / "utt.wav").string(), w);
    std::ofstream(dir / "utt.json")
        << R"({"words":[{"start":0.05,"end":0.95,"word":"hola"}]})";

    SessionManifest m;
    UtteranceRecord rec;
    rec.speaker_id = "spk01";
    rec.session_id = "s1";
    rec.series_id = "spk01_L";
    rec.question_id = "q1";
    rec.condition = Condition::L;
    rec.audio_path = (dir / "utt.wav").string();
    rec.alignment_path = (dir / "utt.json").string();
    rec.transcript = "hola";
    m.records.push_back(rec);

    const auto rows = extract_dataset(m);
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].identity() == "spk01/spk01_L/q1");
    REQUIRE_FALSE(rows[0].features.missing[kSyllrateFull]);
    REQUIRE_THAT(rows[0].features.values[kF0Median],
                 Catch::Matchers::WithinAbs(std::log(150.0), 0.02));

    m.records[0].audio_path = (dir / "missing.wav").string();
    REQUIRE_THROWS_MATCHES(extract_dataset(m), DataError,
                           Catch::Matchers::MessageMatches(ContainsSubstring("spk01/spk01_L/q1")));
}
