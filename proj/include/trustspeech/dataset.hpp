#pragma once
// Feature dataset: one row per retained utterance, produced either by
// running the extraction pipeline over a manifest or by loading a feature
// CSV dump. The CSV carries no l_only column; when loading, a question is
// marked L-only iff it never appears in the H condition anywhere in the
// file, which is the defining property.

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "trustspeech/corpus.hpp"
#include "trustspeech/errors.hpp"
#include "trustspeech/features.hpp"
#include "trustspeech/parallel.hpp"
#include "trustspeech/signal.hpp"
#include "trustspeech/wave.hpp"

namespace trustspeech {

struct FeatureRow {
    std::string speaker_id;
    std::string session_id;
    std::string series_id;
    std::string question_id;
    Condition condition = Condition::L;
    bool l_only = false;
    FeatureVector features;

    std::string identity() const { return speaker_id + "/" + series_id + "/" + question_id; }
};

// Runs alignment/syllable/track extraction for every record. Errors gain the
// utterance identity as context.
inline std::vector<FeatureRow> extract_dataset(const SessionManifest& manifest,
                                               const TrackerConfig& cfg = {}) {
    std::vector<FeatureRow> rows(manifest.records.size());
    parallel_for(manifest.records.size(), [&](std::size_t i) {
        const UtteranceRecord& rec = manifest.records[i];
        FeatureRow row;
        row.speaker_id = rec.speaker_id;
        row.session_id = rec.session_id;
        row.series_id = rec.series_id;
        row.question_id = rec.question_id;
        row.condition = rec.condition;
        row.l_only = rec.l_only_question;
        try {
            const Waveform audio = read_wav(rec.audio_path);
            const std::vector<WordInterval> words = parse_alignment(rec.alignment_path);
            row.features = extract_all(audio, words, rec.transcript, cfg);
        } catch (const std::exception& e) {
            throw DataError(rec.identity() + ": " + e.what());
        }
        rows[i] = std::move(row);
    });
    return rows;
}

namespace detail {

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace detail

inline constexpr const char* kFeatureCsvIdColumns[] = {"speaker_id", "session_id", "series_id",
                                                       "question_id", "condition"};

inline void write_feature_csv(const std::filesystem::path& path,
                              const std::vector<FeatureRow>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write feature CSV: " + path.string());
    for (const char* col : kFeatureCsvIdColumns) out << col << ",";
    for (std::size_t f = 0; f < kNumFeatures; ++f) out << kFeatureNames[f] << ",";
    for (std::size_t f = 0; f < kNumFeatures; ++f)
        out << kFeatureNames[f] << "_missing" << (f + 1 < kNumFeatures ? "," : "\n");
    for (const auto& row : rows) {
        out << row.speaker_id << "," << row.session_id << "," << row.series_id << ","
            << row.question_id << "," << to_string(row.condition) << ",";
        for (std::size_t f = 0; f < kNumFeatures; ++f) {
            if (!row.features.missing[f]) out << detail::format_double(row.features.values[f]);
            out << ",";
        }
        for (std::size_t f = 0; f < kNumFeatures; ++f)
            out << (row.features.missing[f] ? "1" : "0") << (f + 1 < kNumFeatures ? "," : "\n");
    }
    if (!out) throw DataError("write failed: " + path.string());
}

inline std::vector<FeatureRow> read_feature_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open feature CSV: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError("feature CSV is empty: " + path.string());

    const std::vector<std::string> header = detail::split_csv_line(line);
    std::vector<std::string> expected;
    for (const char* col : kFeatureCsvIdColumns) expected.emplace_back(col);
    for (std::size_t f = 0; f < kNumFeatures; ++f) expected.emplace_back(kFeatureNames[f]);
    for (std::size_t f = 0; f < kNumFeatures; ++f)
        expected.emplace_back(std::string(kFeatureNames[f]) + "_missing");
    if (header != expected)
        throw SchemaError("feature CSV header does not match the expected schema: " +
                          path.string());

    std::vector<FeatureRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> fields = detail::split_csv_line(line);
        if (fields.size() != expected.size())
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(expected.size()) + " fields, got " +
                             std::to_string(fields.size()));
        FeatureRow row;
        row.speaker_id = fields[0];
        row.session_id = fields[1];
        row.series_id = fields[2];
        row.question_id = fields[3];
        row.condition = condition_from_string(fields[4]);
        for (std::size_t f = 0; f < kNumFeatures; ++f) {
            const std::string& v = fields[5 + f];
            const std::string& miss = fields[5 + kNumFeatures + f];
            if (miss != "0" && miss != "1")
                throw ParseError(path.string() + ":" + std::to_string(line_no) +
                                 ": missing flag must be 0 or 1");
            if (miss == "1") continue;  // FeatureVector default-constructs as missing
            try {
                row.features.set(f, std::stod(v));
            } catch (const std::exception&) {
                throw ParseError(path.string() + ":" + std::to_string(line_no) +
                                 ": bad numeric value \"" + v + "\"");
            }
        }
        rows.push_back(std::move(row));
    }

    // Infer the L-only flag: present in L, never in H.
    std::set<std::string> seen_h;
    for (const auto& row : rows)
        if (row.condition == Condition::H) seen_h.insert(row.question_id);
    for (auto& row : rows) row.l_only = !seen_h.contains(row.question_id);
    return rows;
}

// Feature values with missing entries imputed to 0 (the speaker-typical
// value once rows are normalized; a documented neutral default otherwise).
inline std::array<double, kNumFeatures> imputed_values(const FeatureVector& fv) {
    std::array<double, kNumFeatures> out{};
    for (std::size_t f = 0; f < kNumFeatures; ++f)
        out[f] = fv.missing[f] ? 0.0 : fv.values[f];
    return out;
}

}  // namespace trustspeech
