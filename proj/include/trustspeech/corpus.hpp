#pragma once
// Corpus data model: manifest ingestion, the session-log error filters, and
// speaker eligibility. Error flags come from the manifest alone; nothing here
// inspects audio. Paths in the manifest are resolved against its directory at
// load time.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trustspeech/errors.hpp"

namespace trustspeech {

enum class Condition { L, H };

inline std::string to_string(Condition c) { return c == Condition::L ? "L" : "H"; }

inline Condition condition_from_string(const std::string& s) {
    if (s == "L") return Condition::L;
    if (s == "H") return Condition::H;
    throw SchemaError("condition must be \"L\" or \"H\", got \"" + s + "\"");
}

struct UtteranceRecord {
    std::string speaker_id;
    std::string session_id;
    std::string series_id;
    std::string question_id;
    Condition condition = Condition::L;
    int order_index = 0;  // position within the series
    std::string audio_path;
    std::string alignment_path;
    std::string transcript;
    bool transmission_error = false;
    bool post_system_error = false;   // unplanned VA error at this position
    bool repetition_mistake = false;  // retake; a later waveform is the valid one
    bool l_only_question = false;     // question never asked in the H condition

    std::string identity() const {
        return speaker_id + "/" + series_id + "/" + question_id;
    }
};

struct QuestionInfo {
    std::string id;
    bool l_only = false;
};

struct SessionManifest {
    std::vector<QuestionInfo> questions;
    std::vector<UtteranceRecord> records;  // file order
    std::map<std::string, std::string> metadata;  // unknown top-level fields, JSON-encoded
};

struct SpeakerEligibility {
    std::string speaker_id;
    int n_l = 0;  // valid non-l_only questions in condition L
    int n_h = 0;
    bool eligible = false;
    std::string reason;  // empty when eligible
};

struct EligibilityReport {
    std::vector<SpeakerEligibility> speakers;  // sorted by speaker_id
    std::vector<std::string> eligible_speakers;
};

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& obj, const char* field,
                                           const std::string& where) {
    auto it = obj.find(field);
    if (it == obj.end())
        throw SchemaError(where + ": missing field \"" + field + "\"");
    return *it;
}

}  // namespace detail

inline SessionManifest load_manifest(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path.string());

    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("manifest " + path.string() + ": " + e.what());
    }
    if (!doc.is_object()) throw SchemaError("manifest root must be a JSON object");

    SessionManifest m;
    const fs::path base = fs::absolute(path).parent_path();

    const auto& questions = detail::require_field(doc, "questions", "manifest");
    for (std::size_t i = 0; i < questions.size(); ++i) {
        const auto& q = questions[i];
        const std::string where = "question " + std::to_string(i);
        QuestionInfo info;
        info.id = detail::require_field(q, "id", where).get<std::string>();
        if (auto it = q.find("l_only"); it != q.end()) info.l_only = it->get<bool>();
        m.questions.push_back(std::move(info));
    }

    std::map<std::string, bool> l_only_by_id;
    for (const auto& q : m.questions) l_only_by_id[q.id] = q.l_only;

    const auto& records = detail::require_field(doc, "records", "manifest");
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const std::string where = "record " + std::to_string(i);
        if (!r.is_object()) throw SchemaError(where + ": must be an object");
        UtteranceRecord rec;
        rec.speaker_id = detail::require_field(r, "speaker_id", where).get<std::string>();
        rec.session_id = detail::require_field(r, "session_id", where).get<std::string>();
        rec.series_id = detail::require_field(r, "series_id", where).get<std::string>();
        rec.question_id = detail::require_field(r, "question_id", where).get<std::string>();
        rec.condition = condition_from_string(
            detail::require_field(r, "condition", where).get<std::string>());
        rec.order_index = detail::require_field(r, "order_index", where).get<int>();
        if (rec.order_index < 0) throw SchemaError(where + ": order_index must be >= 0");
        rec.audio_path = detail::require_field(r, "audio_path", where).get<std::string>();
        rec.alignment_path = detail::require_field(r, "alignment_path", where).get<std::string>();
        rec.transcript = detail::require_field(r, "transcript", where).get<std::string>();
        if (auto it = r.find("flags"); it != r.end()) {
            for (const auto& f : *it) {
                const std::string flag = f.get<std::string>();
                if (flag == "transmission_error") rec.transmission_error = true;
                else if (flag == "post_system_error") rec.post_system_error = true;
                else if (flag == "repetition_mistake") rec.repetition_mistake = true;
                else if (flag == "l_only_question") rec.l_only_question = true;
                else throw SchemaError(where + ": unknown flag \"" + flag + "\"");
            }
        }
        if (auto it = l_only_by_id.find(rec.question_id);
            it != l_only_by_id.end() && it->second)
            rec.l_only_question = true;

        auto resolve = [&](std::string& p) {
            if (!p.empty() && fs::path(p).is_relative()) p = (base / p).string();
        };
        resolve(rec.audio_path);
        resolve(rec.alignment_path);
        m.records.push_back(std::move(rec));
    }

    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (it.key() == "questions" || it.key() == "records") continue;
        m.metadata[it.key()] = it.value().dump();
    }
    return m;
}

// Session-log filters: drop transmission errors, cut each series at its
// first unplanned system error, drop flagged retakes. More than one valid
// waveform left for a (series, question) indicates a corrupt manifest.
inline SessionManifest apply_filters(const SessionManifest& in) {
    SessionManifest out;
    out.questions = in.questions;
    out.metadata = in.metadata;

    std::map<std::string, int> first_error;  // series_id -> lowest flagged order_index
    for (const auto& r : in.records) {
        if (!r.post_system_error) continue;
        auto [it, inserted] = first_error.try_emplace(r.series_id, r.order_index);
        if (!inserted && r.order_index < it->second) it->second = r.order_index;
    }

    std::map<std::pair<std::string, std::string>, int> kept;
    for (const auto& r : in.records) {
        if (r.transmission_error) continue;
        if (auto it = first_error.find(r.series_id);
            it != first_error.end() && r.order_index >= it->second)
            continue;
        if (r.repetition_mistake) continue;
        const auto key = std::make_pair(r.series_id, r.question_id);
        if (++kept[key] > 1)
            throw SchemaError("duplicate valid waveform for series " + r.series_id +
                              ", question " + r.question_id);
        out.records.push_back(r);
    }
    return out;
}

inline EligibilityReport select_eligible_speakers(const SessionManifest& manifest,
                                                  int min_per_condition) {
    if (min_per_condition < 1)
        throw ArgumentError("select_eligible_speakers: min_per_condition must be >= 1");

    std::map<std::string, std::pair<int, int>> counts;  // speaker -> (n_L, n_H)
    for (const auto& r : manifest.records) {
        auto& c = counts[r.speaker_id];
        if (r.l_only_question) continue;  // excluded from eligibility counting
        (r.condition == Condition::L ? c.first : c.second) += 1;
    }

    EligibilityReport report;
    for (const auto& [speaker, c] : counts) {
        SpeakerEligibility e;
        e.speaker_id = speaker;
        e.n_l = c.first;
        e.n_h = c.second;
        e.eligible = e.n_l >= min_per_condition && e.n_h >= min_per_condition;
        if (!e.eligible) {
            std::string reason;
            if (e.n_l < min_per_condition)
                reason += "L count " + std::to_string(e.n_l) + " < " +
                          std::to_string(min_per_condition);
            if (e.n_h < min_per_condition) {
                if (!reason.empty()) reason += "; ";
                reason += "H count " + std::to_string(e.n_h) + " < " +
                          std::to_string(min_per_condition);
            }
            e.reason = std::move(reason);
        } else {
            report.eligible_speakers.push_back(speaker);
        }
        report.speakers.push_back(std::move(e));
    }
    return report;
}

}  // namespace trustspeech
