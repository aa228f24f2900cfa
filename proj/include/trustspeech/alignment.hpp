#pragma once
// Word-level forced-alignment input (Praat TextGrid or JSON) and the
// speech/pause segmentation derived from it. Inter-word gaps at or below
// the merge threshold (default 50 ms) are treated as part of the
// surrounding speech; leading and trailing silence is excluded from all
// reported durations.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "trustspeech/errors.hpp"
#include "trustspeech/numeric.hpp"

namespace trustspeech {

inline constexpr const char* kSilenceMarker = "<sil>";
inline constexpr double kDefaultPauseMergeThreshold = 0.050;  // seconds

struct WordInterval {
    double start = 0.0;  // seconds
    double end = 0.0;    // seconds
    std::string label;   // word text or kSilenceMarker
};

struct SpeechSegmentation {
    std::vector<std::pair<double, double>> speech_intervals;
    std::vector<std::pair<double, double>> pause_intervals;
    double t_full = 0.0;    // first speech onset to last speech offset
    double t_speech = 0.0;  // summed speech-interval duration
    double t_pause = 0.0;   // t_full - t_speech
};

namespace detail {

// Praat writes UTF-16 (with BOM) when a grid contains non-ASCII text.
inline std::string decode_textgrid_bytes(const std::vector<unsigned char>& bytes) {
    auto utf16_to_utf8 = [&](bool big_endian) {
        std::string out;
        std::size_t i = 2;  // skip BOM
        auto unit = [&](std::size_t at) -> std::uint32_t {
            return big_endian
                       ? (static_cast<std::uint32_t>(bytes[at]) << 8) | bytes[at + 1]
                       : (static_cast<std::uint32_t>(bytes[at + 1]) << 8) | bytes[at];
        };
        while (i + 1 < bytes.size()) {
            std::uint32_t cp = unit(i);
            i += 2;
            if (cp >= 0xD800 && cp <= 0xDBFF && i + 1 < bytes.size()) {
                const std::uint32_t lo = unit(i);
                if (lo >= 0xDC00 && lo <= 0xDFFF) {
                    cp = 0x10000 + ((cp - 0xD800) << 10) + (lo - 0xDC00);
                    i += 2;
                }
            }
            if (cp < 0x80) {
                out.push_back(static_cast<char>(cp));
            } else if (cp < 0x800) {
                out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
                out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
            } else if (cp < 0x10000) {
                out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
                out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
                out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
            } else {
                out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
                out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
                out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
                out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
            }
        }
        return out;
    };

    if (bytes.size() >= 2 && bytes[0] == 0xFF && bytes[1] == 0xFE) return utf16_to_utf8(false);
    if (bytes.size() >= 2 && bytes[0] == 0xFE && bytes[1] == 0xFF) return utf16_to_utf8(true);
    std::size_t start = 0;
    if (bytes.size() >= 3 && bytes[0] == 0xEF && bytes[1] == 0xBB && bytes[2] == 0xBF) start = 3;
    return std::string(bytes.begin() + static_cast<std::ptrdiff_t>(start), bytes.end());
}

// A TextGrid reduces to the same token sequence in long and short format
// once field labels, punctuation and bracketed indices are dropped: only
// quoted strings, bare numbers and the <exists>/<absent> flags carry data.
struct TextGridToken {
    enum Kind { Number, String, Flag } kind;
    double number = 0.0;
    std::string text;
};

inline std::vector<TextGridToken> tokenize_textgrid(const std::string& content) {
    std::vector<TextGridToken> tokens;
    std::size_t i = 0;
    const std::size_t n = content.size();
    while (i < n) {
        const char c = content[i];
        if (c == '[') {  // long-format index, e.g. item [3]:
            while (i < n && content[i] != ']') ++i;
            if (i < n) ++i;
        } else if (c == '"') {
            std::string text;
            ++i;
            while (i < n) {
                if (content[i] == '"') {
                    if (i + 1 < n && content[i + 1] == '"') {  // escaped quote
                        text.push_back('"');
                        i += 2;
                    } else {
                        ++i;
                        break;
                    }
                } else {
                    text.push_back(content[i++]);
                }
            }
            tokens.push_back({TextGridToken::String, 0.0, std::move(text)});
        } else if (c == '<') {
            std::string flag;
            while (i < n && content[i] != '>') flag.push_back(content[i++]);
            if (i < n) flag.push_back(content[i++]);
            tokens.push_back({TextGridToken::Flag, 0.0, std::move(flag)});
        } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                   ((c == '-' || c == '+' || c == '.') && i + 1 < n &&
                    std::isdigit(static_cast<unsigned char>(content[i + 1])))) {
            std::size_t len = 0;
            const double v = std::stod(content.substr(i), &len);
            tokens.push_back({TextGridToken::Number, v, {}});
            i += len;
        } else {
            ++i;  // field label, '=', ':', whitespace
        }
    }
    return tokens;
}

inline bool is_silence_label(std::string_view label) {
    if (label.empty()) return true;
    bool all_space = true;
    for (char c : label) {
        if (!std::isspace(static_cast<unsigned char>(c))) all_space = false;
    }
    if (all_space) return true;
    static const char* markers[] = {"<sil>", "sil", "sp", "spn", "<p>", "<eps>", ""};
    for (const char* m : markers) {
        if (label == m) return true;
    }
    return false;
}

}  // namespace detail

// Validates ordering/overlap and normalizes silence labels in place.
inline void finalize_word_intervals(std::vector<WordInterval>& words, const std::string& origin) {
    for (const auto& w : words) {
        if (!(w.start >= 0.0) || !(w.start < w.end)) {
            std::ostringstream msg;
            msg << origin << ": invalid interval [" << w.start << ", " << w.end << "]";
            throw ValidationError(msg.str());
        }
    }
    std::stable_sort(words.begin(), words.end(),
                     [](const WordInterval& a, const WordInterval& b) { return a.start < b.start; });
    for (std::size_t i = 1; i < words.size(); ++i) {
        if (words[i].start < words[i - 1].end - 1e-9) {
            std::ostringstream msg;
            msg << origin << ": overlapping intervals [" << words[i - 1].start << ", "
                << words[i - 1].end << "] and [" << words[i].start << ", " << words[i].end << "]";
            throw ValidationError(msg.str());
        }
    }
    for (auto& w : words) {
        if (detail::is_silence_label(w.label)) w.label = kSilenceMarker;
    }
}

inline std::vector<WordInterval> parse_textgrid(const std::string& content,
                                                const std::string& origin = "TextGrid") {
    using detail::TextGridToken;
    const auto tokens = detail::tokenize_textgrid(content);
    std::size_t pos = 0;
    auto next = [&](TextGridToken::Kind kind, const char* what) -> const TextGridToken& {
        if (pos >= tokens.size() || tokens[pos].kind != kind) {
            throw ParseError(origin + ": malformed TextGrid (expected " + what + ")");
        }
        return tokens[pos++];
    };

    if (tokens.size() < 2 || tokens[0].kind != TextGridToken::String ||
        tokens[0].text != "ooTextFile" || tokens[1].text != "TextGrid") {
        throw ParseError(origin + ": not a TextGrid file");
    }
    pos = 2;
    next(TextGridToken::Number, "global xmin");
    next(TextGridToken::Number, "global xmax");
    const auto& flag = next(TextGridToken::Flag, "tiers flag");
    if (flag.text != "<exists>") throw ParseError(origin + ": TextGrid has no tiers");
    const std::size_t n_tiers =
        static_cast<std::size_t>(next(TextGridToken::Number, "tier count").number);

    std::vector<WordInterval> words;
    bool found_word_tier = false;
    for (std::size_t t = 0; t < n_tiers; ++t) {
        const std::string tier_class = next(TextGridToken::String, "tier class").text;
        const std::string tier_name = next(TextGridToken::String, "tier name").text;
        next(TextGridToken::Number, "tier xmin");
        next(TextGridToken::Number, "tier xmax");
        const std::size_t count =
            static_cast<std::size_t>(next(TextGridToken::Number, "entry count").number);
        const bool is_interval = tier_class == "IntervalTier";
        const bool is_point = tier_class == "TextTier";
        if (!is_interval && !is_point) {
            throw ParseError(origin + ": unknown tier class \"" + tier_class + "\"");
        }
        std::string lower_name = tier_name;
        std::transform(lower_name.begin(), lower_name.end(), lower_name.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        const bool want = is_interval && lower_name == "words" && !found_word_tier;
        for (std::size_t k = 0; k < count; ++k) {
            if (is_interval) {
                const double xmin = next(TextGridToken::Number, "interval xmin").number;
                const double xmax = next(TextGridToken::Number, "interval xmax").number;
                std::string text = next(TextGridToken::String, "interval text").text;
                if (want) words.push_back({xmin, xmax, std::move(text)});
            } else {
                next(TextGridToken::Number, "point time");
                next(TextGridToken::String, "point mark");
            }
        }
        if (want) found_word_tier = true;
    }
    if (!found_word_tier) {
        throw ParseError(origin + ": no interval tier named \"words\"");
    }
    finalize_word_intervals(words, origin);
    return words;
}

inline std::vector<WordInterval> parse_alignment_json(const std::string& content,
                                                      const std::string& origin = "alignment") {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(content);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(origin + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("words") || !doc["words"].is_array()) {
        throw SchemaError(origin + ": expected top-level object with \"words\" array");
    }
    std::vector<WordInterval> words;
    std::size_t index = 0;
    for (const auto& item : doc["words"]) {
        if (!item.is_object() || !item.contains("start") || !item.contains("end") ||
            !item.contains("word")) {
            throw SchemaError(origin + ": words[" + std::to_string(index) +
                              "] needs start, end and word");
        }
        words.push_back({item["start"].get<double>(), item["end"].get<double>(),
                         item["word"].get<std::string>()});
        ++index;
    }
    finalize_word_intervals(words, origin);
    return words;
}

// Dispatches on content: a JSON document starts with '{', everything else
// is treated as a TextGrid.
inline std::vector<WordInterval> parse_alignment(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open alignment file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    const std::string content = detail::decode_textgrid_bytes(bytes);
    std::size_t first = content.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && content[first] == '{') {
        return parse_alignment_json(content, path);
    }
    return parse_textgrid(content, path);
}

inline SpeechSegmentation segment_speech(const std::vector<WordInterval>& words,
                                         double merge_threshold = kDefaultPauseMergeThreshold) {
    SpeechSegmentation seg;
    double span_start = 0.0, span_end = 0.0;
    bool open = false;
    for (const auto& w : words) {
        if (w.label == kSilenceMarker) continue;
        if (!open) {
            span_start = w.start;
            span_end = w.end;
            open = true;
            continue;
        }
        const double gap = w.start - span_end;
        if (gap <= merge_threshold + 1e-12) {
            span_end = std::max(span_end, w.end);  // gap absorbed into speech
        } else {
            seg.speech_intervals.emplace_back(span_start, span_end);
            seg.pause_intervals.emplace_back(span_end, w.start);
            span_start = w.start;
            span_end = w.end;
        }
    }
    if (!open) throw DataError("utterance contains no speech words");
    seg.speech_intervals.emplace_back(span_start, span_end);

    ExactSum speech_sum;
    for (const auto& [s, e] : seg.speech_intervals) speech_sum.add(e - s);
    seg.t_speech = speech_sum.value();
    seg.t_full = seg.speech_intervals.back().second - seg.speech_intervals.front().first;
    seg.t_pause = seg.t_full - seg.t_speech;
    return seg;
}

}  // namespace trustspeech
