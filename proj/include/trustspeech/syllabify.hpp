#pragma once
// Rule-based Spanish syllabification. Covers strong/weak vowel
// classification, diphthong and triphthong cohesion, hiatus on accented
// weak vowels and repeated vowels, the inseparable onset clusters, and the
// digraphs ch/ll/rr. Feeds the speaking-rate features, so the contract is
// about syllable counts rather than phonetic transcription.
//
// Transcript-level counting expands digit runs to Spanish number words
// (exact up to 9999, digit-by-digit beyond), splits hyphenated tokens, and
// counts vowel-less interjections ("mmm") as one syllable.

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "trustspeech/errors.hpp"

namespace trustspeech {

struct SyllableBreakdown {
    std::string word;
    std::vector<std::string> syllables;
    bool vowelless = false;  // no vowel nucleus found; counted as one syllable
};

namespace detail {

inline std::vector<char32_t> decode_utf8(std::string_view s) {
    std::vector<char32_t> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const unsigned char c = static_cast<unsigned char>(s[i]);
        char32_t cp = 0;
        std::size_t len = 1;
        if (c < 0x80) {
            cp = c;
        } else if ((c >> 5) == 0x6) {
            cp = c & 0x1F;
            len = 2;
        } else if ((c >> 4) == 0xE) {
            cp = c & 0x0F;
            len = 3;
        } else if ((c >> 3) == 0x1E) {
            cp = c & 0x07;
            len = 4;
        } else {
            ++i;  // stray continuation byte; skip
            continue;
        }
        if (i + len > s.size()) break;
        bool ok = true;
        for (std::size_t k = 1; k < len; ++k) {
            const unsigned char cc = static_cast<unsigned char>(s[i + k]);
            if ((cc >> 6) != 0x2) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (cc & 0x3F);
        }
        i += len;
        if (ok) out.push_back(cp);
    }
    return out;
}

inline void encode_utf8(char32_t cp, std::string& out) {
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

inline char32_t to_lower_es(char32_t c) {
    if (c >= U'A' && c <= U'Z') return c + 32;
    switch (c) {
        case U'Á': return U'á';
        case U'É': return U'é';
        case U'Í': return U'í';
        case U'Ó': return U'ó';
        case U'Ú': return U'ú';
        case U'Ü': return U'ü';
        case U'Ñ': return U'ñ';
        default: return c;
    }
}

inline bool is_strong_vowel(char32_t c) {
    return c == U'a' || c == U'e' || c == U'o' || c == U'á' || c == U'é' || c == U'ó';
}
inline bool is_weak_vowel(char32_t c) { return c == U'i' || c == U'u' || c == U'ü'; }
inline bool is_accented_weak(char32_t c) { return c == U'í' || c == U'ú'; }

inline char32_t base_vowel(char32_t c) {
    switch (c) {
        case U'á': return U'a';
        case U'é': return U'e';
        case U'í': return U'i';
        case U'ó': return U'o';
        case U'ú': return U'u';
        case U'ü': return U'u';
        default: return c;
    }
}

inline bool is_spanish_letter(char32_t c) {
    if (c >= U'a' && c <= U'z') return true;
    switch (c) {
        case U'á': case U'é': case U'í': case U'ó': case U'ú':
        case U'ü': case U'ñ':
            return true;
        default:
            return false;
    }
}

// Onset clusters that cannot be split across a syllable boundary.
inline bool inseparable_cluster(char32_t a, char32_t b) {
    if (b == U'l' || b == U'r') {
        switch (a) {
            case U'p': case U'b': case U'f': case U'c': case U'g':
                return true;
            case U't':
                return true;  // tr always; tl kept whole (Latin American split)
            case U'd':
                return b == U'r';
            default:
                return false;
        }
    }
    return false;
}

}  // namespace detail

inline SyllableBreakdown syllabify(const std::string& word) {
    using namespace detail;
    if (word.empty()) throw ArgumentError("syllabify: empty token");

    std::vector<char32_t> cps = decode_utf8(word);
    if (cps.empty()) throw ArgumentError("syllabify: no decodable characters in token");

    // Units: digraphs ch/ll/rr collapse to a single consonant unit.
    struct Unit {
        std::size_t begin, end;  // code point span
        char32_t head;           // lowered first character
        bool vowel;
    };
    std::vector<char32_t> lower(cps.size());
    for (std::size_t i = 0; i < cps.size(); ++i) lower[i] = to_lower_es(cps[i]);

    std::vector<Unit> units;
    for (std::size_t i = 0; i < lower.size();) {
        const char32_t c = lower[i];
        std::size_t len = 1;
        if (i + 1 < lower.size()) {
            const char32_t d = lower[i + 1];
            if ((c == U'c' && d == U'h') || (c == U'l' && d == U'l') || (c == U'r' && d == U'r')) {
                len = 2;
            }
        }
        bool vowel = is_strong_vowel(c) || is_weak_vowel(c) || is_accented_weak(c);
        // y acts as a vowel word-finally ("rey") and standalone ("y").
        if (c == U'y' && len == 1 && i + 1 == lower.size()) vowel = true;
        units.push_back({i, i + len, c, vowel});
        i += len;
    }

    auto slice = [&](std::size_t ubegin, std::size_t uend) {
        std::string text;
        for (std::size_t u = ubegin; u < uend; ++u) {
            for (std::size_t k = units[u].begin; k < units[u].end; ++k) encode_utf8(cps[k], text);
        }
        return text;
    };

    SyllableBreakdown result;
    result.word = word;

    std::vector<std::size_t> nucleus_at;  // unit index where each nucleus starts
    std::vector<std::size_t> nucleus_end;
    {
        std::size_t u = 0;
        while (u < units.size()) {
            if (!units[u].vowel) {
                ++u;
                continue;
            }
            std::size_t run_end = u;
            while (run_end < units.size() && units[run_end].vowel) ++run_end;
            // Split the vowel run into nuclei: hiatus between two strong
            // vowels, identical vowels, or next to an accented weak vowel.
            std::size_t start = u;
            std::size_t count = 1;
            for (std::size_t v = u + 1; v < run_end; ++v) {
                const char32_t prev = units[v - 1].head;
                const char32_t cur = units[v].head;
                const bool strong_pair = is_strong_vowel(prev) && is_strong_vowel(cur);
                const bool same = base_vowel(prev) == base_vowel(cur);
                const bool hiatus = strong_pair || same || is_accented_weak(prev) ||
                                    is_accented_weak(cur) || count >= 3;
                if (hiatus) {
                    nucleus_at.push_back(start);
                    nucleus_end.push_back(v);
                    start = v;
                    count = 1;
                } else {
                    ++count;
                }
            }
            nucleus_at.push_back(start);
            nucleus_end.push_back(run_end);
            u = run_end;
        }
    }

    if (nucleus_at.empty()) {
        result.syllables.push_back(word);
        result.vowelless = true;
        return result;
    }

    // Syllable boundaries: place each inter-nucleus consonant group.
    std::vector<std::size_t> boundaries;  // unit index where syllable k+1 begins
    for (std::size_t k = 0; k + 1 < nucleus_at.size(); ++k) {
        const std::size_t gap_begin = nucleus_end[k];
        const std::size_t gap_end = nucleus_at[k + 1];
        const std::size_t n_cons = gap_end - gap_begin;
        std::size_t cut;
        if (n_cons == 0) {
            cut = gap_begin;
        } else if (n_cons == 1) {
            cut = gap_begin;  // V-CV
        } else {
            const char32_t a = units[gap_end - 2].head;
            const char32_t b = units[gap_end - 1].head;
            const bool keep_two = detail::inseparable_cluster(a, b) &&
                                  units[gap_end - 2].end - units[gap_end - 2].begin == 1 &&
                                  units[gap_end - 1].end - units[gap_end - 1].begin == 1;
            cut = keep_two ? gap_end - 2 : gap_end - 1;
        }
        boundaries.push_back(cut);
    }

    std::size_t begin = 0;
    for (std::size_t cut : boundaries) {
        result.syllables.push_back(slice(begin, cut));
        begin = cut;
    }
    result.syllables.push_back(slice(begin, units.size()));
    return result;
}

// --- Spanish number words ------------------------------------------------

inline std::string number_to_spanish(int n) {
    static const char* units_[] = {"cero", "uno", "dos", "tres", "cuatro", "cinco",
                                   "seis", "siete", "ocho", "nueve"};
    static const char* teens[] = {"diez", "once", "doce", "trece", "catorce", "quince",
                                  "dieciséis", "diecisiete", "dieciocho", "diecinueve"};
    static const char* twenties[] = {"veinte", "veintiuno", "veintidós", "veintitrés",
                                     "veinticuatro", "veinticinco", "veintiséis",
                                     "veintisiete", "veintiocho", "veintinueve"};
    static const char* tens[] = {"", "", "veinte", "treinta", "cuarenta", "cincuenta",
                                 "sesenta", "setenta", "ochenta", "noventa"};
    static const char* hundreds[] = {"", "ciento", "doscientos", "trescientos",
                                     "cuatrocientos", "quinientos", "seiscientos",
                                     "setecientos", "ochocientos", "novecientos"};
    if (n < 0 || n > 9999) throw ArgumentError("number_to_spanish: out of range 0..9999");
    if (n < 10) return units_[n];
    if (n < 20) return teens[n - 10];
    if (n < 30) return twenties[n - 20];
    if (n < 100) {
        const int t = n / 10, u = n % 10;
        std::string s = tens[t];
        if (u != 0) s += std::string(" y ") + units_[u];
        return s;
    }
    if (n < 1000) {
        const int h = n / 100, rest = n % 100;
        if (n == 100) return "cien";
        std::string s = hundreds[h];
        if (rest != 0) s += " " + number_to_spanish(rest);
        return s;
    }
    const int th = n / 1000, rest = n % 1000;
    std::string s = th == 1 ? "mil" : number_to_spanish(th) + " mil";
    if (rest != 0) s += " " + number_to_spanish(rest);
    return s;
}

namespace detail {

inline int count_token_syllables(const std::string& token);

inline int count_spelled_number(const std::string& spelled) {
    int total = 0;
    std::string cur;
    for (char c : spelled) {
        if (c == ' ') {
            if (!cur.empty()) total += count_token_syllables(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) total += count_token_syllables(cur);
    return total;
}

inline int count_digit_run(const std::string& digits) {
    if (digits.size() <= 4) return count_spelled_number(number_to_spanish(std::stoi(digits)));
    int total = 0;
    for (char c : digits) total += count_spelled_number(number_to_spanish(c - '0'));
    return total;
}

inline int count_token_syllables(const std::string& token) {
    return static_cast<int>(syllabify(token).syllables.size());
}

}  // namespace detail

inline int count_syllables(const std::string& transcript) {
    using namespace detail;
    const std::vector<char32_t> cps = decode_utf8(transcript);

    int total = 0;
    bool any_content = false;
    std::string letters;
    std::string digits;
    auto flush = [&] {
        if (!letters.empty()) {
            total += count_token_syllables(letters);
            any_content = true;
            letters.clear();
        }
        if (!digits.empty()) {
            total += count_digit_run(digits);
            any_content = true;
            digits.clear();
        }
    };
    for (char32_t raw : cps) {
        const char32_t c = to_lower_es(raw);
        if (is_spanish_letter(c)) {
            if (!digits.empty()) flush();
            encode_utf8(c, letters);
        } else if (c >= U'0' && c <= U'9') {
            if (!letters.empty()) flush();
            digits.push_back(static_cast<char>(c));
        } else {
            // whitespace, hyphens, punctuation: token boundary
            flush();
        }
    }
    flush();

    if (!any_content) throw ArgumentError("count_syllables: transcript has no countable tokens");
    return total;
}

}  // namespace trustspeech
