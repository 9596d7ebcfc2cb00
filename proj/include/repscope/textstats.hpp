#ifndef REPSCOPE_TEXTSTATS_HPP
#define REPSCOPE_TEXTSTATS_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "repscope/error.hpp"

/**
 * @file textstats.hpp
 *
 * Readability indices over instruction texts.
 *
 * Tokenization rules:
 *  - A word is a maximal run of letters/digits, where an apostrophe or hyphen
 *    joins two such runs ("don't", "well-known" are one word each).
 *  - Letters are alphabetic characters. Any non-ASCII code point outside the
 *    common punctuation/space/symbol blocks counts as a letter. Digits are not letters.
 *  - Sentences are separated by runs of '.', '!' or '?'. A segment counts as a
 *    sentence only if it holds at least one word, and every accepted text has at least one.
 *  - Syllables: maximal groups of ASCII vowels (a e i o u y), minus one for a
 *    silent final 'e' (an 'e' preceded by a consonant) unless the word ends in
 *    consonant + "le"; never below 1. Words without ASCII letters count one syllable.
 */

namespace repscope {

struct TextStats {
    std::size_t sentences = 0;
    std::size_t words = 0;
    std::size_t syllables = 0;
    std::size_t letters = 0;
};

struct ReadabilityScore {
    std::string task;
    double fk_grade = 0.0;
    double cl_index = 0.0;
    std::size_t n_texts = 0;
};

namespace text_detail {

enum class CharClass { Letter, Digit, Joiner, Terminator, Other };

struct CodePoint {
    char32_t value = 0;
    std::size_t length = 1;
};

inline CodePoint decode_utf8(std::string_view s, std::size_t i) {
    const auto lead = static_cast<unsigned char>(s[i]);
    auto cont = [&](std::size_t k) -> int {
        if (i + k >= s.size()) return -1;
        const auto c = static_cast<unsigned char>(s[i + k]);
        return (c & 0xC0) == 0x80 ? (c & 0x3F) : -1;
    };
    if (lead < 0x80) {
        return {lead, 1};
    }
    std::size_t len = 0;
    char32_t cp = 0;
    if ((lead & 0xE0) == 0xC0) {
        len = 2;
        cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
        len = 3;
        cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
        len = 4;
        cp = lead & 0x07;
    } else {
        return {0xFFFD, 1};
    }
    for (std::size_t k = 1; k < len; ++k) {
        const int c = cont(k);
        if (c < 0) {
            return {0xFFFD, 1};
        }
        cp = (cp << 6) | static_cast<char32_t>(c);
    }
    return {cp, len};
}

inline bool is_non_ascii_letter(char32_t cp) {
    if (cp < 0x80) return false;
    if (cp == 0xFFFD) return false;
    if (cp >= 0x80 && cp <= 0xBF) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;  // Latin-1 punctuation/symbols
    if (cp == 0xD7 || cp == 0xF7) return false;                                     // multiplication/division signs
    if (cp >= 0x2000 && cp <= 0x2BFF) return false;                                 // punctuation, symbols, arrows
    if (cp >= 0x3000 && cp <= 0x303F) return false;                                 // CJK punctuation
    if (cp >= 0xFE30 && cp <= 0xFE6F) return false;                                 // CJK compatibility forms
    if (cp >= 0xFF00 && cp <= 0xFF0F) return false;                                 // fullwidth punctuation
    if (cp >= 0xFF1A && cp <= 0xFF20) return false;
    if (cp >= 0x1F000 && cp <= 0x1FAFF) return false;                               // emoji and pictographs
    return true;
}

inline CharClass classify(char32_t cp) {
    if (cp < 0x80) {
        const char c = static_cast<char>(cp);
        if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) return CharClass::Letter;
        if (c >= '0' && c <= '9') return CharClass::Digit;
        if (c == '\'' || c == '-') return CharClass::Joiner;
        if (c == '.' || c == '!' || c == '?') return CharClass::Terminator;
        return CharClass::Other;
    }
    if (cp == 0x2019) return CharClass::Joiner;  // right single quotation mark used as apostrophe
    if (cp == 0x2026) return CharClass::Terminator;  // ellipsis
    return is_non_ascii_letter(cp) ? CharClass::Letter : CharClass::Other;
}

inline bool is_vowel(char c) {
    switch (c) {
        case 'a': case 'e': case 'i': case 'o': case 'u': case 'y': return true;
        default: return false;
    }
}

struct Word {
    std::string ascii_lower;  // ASCII letters only, lower-cased
    std::size_t letters = 0;
};

} // namespace text_detail

/// Vowel-group syllable estimate for a single word.
inline std::size_t count_syllables(std::string_view word) {
    std::string w;
    bool any_alpha = false;
    for (std::size_t i = 0; i < word.size();) {
        const auto cp = text_detail::decode_utf8(word, i);
        if (text_detail::classify(cp.value) == text_detail::CharClass::Letter) {
            any_alpha = true;
            if (cp.value < 0x80) {
                w.push_back(static_cast<char>(cp.value | 0x20));
            }
        }
        i += cp.length;
    }
    if (!any_alpha) {
        fail(ErrorKind::InvalidInput, "word has no alphabetic characters");
    }

    std::size_t groups = 0;
    bool in_group = false;
    for (char c : w) {
        const bool v = text_detail::is_vowel(c);
        if (v && !in_group) {
            ++groups;
        }
        in_group = v;
    }
    const std::size_t n = w.size();
    if (n >= 2 && w[n - 1] == 'e' && !text_detail::is_vowel(w[n - 2])) {
        const bool consonant_le = n >= 3 && w[n - 2] == 'l' && !text_detail::is_vowel(w[n - 3]);
        if (!consonant_le && groups > 0) {
            --groups;
        }
    }
    return groups < 1 ? 1 : groups;
}

/// Sentence, word, syllable and letter counts for one text.
inline TextStats tokenize_stats(std::string_view text) {
    using text_detail::CharClass;
    TextStats stats;
    std::string current;          // raw bytes of the word being built
    std::string pending_joiner;   // a joiner seen right after a word character
    std::size_t current_letters = 0;
    std::size_t words_in_sentence = 0;

    auto finish_word = [&]() {
        if (current.empty()) {
            return;
        }
        ++stats.words;
        ++words_in_sentence;
        stats.letters += current_letters;
        stats.syllables += current_letters > 0 ? count_syllables(current) : 1;
        current.clear();
        current_letters = 0;
    };

    for (std::size_t i = 0; i < text.size();) {
        const auto cp = text_detail::decode_utf8(text, i);
        const CharClass cls = text_detail::classify(cp.value);
        const std::string_view bytes = text.substr(i, cp.length);
        i += cp.length;

        if (cls == CharClass::Letter || cls == CharClass::Digit) {
            if (!pending_joiner.empty()) {
                current += pending_joiner;
                pending_joiner.clear();
            }
            current += bytes;
            if (cls == CharClass::Letter) {
                ++current_letters;
            }
            continue;
        }
        if (cls == CharClass::Joiner && !current.empty() && pending_joiner.empty()) {
            pending_joiner = bytes;
            continue;
        }
        pending_joiner.clear();
        finish_word();
        if (cls == CharClass::Terminator && words_in_sentence > 0) {
            ++stats.sentences;
            words_in_sentence = 0;
        }
    }
    finish_word();
    if (words_in_sentence > 0) {
        ++stats.sentences;
    }
    if (stats.words == 0) {
        fail(ErrorKind::InvalidInput, "text contains no words");
    }
    return stats;
}

inline double flesch_kincaid(const TextStats& s) {
    const double words = static_cast<double>(s.words);
    return 0.39 * (words / static_cast<double>(s.sentences)) + 11.8 * (static_cast<double>(s.syllables) / words) -
           15.59;
}

inline double flesch_kincaid(std::string_view text) {
    return flesch_kincaid(tokenize_stats(text));
}

inline double coleman_liau(const TextStats& s) {
    const double words = static_cast<double>(s.words);
    const double letters_per_100 = 100.0 * static_cast<double>(s.letters) / words;
    const double sentences_per_100 = 100.0 * static_cast<double>(s.sentences) / words;
    return 0.0588 * letters_per_100 - 0.296 * sentences_per_100 - 15.8;
}

inline double coleman_liau(std::string_view text) {
    return coleman_liau(tokenize_stats(text));
}

/// Mean Flesch-Kincaid grade and mean Coleman-Liau index over a task's inputs.
inline ReadabilityScore task_readability(const std::vector<std::string>& texts) {
    if (texts.empty()) {
        fail(ErrorKind::InvalidInput, "no texts for readability");
    }
    ReadabilityScore score;
    for (const auto& text : texts) {
        const TextStats s = tokenize_stats(text);
        score.fk_grade += flesch_kincaid(s);
        score.cl_index += coleman_liau(s);
    }
    score.n_texts = texts.size();
    score.fk_grade /= static_cast<double>(texts.size());
    score.cl_index /= static_cast<double>(texts.size());
    return score;
}

} // namespace repscope

#endif
