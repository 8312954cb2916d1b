#pragma once

#include "prep/error.hpp"
#include "prep/question.hpp"

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

namespace prep {

/// Parsed answer of one response. `span` covers the decisive "my answer is ..."
/// phrase (or the failed anchor when the payload was not a label).
struct Verdict {
    enum class Kind { Option, YesNo, Unanswered };

    Kind kind = Kind::Unanswered;
    char letter = 0;
    bool yes = false;
    std::optional<std::pair<std::size_t, std::size_t>> span;

    static Verdict option(char c) { return {Kind::Option, c, false, std::nullopt}; }
    static Verdict yes_no(bool y) { return {Kind::YesNo, 0, y, std::nullopt}; }
    static Verdict unanswered() { return {}; }

    bool answered() const noexcept { return kind != Kind::Unanswered; }

    /// Compares the answer only, not the span.
    bool same_answer(const Verdict& o) const {
        if (kind != o.kind) return false;
        if (kind == Kind::Option) return letter == o.letter;
        if (kind == Kind::YesNo) return yes == o.yes;
        return true;
    }
};

inline std::string to_string(const Verdict& v) {
    switch (v.kind) {
    case Verdict::Kind::Option: return std::string(1, v.letter);
    case Verdict::Kind::YesNo: return v.yes ? "yes" : "no";
    case Verdict::Kind::Unanswered: return "unanswered";
    }
    return "unanswered";
}

namespace detail {

inline constexpr std::string_view kAnchor = "my answer is";

inline char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }
inline bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
inline bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Emphasis and quote characters models wrap labels in: ASCII *, _, `, ', "
// and the UTF-8 curly quotes.
inline std::size_t skip_markup(std::string_view s, std::size_t i) {
    for (;;) {
        if (i < s.size() && (s[i] == '*' || s[i] == '_' || s[i] == '`' || s[i] == '\'' || s[i] == '"')) {
            ++i;
            continue;
        }
        if (i + 2 < s.size() && s.substr(i, 2) == "\xE2\x80" &&
            (s[i + 2] == '\x98' || s[i + 2] == '\x99' || s[i + 2] == '\x9C' || s[i + 2] == '\x9D')) {
            i += 3;
            continue;
        }
        return i;
    }
}

inline std::size_t skip_blanks(std::string_view s, std::size_t i) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    return i;
}

// True when the label ends here: ')' or sentence punctuation, end of text, or
// trailing blanks up to a line break.
inline bool label_terminated(std::string_view s, std::size_t i, bool need_paren) {
    i = skip_markup(s, i);
    if (need_paren) return i < s.size() && s[i] == ')';
    if (i >= s.size()) return true;
    switch (s[i]) {
    case ')': case '.': case ',': case ';': case ':': case '!': case '?':
        return true;
    default:
        break;
    }
    std::size_t j = skip_blanks(s, i);
    return j >= s.size() || s[j] == '\n' || s[j] == '\r';
}

// Parses the payload after an anchor; returns the verdict and the end offset.
inline std::pair<Verdict, std::size_t> parse_payload(std::string_view s, std::size_t i, const TaskKind& kind) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n')) ++i;
    if (i < s.size() && s[i] == ':') i = skip_blanks(s, i + 1);
    i = skip_markup(s, i);

    if (kind.is_choice()) {
        bool paren = false;
        if (i < s.size() && s[i] == '(') {
            paren = true;
            ++i;
        }
        if (i >= s.size()) return {Verdict::unanswered(), i};
        const char c = lower(s[i]);
        if (!kind.has_label(c) || !label_terminated(s, i + 1, paren)) return {Verdict::unanswered(), i};
        std::size_t end = skip_markup(s, i + 1);
        if (end < s.size() && s[end] == ')') ++end;
        return {Verdict::option(c), end};
    }

    for (auto [word, value] : {std::pair{std::string_view("yes"), true}, std::pair{std::string_view("no"), false}}) {
        if (s.size() - i < word.size()) continue;
        bool eq = true;
        for (std::size_t k = 0; k < word.size(); ++k)
            if (lower(s[i + k]) != word[k]) eq = false;
        if (!eq) continue;
        const std::size_t end = i + word.size();
        if (end < s.size() && is_alpha(s[end])) continue;
        return {Verdict::yes_no(value), end};
    }
    return {Verdict::unanswered(), i};
}

} // namespace detail

/// Finds the last "my answer is" (case-insensitive, at a word start) and reads
/// the label after it. Anything that is not a valid label for `kind` yields
/// Unanswered; so does a response without the phrase.
inline Verdict extract(std::string_view text, const TaskKind& kind) {
    using detail::kAnchor;
    std::optional<std::size_t> last;
    for (std::size_t i = 0; i + kAnchor.size() <= text.size(); ++i) {
        if (i > 0 && detail::is_alnum(text[i - 1])) continue;
        bool eq = true;
        for (std::size_t k = 0; k < kAnchor.size() && eq; ++k) eq = detail::lower(text[i + k]) == kAnchor[k];
        const std::size_t after = i + kAnchor.size();
        if (eq && (after == text.size() || !detail::is_alpha(text[after]))) last = i;
    }
    if (!last) return Verdict::unanswered();

    const std::size_t after = *last + kAnchor.size();
    auto [verdict, end] = detail::parse_payload(text, after, kind);
    verdict.span = std::pair{*last, verdict.answered() ? end : after};
    return verdict;
}

enum class Score { Correct, Incorrect, Unanswered };

inline std::string_view to_string(Score s) {
    switch (s) {
    case Score::Correct: return "correct";
    case Score::Incorrect: return "incorrect";
    case Score::Unanswered: return "unanswered";
    }
    return "unanswered";
}

inline Score score(const Verdict& verdict, const AnswerKey& key) {
    switch (verdict.kind) {
    case Verdict::Kind::Unanswered:
        return Score::Unanswered;
    case Verdict::Kind::Option: {
        const auto* c = std::get_if<char>(&key);
        if (!c) throw Error(Errc::KindMismatch, "option verdict against a yes/no key");
        return verdict.letter == *c ? Score::Correct : Score::Incorrect;
    }
    case Verdict::Kind::YesNo: {
        const auto* b = std::get_if<bool>(&key);
        if (!b) throw Error(Errc::KindMismatch, "yes/no verdict against an option key");
        return verdict.yes == *b ? Score::Correct : Score::Incorrect;
    }
    }
    return Score::Unanswered;
}

} // namespace prep
