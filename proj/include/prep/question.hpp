#pragma once

#include "prep/error.hpp"

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace prep {

/// Shape of the answer space: two lettered options, N lettered options, or yes/no.
class TaskKind {
public:
    enum class Tag { BinaryChoice, MultipleChoice, YesNo };

    static TaskKind binary_choice() { return TaskKind(Tag::BinaryChoice, {'a', 'b'}); }
    static TaskKind yes_no() { return TaskKind(Tag::YesNo, {}); }

    /// Labels must run 'a', 'b', ... without gaps; at least two.
    static TaskKind multiple_choice(std::vector<char> labels) {
        if (labels.size() < 2 || labels.size() > 26)
            throw Error(Errc::InvalidKey, "multiple-choice needs between 2 and 26 labels");
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] != static_cast<char>('a' + i))
                throw Error(Errc::InvalidKey, "multiple-choice labels must be a, b, c, ... in order");
        return TaskKind(Tag::MultipleChoice, std::move(labels));
    }

    static TaskKind multiple_choice(std::size_t count) {
        std::vector<char> labels;
        for (std::size_t i = 0; i < count; ++i) labels.push_back(static_cast<char>('a' + i));
        return multiple_choice(std::move(labels));
    }

    Tag tag() const noexcept { return tag_; }
    bool is_choice() const noexcept { return tag_ != Tag::YesNo; }
    const std::vector<char>& labels() const noexcept { return labels_; }

    bool has_label(char c) const {
        return std::find(labels_.begin(), labels_.end(), c) != labels_.end();
    }

    std::string_view name() const {
        switch (tag_) {
        case Tag::BinaryChoice: return "binary-choice";
        case Tag::MultipleChoice: return "multiple-choice";
        case Tag::YesNo: return "yes-no";
        }
        return "";
    }

    friend bool operator==(const TaskKind&, const TaskKind&) = default;

private:
    TaskKind(Tag tag, std::vector<char> labels) : tag_(tag), labels_(std::move(labels)) {}

    Tag tag_;
    std::vector<char> labels_;
};

/// Correct answer: an option letter or a boolean for yes/no questions.
using AnswerKey = std::variant<char, bool>;

inline std::string to_string(const AnswerKey& key) {
    if (const auto* c = std::get_if<char>(&key)) return std::string(1, *c);
    return std::get<bool>(key) ? "yes" : "no";
}

/// Names used by knowledge-dependent prompting. `b_article` is the article
/// that precedes O_B in the question stem ("a", "an", or empty).
struct ObjectTriple {
    std::string a;
    std::string b;
    std::string c;
    std::string b_article;
    std::vector<std::string> shared_materials;

    friend bool operator==(const ObjectTriple&, const ObjectTriple&) = default;
};

struct Option {
    char label;
    std::string text;

    friend bool operator==(const Option&, const Option&) = default;
};

struct Question {
    std::string id;
    std::string body;
    TaskKind kind = TaskKind::binary_choice();
    std::vector<Option> options;
    AnswerKey key = 'a';
    std::optional<ObjectTriple> objects;

    /// The text inserted wherever a prompt asks for the question: the body,
    /// then the options on one line ("a) doorstop b) contact lens").
    std::string text() const {
        if (options.empty()) return body;
        std::string out = body;
        out += '\n';
        for (std::size_t i = 0; i < options.size(); ++i) {
            if (i) out += ' ';
            out += options[i].label;
            out += ") ";
            out += options[i].text;
        }
        return out;
    }

    friend bool operator==(const Question&, const Question&) = default;
};

/// Checks the per-item invariants: options match the kind's labels and the
/// key is one of them (or a boolean for yes/no).
inline void validate_question(const Question& q) {
    if (q.id.empty()) throw Error(Errc::ParseError, "question without id");
    if (q.body.empty()) throw Error(Errc::ParseError, "question " + q.id + " has an empty body");
    if (q.kind.is_choice()) {
        const auto& labels = q.kind.labels();
        if (q.options.size() != labels.size())
            throw Error(Errc::InvalidKey, "question " + q.id + ": option count does not match its kind");
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (q.options[i].label != labels[i])
                throw Error(Errc::InvalidKey, "question " + q.id + ": option labels out of order");
        const auto* c = std::get_if<char>(&q.key);
        if (!c || !q.kind.has_label(*c))
            throw Error(Errc::InvalidKey, "question " + q.id + ": key is not one of its options");
    } else {
        if (!q.options.empty())
            throw Error(Errc::InvalidKey, "question " + q.id + ": yes/no question with options");
        if (!std::holds_alternative<bool>(q.key))
            throw Error(Errc::InvalidKey, "question " + q.id + ": yes/no question needs a boolean key");
    }
}

} // namespace prep
