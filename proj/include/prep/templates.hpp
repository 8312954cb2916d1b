#pragma once

#include "prep/error.hpp"
#include "prep/question.hpp"
#include "prep/templates_data.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace prep {

/// Which kind of elicitation prompt precedes the answer: a generic request for
/// relevant facts, or a request naming the three objects of a material triple.
struct KnowledgeMode {
    enum class Tag { Independent, Dependent };

    Tag tag = Tag::Independent;
    std::string object_a;
    std::string object_b;
    std::string object_c;

    static KnowledgeMode independent() { return {}; }
    static KnowledgeMode dependent(std::string a, std::string b, std::string c) {
        return {Tag::Dependent, std::move(a), std::move(b), std::move(c)};
    }

    bool is_dependent() const noexcept { return tag == Tag::Dependent; }
};

struct RenderedPrompt {
    std::string text;
    std::map<std::string, std::string> slots_filled;
};

using Slots = std::map<std::string, std::string, std::less<>>;

/// One message of a stored prompt box.
struct TemplateMessage {
    enum class Role { User, AssistantPrefill };
    Role role;
    std::string_view text;
};

namespace detail {

inline constexpr std::string_view kHeaderPrefix = "@@ ";

// Splits a template file into messages at "@@ user N" / "@@ assistant-prefill"
// header lines. The newline before each header belongs to the header.
inline std::vector<TemplateMessage> parse_template_file(std::string_view file) {
    std::vector<TemplateMessage> out;
    std::size_t pos = 0;
    std::optional<TemplateMessage::Role> role;
    std::size_t body_start = 0;
    auto close = [&](std::size_t end) {
        if (!role) return;
        std::string_view body = file.substr(body_start, end - body_start);
        while (!body.empty() && body.back() == '\n') body.remove_suffix(1);
        out.push_back({*role, body});
    };
    while (pos < file.size()) {
        std::size_t eol = file.find('\n', pos);
        if (eol == std::string_view::npos) eol = file.size();
        std::string_view line = file.substr(pos, eol - pos);
        if (line.starts_with(kHeaderPrefix)) {
            close(pos);
            std::string_view what = line.substr(kHeaderPrefix.size());
            if (what.starts_with("user"))
                role = TemplateMessage::Role::User;
            else if (what == "assistant-prefill")
                role = TemplateMessage::Role::AssistantPrefill;
            else
                throw Error(Errc::ParseError, "unknown template header: " + std::string(line));
            body_start = eol + 1 <= file.size() ? eol + 1 : file.size();
        }
        pos = eol + 1;
    }
    close(file.size());
    return out;
}

inline const std::map<std::string, std::vector<TemplateMessage>, std::less<>>& template_table() {
    static const auto table = [] {
        std::map<std::string, std::vector<TemplateMessage>, std::less<>> t;
        for (const auto& f : kTemplateFiles) t.emplace(std::string(f.id), parse_template_file(f.text));
        return t;
    }();
    return table;
}

} // namespace detail

/// Ids of every stored prompt box, sorted.
inline std::vector<std::string> template_ids() {
    std::vector<std::string> ids;
    for (const auto& [id, _] : detail::template_table()) ids.push_back(id);
    return ids;
}

inline const std::vector<TemplateMessage>& template_messages(std::string_view strategy_id) {
    const auto& table = detail::template_table();
    auto it = table.find(strategy_id);
    if (it == table.end()) throw Error(Errc::UnknownStrategy, std::string(strategy_id));
    return it->second;
}

/// The n-th (0-based) user message template of a box.
inline std::string_view user_template(std::string_view strategy_id, std::size_t index) {
    std::size_t seen = 0;
    for (const auto& m : template_messages(strategy_id)) {
        if (m.role != TemplateMessage::Role::User) continue;
        if (seen++ == index) return m.text;
    }
    throw Error(Errc::UnknownStrategy,
                std::string(strategy_id) + " has no user message " + std::to_string(index + 1));
}

/// Substitutes every {{name}} marker in one pass over the template, so text
/// spliced in from a slot is never rescanned for markers.
inline RenderedPrompt render_template(std::string_view tpl, const Slots& slots) {
    RenderedPrompt out;
    std::size_t pos = 0;
    while (pos < tpl.size()) {
        std::size_t open = tpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out.text.append(tpl.substr(pos));
            break;
        }
        std::size_t close = tpl.find("}}", open + 2);
        if (close == std::string_view::npos)
            throw Error(Errc::UnfilledPlaceholder, "unterminated marker in template");
        out.text.append(tpl.substr(pos, open - pos));
        std::string_view name = tpl.substr(open + 2, close - open - 2);
        auto it = slots.find(name);
        if (it == slots.end())
            throw Error(Errc::UnfilledPlaceholder, "no value for {{" + std::string(name) + "}}");
        out.text.append(it->second);
        out.slots_filled.emplace(std::string(name), it->second);
        pos = close + 2;
    }
    return out;
}

/// "binary-choice problem", "multiple-choice problem", or "question".
inline std::string task_framing(const TaskKind& kind) {
    switch (kind.tag()) {
    case TaskKind::Tag::BinaryChoice: return "binary-choice problem";
    case TaskKind::Tag::MultipleChoice: return "multiple-choice problem";
    case TaskKind::Tag::YesNo: return "question";
    }
    return "question";
}

/// The closing sentence that asks for "my answer is ..." with every valid label.
inline std::string render_answer_instruction(const TaskKind& kind) {
    std::vector<std::string> choices;
    if (kind.is_choice()) {
        for (char c : kind.labels()) choices.push_back("'my answer is " + std::string(1, c) + ")'");
    } else {
        choices = {"'my answer is yes'", "'my answer is no'"};
    }
    std::string out = "Clearly indicate the answer by saying ";
    if (choices.size() == 2) {
        out += choices[0] + " or " + choices[1];
    } else {
        for (std::size_t i = 0; i + 1 < choices.size(); ++i) out += choices[i] + ", ";
        out += "or " + choices.back();
    }
    out += " at the end of your response.";
    return out;
}

/// Slots shared by every box: the question text, framing word and answer sentence.
inline Slots question_slots(const Question& question, const TaskKind& kind) {
    if (question.body.empty()) throw Error(Errc::ParseError, "empty question");
    return Slots{
        {"question", question.text()},
        {"framing", task_framing(kind)},
        {"answer_instruction", render_answer_instruction(kind)},
    };
}

inline void add_object_slots(Slots& slots, const KnowledgeMode& mode) {
    if (mode.object_a.empty() || mode.object_b.empty() || mode.object_c.empty())
        throw Error(Errc::MissingObjectNames, "knowledge-dependent prompt needs three object names");
    slots["object_a"] = mode.object_a;
    slots["object_b"] = mode.object_b;
    slots["object_c"] = mode.object_c;
}

/// First message of a two-message strategy: ask for facts, or for parts and
/// materials of the named objects.
inline RenderedPrompt render_elicitation(const Question& question, const KnowledgeMode& mode,
                                         const TaskKind& kind) {
    Slots slots = question_slots(question, kind);
    if (mode.is_dependent()) {
        add_object_slots(slots, mode);
        return render_template(user_template("prep-dep", 0), slots);
    }
    return render_template(user_template("prep-ind", 0), slots);
}

/// Message carrying elicited facts into a fresh conversation, followed by the question.
inline RenderedPrompt render_transfer(std::string_view facts, const Question& question,
                                      const TaskKind& kind) {
    if (facts.empty()) throw Error(Errc::EmptyFacts, "nothing to transfer");
    Slots slots = question_slots(question, kind);
    slots["facts"] = std::string(facts);
    return render_template(user_template("prep-ind", 1), slots);
}

/// Assistant prefill text of a box, if it defines one.
inline std::optional<std::string> template_prefill(std::string_view strategy_id) {
    for (const auto& m : template_messages(strategy_id))
        if (m.role == TemplateMessage::Role::AssistantPrefill) return std::string(m.text);
    return std::nullopt;
}

} // namespace prep
