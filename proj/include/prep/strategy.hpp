#pragma once

#include "prep/backend.hpp"
#include "prep/chat.hpp"
#include "prep/error.hpp"
#include "prep/question.hpp"
#include "prep/templates.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace prep {

enum class KnowledgeUse { None, Independent, Dependent };
enum class Trigger { None, Cot, Ps };

inline std::string_view to_string(KnowledgeUse k) {
    switch (k) {
    case KnowledgeUse::None: return "none";
    case KnowledgeUse::Independent: return "independent";
    case KnowledgeUse::Dependent: return "dependent";
    }
    return "none";
}

inline std::string_view to_string(Trigger t) {
    switch (t) {
    case Trigger::None: return "none";
    case Trigger::Cot: return "cot";
    case Trigger::Ps: return "ps";
    }
    return "none";
}

/// A point in the method taxonomy: how many model instances, how many user
/// messages, whether the first response is pasted back, and which prompts.
struct StrategySpec {
    std::string_view id;
    std::string_view label;
    int instances;
    int messages;
    bool copy;
    KnowledgeUse knowledge;
    Trigger trigger;

    friend bool operator==(const StrategySpec&, const StrategySpec&) = default;
};

/// The eleven methods in table order: baselines, then knowledge-independent,
/// then knowledge-dependent elicitation.
inline constexpr std::array<StrategySpec, 11> kStrategies{{
    {"zs-cot", "ZS CoT", 1, 1, false, KnowledgeUse::None, Trigger::Cot},
    {"direct", "Direct", 1, 1, false, KnowledgeUse::None, Trigger::None},
    {"ps", "PS", 1, 1, false, KnowledgeUse::None, Trigger::Ps},
    {"ind-1msg", "Independent, 1 message", 1, 1, false, KnowledgeUse::Independent, Trigger::None},
    {"ind-2msg", "Independent, 2 messages", 1, 2, false, KnowledgeUse::Independent, Trigger::None},
    {"ind-2msg-copy", "Independent, 2 messages, copied", 1, 2, true, KnowledgeUse::Independent, Trigger::None},
    {"prep-ind", "Independent, dual instance (PREP)", 2, 2, true, KnowledgeUse::Independent, Trigger::None},
    {"dep-1msg", "Dependent, 1 message", 1, 1, false, KnowledgeUse::Dependent, Trigger::None},
    {"dep-2msg", "Dependent, 2 messages", 1, 2, false, KnowledgeUse::Dependent, Trigger::None},
    {"dep-2msg-copy", "Dependent, 2 messages, copied", 1, 2, true, KnowledgeUse::Dependent, Trigger::None},
    {"prep-dep", "Dependent, dual instance (PREP)", 2, 2, true, KnowledgeUse::Dependent, Trigger::None},
}};

inline constexpr std::string_view kBaselineStrategy = "zs-cot";

inline const StrategySpec& find_strategy(std::string_view id) {
    for (const auto& s : kStrategies)
        if (s.id == id) return s;
    throw Error(Errc::UnknownStrategy, std::string(id));
}

inline bool is_builtin(const StrategySpec& spec) {
    return std::find(kStrategies.begin(), kStrategies.end(), spec) != kStrategies.end();
}

/// Assistant prefill for CoT and Plan-and-Solve; nothing for the rest.
inline std::optional<std::string> render_trigger(const StrategySpec& spec) {
    switch (spec.trigger) {
    case Trigger::Cot: return template_prefill("zs-cot");
    case Trigger::Ps: return template_prefill("ps");
    case Trigger::None: return std::nullopt;
    }
    return std::nullopt;
}

struct PlanStep {
    int instance = 0;
    // Final text for ordinary steps; empty for copy steps, which are rendered
    // from `tpl` and `slots` once the source step has answered.
    std::string user_message;
    std::string_view tpl;
    Slots slots;
    std::optional<std::string> prefill;
    std::optional<std::size_t> copy_from;
};

struct ConversationPlan {
    const StrategySpec* spec = nullptr;
    std::vector<PlanStep> steps;
};

/// Knowledge-dependent strategies need the question's object names.
inline bool strategy_applies(const StrategySpec& spec, const Question& question) {
    return spec.knowledge != KnowledgeUse::Dependent || question.objects.has_value();
}

inline ConversationPlan plan(const StrategySpec& spec, const Question& question, const TaskKind& kind) {
    if (!is_builtin(spec)) throw Error(Errc::UnknownStrategy, std::string(spec.id));
    if (!strategy_applies(spec, question))
        throw Error(Errc::IllegalStrategy,
                    std::string(spec.id) + " needs object names; question " + question.id + " has none");

    Slots slots = question_slots(question, kind);
    if (spec.knowledge == KnowledgeUse::Dependent) {
        const auto& o = *question.objects;
        add_object_slots(slots, KnowledgeMode::dependent(o.a, o.b, o.c));
    }

    ConversationPlan out;
    out.spec = &spec;
    for (int i = 0; i < spec.messages; ++i) {
        PlanStep step;
        step.tpl = user_template(spec.id, static_cast<std::size_t>(i));
        step.slots = slots;
        step.instance = (spec.instances == 2 && i == 1) ? 1 : 0;
        if (spec.copy && i == 1)
            step.copy_from = 0;
        else
            step.user_message = render_template(step.tpl, step.slots).text;
        if (i + 1 == spec.messages) step.prefill = render_trigger(spec);
        out.steps.push_back(std::move(step));
    }
    return out;
}

struct ChatSettings {
    std::string model;
    double temperature = 0.0;
    int max_tokens = kDefaultMaxTokens;
};

struct StrategyOutcome {
    std::string final_text;
    std::vector<Transcript> transcripts;
    std::optional<std::string> elicited_facts;
    double elapsed_ms = 0;
};

inline bool is_blank(std::string_view s) {
    return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

/// Runs a plan step by step. Copy steps receive the source step's response
/// byte for byte; the second instance of a dual plan starts from an empty
/// history.
inline StrategyOutcome execute(const ConversationPlan& p, Backend& backend, const ChatSettings& settings) {
    const auto start = std::chrono::steady_clock::now();
    StrategyOutcome out;
    out.transcripts.resize(static_cast<std::size_t>(p.spec->instances));
    std::vector<std::string> responses;

    for (std::size_t i = 0; i < p.steps.size(); ++i) {
        const PlanStep& step = p.steps[i];
        Transcript& t = out.transcripts[static_cast<std::size_t>(step.instance)];

        std::string message = step.user_message;
        if (step.copy_from) {
            Slots slots = step.slots;
            slots["facts"] = responses.at(*step.copy_from);
            message = render_template(step.tpl, slots).text;
        }

        ChatRequest req{settings.model, t.messages, settings.temperature, settings.max_tokens, false};
        bool continued = false;
        if (step.prefill && backend.supports_prefill()) {
            req.messages.push_back({Role::User, message});
            req.messages.push_back({Role::Assistant, *step.prefill});
            req.continue_final_assistant = true;
            t.prefill = PrefillMode::Continue;
            continued = true;
        } else if (step.prefill) {
            message += '\n';
            message += *step.prefill;
            req.messages.push_back({Role::User, message});
            t.prefill = PrefillMode::UserLine;
        } else {
            req.messages.push_back({Role::User, message});
        }

        std::string response;
        try {
            response = backend.chat(req);
        } catch (const Error& e) {
            throw BackendFailure(e.code(), "step " + std::to_string(i + 1) + ": " + e.what(),
                                 static_cast<int>(i));
        } catch (const std::exception& e) {
            throw BackendFailure(Errc::BackendError, "step " + std::to_string(i + 1) + ": " + e.what(),
                                 static_cast<int>(i));
        }
        if (is_blank(response))
            throw BackendFailure(Errc::EmptyResponse, "step " + std::to_string(i + 1) + " returned no text",
                                 static_cast<int>(i));

        std::string recorded = continued ? *step.prefill + response : response;
        t.messages.push_back({Role::User, std::move(message)});
        t.messages.push_back({Role::Assistant, recorded});
        responses.push_back(std::move(recorded));
    }

    out.final_text = out.transcripts.back().messages.back().content;
    if (p.spec->messages == 2) out.elicited_facts = responses.front();
    out.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return out;
}

inline StrategyOutcome execute(const StrategySpec& spec, const Question& question, const TaskKind& kind,
                               Backend& backend, const ChatSettings& settings) {
    return execute(plan(spec, question, kind), backend, settings);
}

} // namespace prep
