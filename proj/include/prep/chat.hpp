#pragma once

#include "prep/error.hpp"

#include <json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace prep {

enum class Role { User, Assistant };

inline std::string_view to_string(Role r) { return r == Role::User ? "user" : "assistant"; }

inline Role role_from_string(std::string_view s) {
    if (s == "user") return Role::User;
    if (s == "assistant") return Role::Assistant;
    throw Error(Errc::ParseError, "unknown chat role: " + std::string(s));
}

struct ChatMessage {
    Role role = Role::User;
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

inline constexpr int kDefaultMaxTokens = 1024;

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = kDefaultMaxTokens;
    // Set when the last message is a partial assistant turn the model should extend.
    bool continue_final_assistant = false;

    friend bool operator==(const ChatRequest&, const ChatRequest&) = default;
};

inline void validate_request(const ChatRequest& r) {
    if (r.model.empty()) throw Error(Errc::ConfigError, "chat request without model name");
    if (r.messages.empty()) throw Error(Errc::ConfigError, "chat request without messages");
    if (r.temperature < 0) throw Error(Errc::ConfigError, "negative temperature");
    if (r.max_tokens <= 0) throw Error(Errc::ConfigError, "max_tokens must be positive");
    for (const auto& m : r.messages)
        if (m.role == Role::User && m.content.empty())
            throw Error(Errc::ConfigError, "empty user message");
    const Role last = r.messages.back().role;
    if (r.continue_final_assistant ? last != Role::Assistant : last != Role::User)
        throw Error(Errc::ConfigError, r.continue_final_assistant
                                           ? "continuation requested but last message is not assistant"
                                           : "request must end with a user message");
}

inline nlohmann::json to_json(const ChatMessage& m) {
    return {{"role", to_string(m.role)}, {"content", m.content}};
}

inline ChatMessage message_from_json(const nlohmann::json& j) {
    return {role_from_string(j.at("role").get<std::string>()), j.at("content").get<std::string>()};
}

inline nlohmann::json messages_to_json(const std::vector<ChatMessage>& ms) {
    auto arr = nlohmann::json::array();
    for (const auto& m : ms) arr.push_back(to_json(m));
    return arr;
}

/// Canonical byte form of a request. Object keys are emitted sorted, so equal
/// requests serialize identically on every run and platform.
inline std::string canonical_serialize(const ChatRequest& r) {
    nlohmann::json j = {
        {"model", r.model},
        {"messages", messages_to_json(r.messages)},
        {"temperature", r.temperature},
        {"max_tokens", r.max_tokens},
        {"continue_final_assistant", r.continue_final_assistant},
    };
    return j.dump();
}

/// How an assistant prefill reached the model for a given conversation.
enum class PrefillMode { None, Continue, UserLine };

inline std::string_view to_string(PrefillMode m) {
    switch (m) {
    case PrefillMode::None: return "none";
    case PrefillMode::Continue: return "continue";
    case PrefillMode::UserLine: return "user-line";
    }
    return "none";
}

inline PrefillMode prefill_mode_from_string(std::string_view s) {
    if (s == "none") return PrefillMode::None;
    if (s == "continue") return PrefillMode::Continue;
    if (s == "user-line") return PrefillMode::UserLine;
    throw Error(Errc::ParseError, "unknown prefill mode: " + std::string(s));
}

/// Ordered conversation of one model instance.
struct Transcript {
    std::vector<ChatMessage> messages;
    PrefillMode prefill = PrefillMode::None;

    friend bool operator==(const Transcript&, const Transcript&) = default;
};

inline nlohmann::json to_json(const Transcript& t) {
    return {{"messages", messages_to_json(t.messages)}, {"prefill", to_string(t.prefill)}};
}

inline Transcript transcript_from_json(const nlohmann::json& j) {
    Transcript t;
    for (const auto& m : j.at("messages")) t.messages.push_back(message_from_json(m));
    t.prefill = prefill_mode_from_string(j.value("prefill", "none"));
    return t;
}

} // namespace prep
