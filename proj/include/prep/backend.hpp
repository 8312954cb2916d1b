#pragma once

#include "prep/chat.hpp"
#include "prep/error.hpp"

#include <json.hpp>

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace prep {

/// A chat-completion endpoint. Implementations must be safe to call from
/// several threads at once.
class Backend {
public:
    virtual ~Backend() = default;

    /// Returns the assistant text. For a continuation request the result is
    /// only the newly generated tail, not the prefill.
    virtual std::string chat(const ChatRequest& request) = 0;

    /// False for servers that cannot extend a partial assistant turn.
    virtual bool supports_prefill() const { return true; }
};

/// One scripted reply. Every listed substring must occur: `last_user_contains`
/// in the final user message, `conversation_contains` anywhere in the request.
struct ScriptEntry {
    std::vector<std::string> last_user_contains;
    std::vector<std::string> conversation_contains;
    std::string model;  // empty matches any model
    std::string response;

    std::size_t specificity() const {
        return last_user_contains.size() + conversation_contains.size() + (model.empty() ? 0 : 1);
    }
};

/// Deterministic backend replaying canned responses. The most specific
/// matching entry wins; equally specific entries with different responses are
/// an ambiguity error.
class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(std::vector<ScriptEntry> script,
                             std::optional<std::string> fallback = std::nullopt,
                             bool prefill = true)
        : script_(std::move(script)), fallback_(std::move(fallback)), prefill_(prefill) {}

    ScriptedBackend(ScriptedBackend&& o) noexcept
        : script_(std::move(o.script_)), fallback_(std::move(o.fallback_)), prefill_(o.prefill_),
          calls_(o.calls_.load()), log_(std::move(o.log_)) {}

    std::string chat(const ChatRequest& request) override {
        validate_request(request);
        {
            std::lock_guard lock(mu_);
            log_.push_back(request);
        }
        ++calls_;
        const std::string* last_user = nullptr;
        std::string conversation;
        for (const auto& m : request.messages) {
            if (m.role == Role::User) last_user = &m.content;
            conversation += m.content;
            conversation += '\n';
        }
        const ScriptEntry* best = nullptr;
        bool ambiguous = false;
        for (const auto& e : script_) {
            if (!matches(e, request.model, last_user ? *last_user : std::string(), conversation)) continue;
            if (!best || e.specificity() > best->specificity()) {
                best = &e;
                ambiguous = false;
            } else if (e.specificity() == best->specificity() && e.response != best->response) {
                ambiguous = true;
            }
        }
        if (ambiguous) throw Error(Errc::MatchError, "ambiguous script entries for request");
        if (best) return best->response;
        if (fallback_) return *fallback_;
        throw Error(Errc::MatchError, "no script entry matches request");
    }

    bool supports_prefill() const override { return prefill_; }

    std::size_t calls() const { return calls_.load(); }

    std::vector<ChatRequest> requests() const {
        std::lock_guard lock(mu_);
        return log_;
    }

    /// Reads a line-delimited script: one object per line with
    /// `last_user_contains`, `conversation_contains`, `model` and `response`,
    /// or a single `{"fallback": ...}` line.
    static ScriptedBackend from_file(const std::filesystem::path& path, bool prefill = true) {
        std::ifstream in(path);
        if (!in) throw Error(Errc::IO, "cannot open script " + path.string());
        std::vector<ScriptEntry> entries;
        std::optional<std::string> fallback;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
                if (j.contains("fallback")) {
                    fallback = j.at("fallback").get<std::string>();
                    continue;
                }
                ScriptEntry e;
                e.last_user_contains = j.value("last_user_contains", std::vector<std::string>{});
                e.conversation_contains = j.value("conversation_contains", std::vector<std::string>{});
                e.model = j.value("model", "");
                e.response = j.at("response").get<std::string>();
                entries.push_back(std::move(e));
            } catch (const nlohmann::json::exception& ex) {
                throw Error(Errc::ParseError,
                            path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
            }
        }
        return ScriptedBackend(std::move(entries), std::move(fallback), prefill);
    }

private:
    static bool matches(const ScriptEntry& e, const std::string& model, const std::string& last_user,
                        const std::string& conversation) {
        if (!e.model.empty() && e.model != model) return false;
        for (const auto& s : e.last_user_contains)
            if (last_user.find(s) == std::string::npos) return false;
        for (const auto& s : e.conversation_contains)
            if (conversation.find(s) == std::string::npos) return false;
        return true;
    }

    std::vector<ScriptEntry> script_;
    std::optional<std::string> fallback_;
    bool prefill_;
    std::atomic<std::size_t> calls_{0};
    mutable std::mutex mu_;
    std::vector<ChatRequest> log_;
};

/// Backend driven by a function; convenient for synthetic test fixtures.
class CallbackBackend : public Backend {
public:
    using Fn = std::function<std::string(const ChatRequest&)>;

    explicit CallbackBackend(Fn fn, bool prefill = true) : fn_(std::move(fn)), prefill_(prefill) {}

    std::string chat(const ChatRequest& request) override {
        validate_request(request);
        ++calls_;
        return fn_(request);
    }

    bool supports_prefill() const override { return prefill_; }
    std::size_t calls() const { return calls_.load(); }

private:
    Fn fn_;
    bool prefill_;
    std::atomic<std::size_t> calls_{0};
};

} // namespace prep
