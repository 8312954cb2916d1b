#pragma once

#include "prep/backend.hpp"
#include "prep/chat.hpp"
#include "prep/error.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <string>
#include <thread>

namespace prep {

struct HttpBackendConfig {
    std::string base_url = "http://localhost:11434";
    std::string endpoint = "/v1/chat/completions";
    std::chrono::milliseconds timeout{120000};
    int max_retries = 2;
    std::chrono::milliseconds backoff{500};
    bool prefill = true;
};

/// Request body sent over the wire. Differs from the canonical cache form:
/// it carries `stream` and omits the continuation flag unless it is set.
inline std::string wire_body(const ChatRequest& r) {
    nlohmann::ordered_json j;
    j["model"] = r.model;
    auto msgs = nlohmann::ordered_json::array();
    for (const auto& m : r.messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    j["messages"] = std::move(msgs);
    j["temperature"] = r.temperature;
    j["stream"] = false;
    j["max_tokens"] = r.max_tokens;
    if (r.continue_final_assistant) j["continue_final_message"] = true;
    return j.dump();
}

/// Pulls the assistant text out of an OpenAI-style (`choices[0].message`) or
/// Ollama-style (`message`) response body.
inline std::string parse_completion(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::Protocol, std::string("malformed response body: ") + e.what());
    }
    const nlohmann::json* msg = nullptr;
    if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty())
        msg = j["choices"][0].contains("message") ? &j["choices"][0]["message"] : nullptr;
    else if (j.contains("message"))
        msg = &j["message"];
    if (!msg || !msg->contains("content") || !(*msg)["content"].is_string())
        throw Error(Errc::Protocol, "response body has no assistant content");
    return (*msg)["content"].get<std::string>();
}

/// Chat-completion client for local runners and OpenAI-compatible servers.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {}

    std::string chat(const ChatRequest& request) override {
        validate_request(request);
        const std::string body = wire_body(request);
        for (int attempt = 0;; ++attempt) {
            try {
                return post_once(body, request.model);
            } catch (const Error& e) {
                if (e.code() != Errc::Transport || attempt >= config_.max_retries) throw;
                std::this_thread::sleep_for(config_.backoff * (1 << attempt));
            }
        }
    }

    bool supports_prefill() const override { return config_.prefill; }

    /// Total HTTP requests issued by every HttpBackend in this process.
    static std::size_t network_calls() { return counter().load(); }

private:
    static std::atomic<std::size_t>& counter() {
        static std::atomic<std::size_t> n{0};
        return n;
    }

    std::string post_once(const std::string& body, const std::string& model) {
        httplib::Client client(config_.base_url);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());
        ++counter();
        auto res = client.Post(config_.endpoint, body, "application/json");
        if (!res) throw Error(Errc::Transport, config_.base_url + ": " + httplib::to_string(res.error()));
        if (res->status == 404 && res->body.find("model") != std::string::npos)
            throw Error(Errc::ModelNotFound, model + ": " + res->body);
        if (res->status < 200 || res->status >= 300)
            throw Error(Errc::Protocol, "HTTP " + std::to_string(res->status) + ": " + res->body);
        return parse_completion(res->body);
    }

    HttpBackendConfig config_;
};

} // namespace prep
