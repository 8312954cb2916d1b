#pragma once

#include "prep/backend.hpp"
#include "prep/chat.hpp"
#include "prep/error.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <array>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <system_error>
#include <thread>

namespace prep {

inline std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw Error(Errc::CacheIO, "sha256 failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += kHex[md[i] >> 4];
        out += kHex[md[i] & 0xf];
    }
    return out;
}

/// SHA-256 of the canonical request bytes.
struct CacheKey {
    std::string digest;

    static CacheKey of(const ChatRequest& r) { return {sha256_hex(canonical_serialize(r))}; }

    friend bool operator==(const CacheKey&, const CacheKey&) = default;
};

/// Wraps a backend with a directory of `<digest>.json` files holding the
/// response and the request it answered. Writes go through a temp file and a
/// rename, so readers never see a partial entry.
class CachedBackend : public Backend {
public:
    CachedBackend(Backend& inner, std::filesystem::path dir) : inner_(inner), dir_(std::move(dir)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw Error(Errc::CacheIO, "cannot create cache dir " + dir_.string() + ": " + ec.message());
    }

    std::string chat(const ChatRequest& request) override {
        const CacheKey key = CacheKey::of(request);
        if (auto hit = lookup(key)) {
            ++hits_;
            return *hit;
        }
        std::string text = inner_.chat(request);
        store(key, request, text);
        return text;
    }

    bool supports_prefill() const override { return inner_.supports_prefill(); }

    std::size_t hits() const { return hits_.load(); }
    std::filesystem::path path_for(const CacheKey& key) const { return dir_ / (key.digest + ".json"); }

private:
    std::optional<std::string> lookup(const CacheKey& key) const {
        const auto path = path_for(key);
        std::error_code ec;
        if (!std::filesystem::exists(path, ec)) {
            if (ec) throw Error(Errc::CacheIO, path.string() + ": " + ec.message());
            return std::nullopt;
        }
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(Errc::CacheIO, "cannot read " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        try {
            return nlohmann::json::parse(ss.str()).at("response").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::CacheIO, "corrupt cache entry " + path.string() + ": " + e.what());
        }
    }

    void store(const CacheKey& key, const ChatRequest& request, const std::string& text) {
        const auto path = path_for(key);
        static std::atomic<unsigned long> seq{0};
        const auto tmp = dir_ / (key.digest + ".tmp." +
                                 std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) +
                                 "." + std::to_string(seq++));
        nlohmann::json entry = {
            {"response", text},
            {"request", nlohmann::json::parse(canonical_serialize(request))},
        };
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw Error(Errc::CacheIO, "cannot write " + tmp.string());
            out << entry.dump(2) << '\n';
            if (!out.flush()) throw Error(Errc::CacheIO, "write failed for " + tmp.string());
        }
        std::error_code ec;
        std::filesystem::rename(tmp, path, ec);
        if (ec) {
            std::filesystem::remove(tmp, ec);
            throw Error(Errc::CacheIO, "cannot publish " + path.string());
        }
    }

    Backend& inner_;
    std::filesystem::path dir_;
    std::atomic<std::size_t> hits_{0};
};

} // namespace prep
