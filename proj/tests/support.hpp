#pragma once

#include "prep/backend.hpp"
#include "prep/question.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace testing_support {

inline const std::filesystem::path kTestDir = PREP_TEST_DIR;
inline const std::filesystem::path kTemplateDir = PREP_TEMPLATE_DIR;

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("missing test file " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline std::string strip_final_newline(std::string s) {
    if (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
}

inline std::string response(const std::string& name) {
    return slurp(kTestDir / "fixtures" / "responses" / (name + ".txt"));
}

inline std::string facts() { return strip_final_newline(slurp(kTestDir / "fixtures" / "facts.txt")); }
inline std::string parts() { return strip_final_newline(slurp(kTestDir / "fixtures" / "parts.txt")); }

inline constexpr const char* kGoldenSeparator = "\n======== next user message ========\n";

inline std::vector<std::string> golden_messages(const std::string& strategy) {
    const std::string text = strip_final_newline(slurp(kTestDir / "golden" / (strategy + ".txt")));
    const std::string sep = kGoldenSeparator;
    std::vector<std::string> out;
    std::size_t pos = 0;
    for (;;) {
        const auto at = text.find(sep, pos);
        out.push_back(text.substr(pos, at == std::string::npos ? std::string::npos : at - pos));
        if (at == std::string::npos) return out;
        pos = at + sep.size();
    }
}

// The sample question of the recorded conversations, built by hand rather
// than through the library's formatter.
inline prep::Question magnifying_glass() {
    prep::Question q;
    q.id = "magnifying-glass";
    q.body = "Normally, which of the following is less likely to be at least partially made of a material "
             "that is a constituent of a magnifying glass?";
    q.kind = prep::TaskKind::binary_choice();
    q.options = {{'a', "doorstop"}, {'b', "contact lens"}};
    q.key = 'b';
    q.objects = prep::ObjectTriple{"doorstop", "magnifying glass", "contact lens", "a", {"plastic"}};
    return q;
}

inline prep::Question cactus() {
    prep::Question q;
    q.id = "cactus";
    q.body = "Is cactus fruit an important menu item for a restaurant inspired by Cuauhtémoc?";
    q.kind = prep::TaskKind::yes_no();
    q.key = true;
    return q;
}

// Answers elicitation prompts with the recorded fact list (or a parts list)
// and everything else with the recorded final answer.
inline prep::ScriptedBackend recorded_backend(bool prefill = true) {
    std::vector<prep::ScriptEntry> script;
    script.push_back({{"Please list specific facts"}, {}, "", facts()});
    script.push_back({{"List the parts of"}, {}, "", parts()});
    return prep::ScriptedBackend(std::move(script), response("mg_prep"), prefill);
}

class TempDir {
public:
    TempDir() {
        static std::atomic<unsigned> seq{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("prep-test-" + std::to_string(rd()) + "-" + std::to_string(seq++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

} // namespace testing_support
