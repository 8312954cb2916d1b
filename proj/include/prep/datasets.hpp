#pragma once

#include "prep/error.hpp"
#include "prep/question.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace prep {

struct Dataset {
    std::string name;
    TaskKind kind = TaskKind::binary_choice();
    std::vector<Question> items;

    std::size_t size() const { return items.size(); }
};

/// Ids unique, every item valid and of the dataset's kind.
inline void validate_dataset(const Dataset& d) {
    std::set<std::string, std::less<>> ids;
    for (const auto& q : d.items) {
        validate_question(q);
        if (!(q.kind == d.kind))
            throw Error(Errc::ParseError, "question " + q.id + " differs in kind from dataset " + d.name);
        if (!ids.insert(q.id).second) throw Error(Errc::DuplicateId, q.id);
    }
}

/// Key counts per label ('a' = index 0, ...) or {no, yes} for yes/no sets.
inline std::vector<std::size_t> key_histogram(const Dataset& d) {
    std::vector<std::size_t> h(d.kind.is_choice() ? d.kind.labels().size() : 2, 0);
    for (const auto& q : d.items) {
        if (const auto* c = std::get_if<char>(&q.key))
            ++h.at(static_cast<std::size_t>(*c - 'a'));
        else
            ++h[std::get<bool>(q.key) ? 1 : 0];
    }
    return h;
}

/// |#a - #b| <= n mod 2.
inline bool is_balanced(const Dataset& d) {
    const auto h = key_histogram(d);
    if (h.size() != 2) return false;
    const std::size_t diff = h[0] > h[1] ? h[0] - h[1] : h[1] - h[0];
    return diff <= d.items.size() % 2;
}

inline constexpr std::string_view kSharedMaterialStem =
    "Normally, which of the following is less likely to be at least partially made of a material that is a "
    "constituent of ";

/// Builds the binary question for (O_A, O_B, O_C). The correct answer, O_C,
/// sits at `correct_position`; O_A takes the other slot.
inline Question format_shared_material_question(const ObjectTriple& triple, char correct_position,
                                                std::string id = {}) {
    if (triple.a.empty() || triple.b.empty() || triple.c.empty())
        throw Error(Errc::MissingObjectNames, "triple with an empty object name");
    if (triple.a == triple.b || triple.a == triple.c || triple.b == triple.c)
        throw Error(Errc::DuplicateObjects, triple.a + " / " + triple.b + " / " + triple.c);
    if (correct_position != 'a' && correct_position != 'b')
        throw Error(Errc::InvalidKey, std::string("correct position must be a or b, got ") + correct_position);

    Question q;
    q.id = std::move(id);
    q.kind = TaskKind::binary_choice();
    q.body = std::string(kSharedMaterialStem) +
             (triple.b_article.empty() ? triple.b : triple.b_article + " " + triple.b) + "?";
    if (correct_position == 'a')
        q.options = {{'a', triple.c}, {'b', triple.a}};
    else
        q.options = {{'a', triple.a}, {'b', triple.c}};
    q.key = correct_position;
    q.objects = triple;
    return q;
}

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IO, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct JsonLine {
    std::size_t lineno;
    nlohmann::json value;
};

inline std::vector<JsonLine> parse_json_lines(std::string_view text, const std::string& source) {
    std::vector<JsonLine> out;
    std::size_t pos = 0, lineno = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        ++lineno;
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        try {
            out.push_back({lineno, nlohmann::json::parse(line)});
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::ParseError, source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (out.empty()) throw Error(Errc::ParseError, source + ": no records");
    return out;
}

template <class T>
T field(const JsonLine& rec, const char* key, const std::string& source) {
    try {
        return rec.value.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(Errc::ParseError, source + ":" + std::to_string(rec.lineno) + ": missing or invalid field '" +
                                          key + "'");
    }
}

inline char normalize_label(std::string_view raw, const std::string& where) {
    if (raw.size() != 1 || !std::isalpha(static_cast<unsigned char>(raw[0])))
        throw Error(Errc::InvalidKey, where + ": bad option label '" + std::string(raw) + "'");
    return static_cast<char>(std::tolower(static_cast<unsigned char>(raw[0])));
}

inline Dataset finish(Dataset d) {
    if (d.items.empty()) throw Error(Errc::ParseError, d.name + ": no records");
    d.kind = d.items.front().kind;
    validate_dataset(d);
    return d;
}

inline Dataset load_curated(std::string_view text, const std::string& source) {
    Dataset d;
    for (const auto& rec : parse_json_lines(text, source)) {
        ObjectTriple t;
        t.a = field<std::string>(rec, "O_A", source);
        t.b = field<std::string>(rec, "O_B", source);
        t.c = field<std::string>(rec, "O_C", source);
        t.b_article = rec.value.value("O_B_article", "");
        t.shared_materials = rec.value.value("shared_materials", std::vector<std::string>{});
        const auto pos = field<std::string>(rec, "correct_position", source);
        if (pos != "a" && pos != "b")
            throw Error(Errc::InvalidKey, source + ":" + std::to_string(rec.lineno) + ": correct_position '" + pos +
                                              "'");
        d.items.push_back(format_shared_material_question(t, pos[0], field<std::string>(rec, "id", source)));
    }
    d = finish(std::move(d));
    if (!is_balanced(d)) throw Error(Errc::Unbalanced, source + ": a/b keys are not balanced");
    return d;
}

// CommonsenseQA and OpenBookQA share the record shape
// {id, question: {stem, choices: [{label, text}]}, answerKey}.
inline Dataset load_lettered(std::string_view text, const std::string& source) {
    Dataset d;
    for (const auto& rec : parse_json_lines(text, source)) {
        const std::string where = source + ":" + std::to_string(rec.lineno);
        Question q;
        q.id = field<std::string>(rec, "id", source);
        const auto& qj = rec.value.contains("question") ? rec.value["question"] : nlohmann::json();
        if (!qj.is_object() || !qj.contains("stem") || !qj.contains("choices") || !qj["stem"].is_string() ||
            !qj["choices"].is_array())
            throw Error(Errc::ParseError, where + ": missing or invalid field 'question'");
        q.body = qj["stem"].get<std::string>();
        for (const auto& c : qj["choices"]) {
            if (!c.contains("label") || !c.contains("text"))
                throw Error(Errc::ParseError, where + ": choice without label/text");
            q.options.push_back({normalize_label(c["label"].get<std::string>(), where), c["text"].get<std::string>()});
        }
        std::sort(q.options.begin(), q.options.end(), [](const Option& x, const Option& y) { return x.label < y.label; });
        std::vector<char> labels;
        for (const auto& o : q.options) labels.push_back(o.label);
        try {
            q.kind = TaskKind::multiple_choice(labels);
        } catch (const Error& e) {
            throw Error(Errc::InvalidKey, where + ": " + e.what());
        }
        q.key = normalize_label(field<std::string>(rec, "answerKey", source), where);
        if (!q.kind.has_label(std::get<char>(q.key)))
            throw Error(Errc::InvalidKey, where + ": answerKey is not among the choices");
        d.items.push_back(std::move(q));
    }
    return finish(std::move(d));
}

// StrategyQA ships as a JSON array; a line-delimited copy is accepted too.
inline Dataset load_strategyqa(std::string_view text, const std::string& source) {
    std::vector<JsonLine> records;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string_view::npos && text[first] == '[') {
        nlohmann::json arr;
        try {
            arr = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::ParseError, source + ": " + e.what());
        }
        std::size_t i = 0;
        for (auto& v : arr) records.push_back({++i, std::move(v)});
        if (records.empty()) throw Error(Errc::ParseError, source + ": no records");
    } else {
        records = parse_json_lines(text, source);
    }
    Dataset d;
    for (const auto& rec : records) {
        Question q;
        q.id = field<std::string>(rec, "qid", source);
        q.body = field<std::string>(rec, "question", source);
        q.kind = TaskKind::yes_no();
        if (!rec.value.contains("answer") || !rec.value["answer"].is_boolean())
            throw Error(Errc::InvalidKey, source + ":" + std::to_string(rec.lineno) + ": answer must be true/false");
        q.key = rec.value["answer"].get<bool>();
        d.items.push_back(std::move(q));
    }
    return finish(std::move(d));
}

} // namespace detail

inline const std::vector<std::string>& dataset_formats() {
    static const std::vector<std::string> formats{"curated", "csqa", "obqa", "strategyqa"};
    return formats;
}

/// Parses dataset text in one of `dataset_formats()`. Option labels come out
/// lowercase; StrategyQA becomes a yes/no dataset.
inline Dataset parse_dataset(std::string_view text, std::string_view format, std::string name,
                             const std::string& source = "<input>") {
    Dataset d;
    if (format == "curated")
        d = detail::load_curated(text, source);
    else if (format == "csqa" || format == "obqa")
        d = detail::load_lettered(text, source);
    else if (format == "strategyqa")
        d = detail::load_strategyqa(text, source);
    else
        throw Error(Errc::UnknownFormat, "dataset format " + std::string(format));
    d.name = name.empty() ? std::string(format) : std::move(name);
    return d;
}

inline Dataset load_dataset(const std::filesystem::path& path, std::string_view format, std::string name = {}) {
    return parse_dataset(detail::read_file(path), format, std::move(name), path.string());
}

/// Canonical file form for `format`: one record per line, fixed key order.
inline std::string write_dataset(const Dataset& d, std::string_view format) {
    std::string out;
    for (const auto& q : d.items) {
        nlohmann::ordered_json j;
        if (format == "curated") {
            if (!q.objects) throw Error(Errc::UnknownFormat, "question " + q.id + " has no object triple");
            const auto& t = *q.objects;
            j["id"] = q.id;
            j["O_A"] = t.a;
            j["O_B"] = t.b;
            j["O_C"] = t.c;
            j["correct_position"] = to_string(q.key);
            j["shared_materials"] = t.shared_materials;
            if (!t.b_article.empty()) j["O_B_article"] = t.b_article;
        } else if (format == "csqa" || format == "obqa") {
            if (!q.kind.is_choice()) throw Error(Errc::UnknownFormat, format);
            j["id"] = q.id;
            auto choices = nlohmann::ordered_json::array();
            for (const auto& o : q.options) {
                nlohmann::ordered_json c;
                c["label"] = std::string(1, static_cast<char>(std::toupper(o.label)));
                c["text"] = o.text;
                choices.push_back(std::move(c));
            }
            j["question"]["stem"] = q.body;
            j["question"]["choices"] = std::move(choices);
            j["answerKey"] = std::string(1, static_cast<char>(std::toupper(std::get<char>(q.key))));
        } else if (format == "strategyqa") {
            if (q.kind.is_choice()) throw Error(Errc::UnknownFormat, format);
            j["qid"] = q.id;
            j["question"] = q.body;
            j["answer"] = std::get<bool>(q.key);
        } else {
            throw Error(Errc::UnknownFormat, "dataset format " + std::string(format));
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

namespace detail {

// Uniform integer in [0, bound) by rejection; unlike the standard
// distributions, the sequence is identical on every standard library.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    for (;;) {
        const std::uint64_t r = rng();
        if (r < limit) return r % bound;
    }
}

} // namespace detail

/// Seeded sample of `n` items without replacement, in original order.
inline Dataset sample(const Dataset& d, std::size_t n, std::uint64_t seed) {
    if (n > d.items.size())
        throw Error(Errc::NTooLarge, std::to_string(n) + " > " + std::to_string(d.items.size()));
    Dataset out{d.name, d.kind, {}};
    out.items.reserve(n);
    std::mt19937_64 rng(seed);
    std::size_t needed = n;
    for (std::size_t i = 0; i < d.items.size() && needed > 0; ++i) {
        const std::uint64_t remaining = d.items.size() - i;
        if (detail::uniform_below(rng, remaining) < needed) {
            out.items.push_back(d.items[i]);
            --needed;
        }
    }
    return out;
}

} // namespace prep
