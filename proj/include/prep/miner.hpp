#pragma once

#include "prep/datasets.hpp"
#include "prep/error.hpp"
#include "prep/question.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <iterator>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

namespace prep {

namespace detail {

// Plural spellings seen in part/material descriptions that must unify with
// their singular form. Deliberately a closed list: "glass" and "brass" end in
// "s" and must stay untouched.
inline const std::map<std::string, std::string, std::less<>>& plural_exceptions() {
    static const std::map<std::string, std::string, std::less<>> m{
        {"metals", "metal"},       {"plastics", "plastic"},     {"fabrics", "fabric"},
        {"woods", "wood"},         {"fibers", "fiber"},         {"fibres", "fiber"},
        {"polymers", "polymer"},   {"ceramics", "ceramic"},     {"textiles", "textile"},
        {"rubbers", "rubber"},     {"resins", "resin"},         {"foams", "foam"},
        {"alloys", "alloy"},       {"composites", "composite"}, {"stones", "stone"},
        {"leathers", "leather"},   {"papers", "paper"},         {"glasses", "glass"},
        {"threads", "thread"},     {"wires", "wire"},           {"minerals", "mineral"},
        {"pigments", "pigment"},   {"adhesives", "adhesive"},   {"dyes", "dye"},
        {"silicones", "silicone"}, {"nylons", "nylon"},         {"steels", "steel"},
    };
    return m;
}

} // namespace detail

/// Lowercases, trims, collapses inner whitespace and folds listed plurals.
inline std::string canonical_material(std::string_view raw) {
    std::string out;
    bool space = false;
    for (char ch : raw) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            space = !out.empty();
            continue;
        }
        if (space) out += ' ';
        space = false;
        out += static_cast<char>(std::tolower(c));
    }
    const auto& plurals = detail::plural_exceptions();
    if (auto it = plurals.find(out); it != plurals.end()) return it->second;
    return out;
}

struct Part {
    std::string name;
    std::set<std::string> materials;
};

struct SchemaObject {
    std::vector<Part> parts;
    std::string article;
};

/// Objects with their parts and part materials. Material names are stored
/// canonicalized.
struct MaterialSchema {
    std::map<std::string, SchemaObject> objects;

    void add_part(const std::string& object, const std::string& part, const std::vector<std::string>& materials,
                  const std::string& article = {}) {
        if (object.empty()) throw Error(Errc::ParseError, "schema record without object name");
        auto& obj = objects[object];
        if (!article.empty()) obj.article = article;
        Part p{part, {}};
        for (const auto& m : materials) {
            auto c = canonical_material(m);
            if (!c.empty()) p.materials.insert(std::move(c));
        }
        obj.parts.push_back(std::move(p));
    }
};

/// Reads line-delimited records {object, part, materials[], article?}.
inline MaterialSchema parse_schema(std::string_view text, const std::string& source = "<schema>") {
    MaterialSchema schema;
    for (const auto& rec : detail::parse_json_lines(text, source)) {
        schema.add_part(detail::field<std::string>(rec, "object", source), detail::field<std::string>(rec, "part", source),
                        detail::field<std::vector<std::string>>(rec, "materials", source),
                        rec.value.value("article", ""));
    }
    return schema;
}

inline MaterialSchema load_schema(const std::filesystem::path& path) {
    return parse_schema(detail::read_file(path), path.string());
}

/// Union of the materials of every part of `object`.
inline std::set<std::string> materials_of(const MaterialSchema& schema, const std::string& object) {
    auto it = schema.objects.find(object);
    if (it == schema.objects.end()) throw Error(Errc::UnknownObject, object);
    std::set<std::string> out;
    for (const auto& p : it->second.parts) out.insert(p.materials.begin(), p.materials.end());
    return out;
}

struct MinedTriple {
    std::string o_a;
    std::string o_b;
    std::string o_c;
    std::vector<std::string> shared;  // sorted

    friend bool operator==(const MinedTriple&, const MinedTriple&) = default;
    friend auto operator<=>(const MinedTriple& x, const MinedTriple& y) {
        return std::tie(x.o_b, x.o_a, x.o_c) <=> std::tie(y.o_b, y.o_a, y.o_c);
    }
};

namespace detail {

// Material sets as bit rows over an interned material index.
struct MaterialMatrix {
    std::vector<std::string> names;               // object names, sorted
    std::vector<std::string> materials;           // material index -> name
    std::vector<std::vector<std::uint64_t>> bits;  // per object
    std::size_t words = 0;

    explicit MaterialMatrix(const MaterialSchema& schema) {
        std::map<std::string, std::size_t> index;
        std::vector<std::set<std::string>> sets;
        for (const auto& [name, _] : schema.objects) {
            names.push_back(name);
            sets.push_back(materials_of(schema, name));
            for (const auto& m : sets.back())
                if (index.emplace(m, 0).second) materials.push_back(m);
        }
        std::sort(materials.begin(), materials.end());
        for (std::size_t i = 0; i < materials.size(); ++i) index[materials[i]] = i;
        words = (materials.size() + 63) / 64;
        for (const auto& s : sets) {
            std::vector<std::uint64_t> row(words, 0);
            for (const auto& m : s) {
                const std::size_t k = index[m];
                row[k / 64] |= std::uint64_t{1} << (k % 64);
            }
            bits.push_back(std::move(row));
        }
    }

    bool intersects(std::size_t x, std::size_t y) const {
        for (std::size_t w = 0; w < words; ++w)
            if (bits[x][w] & bits[y][w]) return true;
        return false;
    }

    std::vector<std::string> shared(std::size_t x, std::size_t y) const {
        std::vector<std::string> out;
        for (std::size_t w = 0; w < words; ++w) {
            std::uint64_t v = bits[x][w] & bits[y][w];
            while (v) {
                const int b = __builtin_ctzll(v);
                out.push_back(materials[w * 64 + static_cast<std::size_t>(b)]);
                v &= v - 1;
            }
        }
        return out;
    }
};

} // namespace detail

/// Every (O_A, O_B, O_C) where O_A and O_B share a material and O_C shares
/// none with O_B, ordered by (O_B, O_A, O_C). The O_B loop is split across
/// `workers` threads; the result does not depend on the worker count.
inline std::vector<MinedTriple> mine_triples(const MaterialSchema& schema, unsigned workers = 1) {
    const detail::MaterialMatrix mx(schema);
    const std::size_t n = mx.names.size();

    auto mine_b = [&](std::size_t b, std::vector<MinedTriple>& out) {
        std::vector<std::size_t> disjoint;
        for (std::size_t c = 0; c < n; ++c)
            if (c != b && !mx.intersects(b, c)) disjoint.push_back(c);
        if (disjoint.empty()) return;
        for (std::size_t a = 0; a < n; ++a) {
            if (a == b || !mx.intersects(a, b)) continue;
            const auto shared = mx.shared(a, b);
            for (std::size_t c : disjoint)
                if (c != a) out.push_back({mx.names[a], mx.names[b], mx.names[c], shared});
        }
    };

    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    std::vector<std::vector<MinedTriple>> per_b(n);
    if (workers == 1) {
        for (std::size_t b = 0; b < n; ++b) mine_b(b, per_b[b]);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t b = w; b < n; b += workers) mine_b(b, per_b[b]);
            });
        for (auto& t : pool) t.join();
    }
    std::vector<MinedTriple> out;
    for (auto& v : per_b) std::move(v.begin(), v.end(), std::back_inserter(out));
    return out;
}

/// Re-derives both material sets from the schema and checks the question's
/// triple: O_A and O_B share something, O_C and O_B share nothing, all
/// distinct, and the key points at O_C.
inline bool triple_is_sound(const MaterialSchema& schema, const Question& q) {
    if (!q.objects) return false;
    const auto& t = *q.objects;
    if (t.a == t.b || t.a == t.c || t.b == t.c) return false;
    if (!schema.objects.count(t.a) || !schema.objects.count(t.b) || !schema.objects.count(t.c)) return false;
    const auto ma = materials_of(schema, t.a);
    const auto mb = materials_of(schema, t.b);
    const auto mc = materials_of(schema, t.c);
    std::vector<std::string> ab, cb;
    std::set_intersection(ma.begin(), ma.end(), mb.begin(), mb.end(), std::back_inserter(ab));
    std::set_intersection(mc.begin(), mc.end(), mb.begin(), mb.end(), std::back_inserter(cb));
    if (ab.empty() || !cb.empty()) return false;
    const auto* key = std::get_if<char>(&q.key);
    if (!key) return false;
    for (const auto& o : q.options)
        if (o.label == *key) return o.text == t.c;
    return false;
}

/// Picks `n` triples, each time the one whose objects have been used least so
/// far (ties broken by a seeded random rank), and alternates the correct
/// position a, b, a, b, ... so the key counts stay balanced.
inline Dataset emit_question_set(const std::vector<MinedTriple>& triples, std::size_t n, std::uint64_t seed,
                                 const MaterialSchema* schema = nullptr, std::string name = "curated") {
    if (n > triples.size())
        throw Error(Errc::NotEnoughTriples,
                    "asked for " + std::to_string(n) + ", only " + std::to_string(triples.size()) + " mined");

    std::mt19937_64 rng(seed);
    std::vector<std::uint64_t> rank(triples.size());
    for (auto& r : rank) r = rng();

    std::map<std::string, std::size_t> uses;
    std::vector<bool> taken(triples.size(), false);
    Dataset out;
    out.name = std::move(name);
    out.kind = TaskKind::binary_choice();
    const std::size_t width = std::to_string(std::max<std::size_t>(n, 1)).size();

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t best = triples.size();
        std::size_t best_penalty = 0;
        for (std::size_t i = 0; i < triples.size(); ++i) {
            if (taken[i]) continue;
            const auto& t = triples[i];
            const std::size_t penalty = uses[t.o_a] + uses[t.o_b] + uses[t.o_c];
            if (best == triples.size() || penalty < best_penalty ||
                (penalty == best_penalty && rank[i] < rank[best])) {
                best = i;
                best_penalty = penalty;
            }
        }
        taken[best] = true;
        const auto& t = triples[best];
        ++uses[t.o_a];
        ++uses[t.o_b];
        ++uses[t.o_c];

        ObjectTriple obj{t.o_a, t.o_b, t.o_c, {}, t.shared};
        if (schema) {
            if (auto it = schema->objects.find(t.o_b); it != schema->objects.end()) obj.b_article = it->second.article;
        }
        std::string id = std::to_string(k + 1);
        id = "smq-" + std::string(width - id.size(), '0') + id;
        out.items.push_back(format_shared_material_question(obj, k % 2 == 0 ? 'a' : 'b', std::move(id)));
    }
    return out;
}

} // namespace prep
