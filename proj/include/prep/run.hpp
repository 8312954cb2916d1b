#pragma once

#include "prep/backend.hpp"
#include "prep/cache.hpp"
#include "prep/datasets.hpp"
#include "prep/error.hpp"
#include "prep/evaluation.hpp"
#include "prep/http_backend.hpp"
#include "prep/miner.hpp"
#include "prep/strategy.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace prep {

struct DatasetRef {
    std::string name;
    std::string path;
    std::string format;
    std::size_t sample = 0;  // 0 keeps every item
    std::optional<std::uint64_t> seed;
};

struct BackendSettings {
    std::string kind = "http";  // http | scripted
    std::string script;
    std::string base_url = "http://localhost:11434";
    std::string endpoint = "/v1/chat/completions";
    long timeout_ms = 120000;
    int max_retries = 2;
    bool prefill = true;
};

/// Everything a grid run needs. Stored verbatim as the run's config.json.
struct RunConfig {
    std::vector<std::string> strategies{"all"};
    std::vector<DatasetRef> datasets;
    std::vector<std::string> models;
    BackendSettings backend;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    double temperature = 0.0;
    int max_tokens = kDefaultMaxTokens;
    bool cache = false;
    std::string cache_dir = ".prep-cache";
    std::string run_id;
    std::string runs_dir = "runs";
};

inline nlohmann::ordered_json to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["run_id"] = c.run_id;
    j["runs_dir"] = c.runs_dir;
    j["strategies"] = c.strategies;
    j["models"] = c.models;
    auto ds = nlohmann::ordered_json::array();
    for (const auto& d : c.datasets) {
        nlohmann::ordered_json e;
        e["name"] = d.name;
        e["path"] = d.path;
        e["format"] = d.format;
        e["sample"] = d.sample;
        if (d.seed) e["seed"] = *d.seed;
        ds.push_back(std::move(e));
    }
    j["datasets"] = std::move(ds);
    nlohmann::ordered_json b;
    b["kind"] = c.backend.kind;
    b["script"] = c.backend.script;
    b["base_url"] = c.backend.base_url;
    b["endpoint"] = c.backend.endpoint;
    b["timeout_ms"] = c.backend.timeout_ms;
    b["max_retries"] = c.backend.max_retries;
    b["prefill"] = c.backend.prefill;
    j["backend"] = std::move(b);
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    j["temperature"] = c.temperature;
    j["max_tokens"] = c.max_tokens;
    j["cache"] = {{"enabled", c.cache}, {"dir", c.cache_dir}};
    return j;
}

/// Reads a config object; absent keys keep their defaults.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        c.run_id = j.value("run_id", c.run_id);
        c.runs_dir = j.value("runs_dir", c.runs_dir);
        c.strategies = j.value("strategies", c.strategies);
        c.models = j.value("models", c.models);
        if (j.contains("datasets")) {
            for (const auto& e : j.at("datasets")) {
                DatasetRef d;
                d.name = e.value("name", "");
                d.path = e.at("path").get<std::string>();
                d.format = e.at("format").get<std::string>();
                d.sample = e.value("sample", std::size_t{0});
                if (e.contains("seed")) d.seed = e.at("seed").get<std::uint64_t>();
                c.datasets.push_back(std::move(d));
            }
        }
        if (j.contains("backend")) {
            const auto& b = j.at("backend");
            c.backend.kind = b.value("kind", c.backend.kind);
            c.backend.script = b.value("script", c.backend.script);
            c.backend.base_url = b.value("base_url", c.backend.base_url);
            c.backend.endpoint = b.value("endpoint", c.backend.endpoint);
            c.backend.timeout_ms = b.value("timeout_ms", c.backend.timeout_ms);
            c.backend.max_retries = b.value("max_retries", c.backend.max_retries);
            c.backend.prefill = b.value("prefill", c.backend.prefill);
        }
        c.seed = j.value("seed", c.seed);
        c.workers = j.value("workers", c.workers);
        c.temperature = j.value("temperature", c.temperature);
        c.max_tokens = j.value("max_tokens", c.max_tokens);
        if (j.contains("cache")) {
            c.cache = j.at("cache").value("enabled", c.cache);
            c.cache_dir = j.at("cache").value("dir", c.cache_dir);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ConfigError, e.what());
    }
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ConfigError, path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

/// A dataset loaded for a run together with the strategies that apply to it.
struct PlannedDataset {
    Dataset dataset;
    std::vector<const StrategySpec*> strategies;
};

/// Checks the config and loads its datasets. Every problem found here is a
/// ConfigError, raised before any backend is contacted.
inline std::vector<PlannedDataset> prepare_run(const RunConfig& c) {
    if (c.models.empty()) throw Error(Errc::ConfigError, "no model given");
    if (c.datasets.empty()) throw Error(Errc::ConfigError, "no dataset given");
    if (c.workers == 0) throw Error(Errc::ConfigError, "workers must be at least 1");
    if (c.run_id.empty()) throw Error(Errc::ConfigError, "run id is empty");
    if (c.backend.kind != "http" && c.backend.kind != "scripted")
        throw Error(Errc::ConfigError, "backend must be http or scripted, got " + c.backend.kind);
    if (c.backend.kind == "scripted" && c.backend.script.empty())
        throw Error(Errc::ConfigError, "scripted backend needs a script file");

    const bool all = c.strategies.size() == 1 && c.strategies[0] == "all";
    std::vector<const StrategySpec*> requested;
    if (all) {
        for (const auto& s : kStrategies) requested.push_back(&s);
    } else {
        for (const auto& id : c.strategies) {
            try {
                requested.push_back(&find_strategy(id));
            } catch (const Error&) {
                throw Error(Errc::ConfigError, "unknown strategy id '" + id + "'");
            }
        }
    }

    std::vector<PlannedDataset> out;
    for (const auto& ref : c.datasets) {
        PlannedDataset pd;
        try {
            pd.dataset = load_dataset(ref.path, ref.format, ref.name);
            if (ref.sample > 0) pd.dataset = sample(pd.dataset, ref.sample, ref.seed.value_or(c.seed));
        } catch (const Error& e) {
            throw Error(Errc::ConfigError, std::string("dataset ") + ref.path + ": " + e.what());
        }
        const bool has_objects = std::all_of(pd.dataset.items.begin(), pd.dataset.items.end(),
                                             [](const Question& q) { return q.objects.has_value(); });
        for (const auto* s : requested) {
            if (s->knowledge == KnowledgeUse::Dependent && !has_objects) {
                if (all) continue;
                throw Error(Errc::ConfigError, std::string(s->id) + " needs object names; dataset " +
                                                   pd.dataset.name + " has none");
            }
            pd.strategies.push_back(s);
        }
        out.push_back(std::move(pd));
    }
    return out;
}

/// Builds the backend a config asks for, optionally behind the response cache.
struct BackendStack {
    std::unique_ptr<Backend> base;
    std::unique_ptr<CachedBackend> cached;

    Backend& get() { return cached ? static_cast<Backend&>(*cached) : *base; }
};

inline BackendStack make_backend(const RunConfig& c) {
    BackendStack s;
    if (c.backend.kind == "scripted") {
        s.base = std::make_unique<ScriptedBackend>(ScriptedBackend::from_file(c.backend.script, c.backend.prefill));
    } else {
        HttpBackendConfig h;
        h.base_url = c.backend.base_url;
        h.endpoint = c.backend.endpoint;
        h.timeout = std::chrono::milliseconds(c.backend.timeout_ms);
        h.max_retries = c.backend.max_retries;
        h.prefill = c.backend.prefill;
        s.base = std::make_unique<HttpBackend>(h);
    }
    if (c.cache) s.cached = std::make_unique<CachedBackend>(*s.base, c.cache_dir);
    return s;
}

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitBackend = 2, kExitPartial = 3 };

struct RunResult {
    int exit_code = kExitOk;
    std::filesystem::path run_dir;
    EvalReport report;
    std::string message;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::IO, "cannot write " + tmp);
        out << text;
        if (!out.flush()) throw Error(Errc::IO, "write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

/// Evaluates the whole grid (dataset x strategy x model) into
/// runs/<run-id>/. A run directory that already holds the same config is
/// resumed; questions already on disk are not sent again. `backend`
/// overrides the one the config describes (tests inject scripted fakes).
inline RunResult cmd_run(const RunConfig& config, Backend* backend = nullptr, std::ostream* log = nullptr) {
    RunResult result;
    std::vector<PlannedDataset> plan;
    try {
        plan = prepare_run(config);
    } catch (const Error& e) {
        return {kExitConfig, {}, {}, e.what()};
    }

    result.run_dir = std::filesystem::path(config.runs_dir) / config.run_id;
    const auto config_path = result.run_dir / "config.json";
    const std::string config_text = to_json(config).dump(2) + "\n";
    if (std::filesystem::exists(config_path) && detail::read_file(config_path) != config_text)
        return {kExitConfig, result.run_dir, {}, "run directory holds a different config: " + config_path.string()};

    std::optional<BackendStack> owned;
    try {
        if (!backend) {
            owned = make_backend(config);
            backend = &owned->get();
        }
    } catch (const Error& e) {
        return {kExitConfig, result.run_dir, {}, e.what()};
    }

    RunStore store(result.run_dir);
    write_text(config_path, config_text);

    EvalOptions opts;
    opts.settings.temperature = config.temperature;
    opts.settings.max_tokens = config.max_tokens;
    opts.workers = config.workers;
    opts.store = &store;

    for (const auto& pd : plan) {
        for (const auto* spec : pd.strategies) {
            for (const auto& model : config.models) {
                opts.settings.model = model;
                try {
                    result.report.cells.push_back(evaluate(*spec, pd.dataset, *backend, opts));
                    if (log)
                        *log << pd.dataset.name << ' ' << spec->id << ' ' << model << ": "
                             << result.report.cells.back().correct << '/' << result.report.cells.back().n << '\n';
                } catch (const BackendFailure& e) {
                    result.exit_code = store.persisted() > 0 ? kExitPartial : kExitBackend;
                    result.message = "question " + e.question_id + " (" + std::string(spec->id) + ", " + model +
                                     "): " + e.what();
                    return result;
                }
            }
        }
    }

    write_text(result.run_dir / "cells.jsonl", cells_jsonl(result.report.cells));
    write_text(result.run_dir / "report.md", render_report(result.report, "markdown"));
    return result;
}

/// Re-renders a finished run from its cells.jsonl.
inline std::string cmd_report(const std::filesystem::path& run_dir, std::string_view format) {
    const auto path = run_dir / "cells.jsonl";
    EvalReport report{parse_cells_jsonl(detail::read_file(path), path.string())};
    return render_report(report, format);
}

struct MineResult {
    Dataset dataset;
    std::size_t pool = 0;
    bool odd = false;
};

/// Mines the schema, selects `n` questions and writes them in the curated format.
inline MineResult cmd_mine(const std::filesystem::path& schema_path, std::size_t n, std::uint64_t seed,
                           const std::filesystem::path& out, unsigned workers = 1) {
    const auto schema = load_schema(schema_path);
    const auto triples = mine_triples(schema, workers);
    MineResult r;
    r.pool = triples.size();
    r.dataset = emit_question_set(triples, n, seed, &schema);
    r.odd = n % 2 == 1;
    write_text(out, write_dataset(r.dataset, "curated"));
    return r;
}

inline std::string cmd_list_strategies() {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-14s %-9s %-8s %-4s %-11s %-7s %s\n", "id", "instances", "messages", "copy",
                  "knowledge", "trigger", "method");
    out << line;
    for (const auto& s : kStrategies) {
        std::snprintf(line, sizeof line, "%-14s %-9d %-8d %-4s %-11s %-7s %s\n", std::string(s.id).c_str(),
                      s.instances, s.messages, s.messages == 1 ? "-" : (s.copy ? "yes" : "no"),
                      std::string(to_string(s.knowledge)).c_str(), std::string(to_string(s.trigger)).c_str(),
                      std::string(s.label).c_str());
        out << line;
    }
    return out.str();
}

} // namespace prep
