// Command-line entry point: run, mine, report, list-strategies.

#include "prep/run.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

std::vector<std::string> split_ids(const std::vector<std::string>& raw) {
    std::vector<std::string> out;
    for (const auto& item : raw) {
        std::size_t start = 0;
        while (start <= item.size()) {
            const auto comma = item.find(',', start);
            const auto piece = item.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            if (!piece.empty()) out.push_back(piece);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    }
    return out;
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prompting-strategy evaluation harness"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Evaluate a grid of strategies x datasets x models");
    std::string config_path;
    std::vector<std::string> strategies, models;
    std::string ds_name, ds_path, ds_format;
    std::size_t ds_sample = 0;
    std::optional<std::uint64_t> ds_seed;
    std::string backend_kind, script, base_url, endpoint, run_id, runs_dir, cache_dir;
    std::optional<unsigned> workers;
    std::optional<double> temperature;
    std::optional<int> max_tokens;
    bool no_prefill = false, cache = false, no_cache = false;
    run->add_option("-c,--config", config_path, "JSON run config; flags override its values")->check(CLI::ExistingFile);
    run->add_option("--strategy", strategies, "Strategy ids, comma separated, or 'all'");
    run->add_option("--model", models, "Model names, comma separated");
    run->add_option("--dataset", ds_name, "Dataset name");
    run->add_option("--path", ds_path, "Dataset file")->check(CLI::ExistingFile);
    run->add_option("--format", ds_format, "Dataset format: curated, csqa, obqa, strategyqa");
    run->add_option("--sample", ds_sample, "Sample this many items (0 keeps all)");
    run->add_option("--seed", ds_seed, "Sampling seed");
    run->add_option("--backend", backend_kind, "http or scripted");
    run->add_option("--script", script, "Script file for the scripted backend");
    run->add_option("--base-url", base_url, "Server URL for the http backend (env PREP_BASE_URL)");
    run->add_option("--endpoint", endpoint, "Chat endpoint path");
    run->add_flag("--no-prefill", no_prefill, "Send triggers as a final user line instead of a prefill");
    run->add_option("--workers", workers, "Concurrent questions per cell");
    run->add_option("--temperature", temperature);
    run->add_option("--max-tokens", max_tokens);
    run->add_flag("--cache", cache, "Cache responses on disk (dir from env PREP_CACHE_DIR)");
    run->add_flag("--no-cache", no_cache);
    run->add_option("--cache-dir", cache_dir);
    run->add_option("--run-id", run_id);
    run->add_option("--runs-dir", runs_dir);

    // mine
    auto* mine = app.add_subcommand("mine", "Mine shared-material questions from a part/material schema");
    std::string schema_path, out_path;
    std::size_t mine_n = 100;
    std::uint64_t mine_seed = 0;
    unsigned mine_workers = 1;
    mine->add_option("--schema", schema_path)->required()->check(CLI::ExistingFile);
    mine->add_option("--n", mine_n, "Number of questions");
    mine->add_option("--seed", mine_seed);
    mine->add_option("--out", out_path)->required();
    mine->add_option("--workers", mine_workers);

    // report
    auto* report = app.add_subcommand("report", "Re-render a run's report from cells.jsonl");
    std::string run_dir, report_format = "markdown";
    report->add_option("run_dir", run_dir)->required()->check(CLI::ExistingDirectory);
    report->add_option("--format", report_format, "markdown, csv or json-lines");

    auto* list = app.add_subcommand("list-strategies", "Print the strategy table");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*list) {
            std::cout << prep::cmd_list_strategies();
            return prep::kExitOk;
        }
        if (*report) {
            std::cout << prep::cmd_report(run_dir, report_format);
            return prep::kExitOk;
        }
        if (*mine) {
            if (mine_n % 2 == 1)
                std::cerr << "warning: odd n; key counts will differ by one\n";
            const auto r = prep::cmd_mine(schema_path, mine_n, mine_seed, out_path, mine_workers);
            std::cerr << "mined " << r.pool << " triples, wrote " << r.dataset.items.size() << " questions to "
                      << out_path << '\n';
            return prep::kExitOk;
        }

        // Precedence: flags, then the config file, then environment defaults.
        prep::RunConfig cfg;
        if (!config_path.empty()) {
            cfg = prep::load_run_config(config_path);
        } else {
            cfg.backend.base_url = env_or("PREP_BASE_URL", cfg.backend.base_url);
            cfg.cache_dir = env_or("PREP_CACHE_DIR", cfg.cache_dir);
        }
        if (!strategies.empty()) cfg.strategies = split_ids(strategies);
        if (!models.empty()) cfg.models = split_ids(models);
        if (!ds_path.empty()) {
            prep::DatasetRef d;
            d.name = ds_name;
            d.path = ds_path;
            d.format = ds_format;
            d.sample = ds_sample;
            d.seed = ds_seed;
            cfg.datasets = {d};
        } else if (!ds_name.empty() || !ds_format.empty()) {
            std::cerr << "config error: --dataset/--format need --path\n";
            return prep::kExitConfig;
        }
        if (!backend_kind.empty()) cfg.backend.kind = backend_kind;
        if (!script.empty()) cfg.backend.script = script;
        if (!base_url.empty()) cfg.backend.base_url = base_url;
        if (!endpoint.empty()) cfg.backend.endpoint = endpoint;
        if (no_prefill) cfg.backend.prefill = false;
        if (workers) cfg.workers = *workers;
        if (temperature) cfg.temperature = *temperature;
        if (max_tokens) cfg.max_tokens = *max_tokens;
        if (cache) cfg.cache = true;
        if (no_cache) cfg.cache = false;
        if (!cache_dir.empty()) cfg.cache_dir = cache_dir;
        if (!run_id.empty()) cfg.run_id = run_id;
        if (!runs_dir.empty()) cfg.runs_dir = runs_dir;

        const auto result = prep::cmd_run(cfg, nullptr, &std::cerr);
        if (result.exit_code != prep::kExitOk) {
            std::cerr << (result.exit_code == prep::kExitConfig ? "config error: " : "backend failure: ")
                      << result.message << '\n';
            if (result.exit_code == prep::kExitPartial)
                std::cerr << "partial results kept in " << result.run_dir.string() << "; rerun to resume\n";
            return result.exit_code;
        }
        std::cout << prep::render_report(result.report, "markdown");
        std::cerr << "run written to " << result.run_dir.string() << '\n';
        return prep::kExitOk;
    } catch (const prep::Error& e) {
        std::cerr << "error [" << prep::to_string(e.code()) << "]: " << e.what() << '\n';
        return prep::kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return prep::kExitConfig;
    }
}
