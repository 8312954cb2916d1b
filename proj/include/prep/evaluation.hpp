#pragma once

#include "prep/backend.hpp"
#include "prep/datasets.hpp"
#include "prep/error.hpp"
#include "prep/extraction.hpp"
#include "prep/strategy.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace prep {

struct AccuracyStats {
    double accuracy;
    double se;
};

/// Accuracy and its binomial standard error sqrt(p(1-p)/n), as fractions.
inline AccuracyStats accuracy_stats(std::size_t correct, std::size_t n) {
    if (n == 0) throw Error(Errc::ZeroN, "accuracy over zero questions");
    if (correct > n) throw Error(Errc::ConfigError, "more correct answers than questions");
    const double p = static_cast<double>(correct) / static_cast<double>(n);
    return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(n))};
}

/// mean(method) - mean(baseline) over the same models in the same order.
inline double avg_diff(const std::vector<double>& method, const std::vector<double>& baseline) {
    if (method.empty() || method.size() != baseline.size())
        throw Error(Errc::ModelSetMismatch, "method and baseline cover different model sets");
    const auto mean = [](const std::vector<double>& v) {
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    return mean(method) - mean(baseline);
}

struct CellResult {
    std::string strategy_id;
    std::string model;
    std::string dataset;
    std::size_t n = 0;
    std::size_t correct = 0;
    std::size_t unanswered = 0;
    double accuracy = 0;
    double se = 0;

    friend bool operator==(const CellResult&, const CellResult&) = default;
};

inline CellResult make_cell(std::string strategy, std::string model, std::string dataset, std::size_t n,
                            std::size_t correct, std::size_t unanswered) {
    const auto st = accuracy_stats(correct, n);
    return {std::move(strategy), std::move(model), std::move(dataset), n, correct, unanswered, st.accuracy, st.se};
}

inline nlohmann::ordered_json to_json(const CellResult& c) {
    nlohmann::ordered_json j;
    j["strategy_id"] = c.strategy_id;
    j["model"] = c.model;
    j["dataset"] = c.dataset;
    j["n"] = c.n;
    j["correct"] = c.correct;
    j["unanswered"] = c.unanswered;
    j["accuracy"] = c.accuracy;
    j["se"] = c.se;
    return j;
}

inline CellResult cell_from_json(const nlohmann::json& j) {
    return {j.at("strategy_id").get<std::string>(), j.at("model").get<std::string>(),
            j.at("dataset").get<std::string>(),     j.at("n").get<std::size_t>(),
            j.at("correct").get<std::size_t>(),     j.at("unanswered").get<std::size_t>(),
            j.at("accuracy").get<double>(),         j.at("se").get<double>()};
}

/// Line-delimited transcript log of a run directory. Records already on disk
/// mark their questions as done; a torn final line from an interrupted write
/// is cut off when the store is opened.
class RunStore {
public:
    explicit RunStore(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw Error(Errc::IO, "cannot create run dir " + dir_.string());
        load();
    }

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path transcripts_path() const { return dir_ / "transcripts.jsonl"; }

    static std::string key(std::string_view dataset, std::string_view strategy, std::string_view model,
                           std::string_view question_id) {
        std::string k;
        for (auto part : {dataset, strategy, model, question_id}) {
            k += part;
            k += '\x1f';
        }
        return k;
    }

    std::optional<std::string> completed(const std::string& k) const {
        std::lock_guard lock(mu_);
        auto it = done_.find(k);
        if (it == done_.end()) return std::nullopt;
        return it->second;
    }

    void append(const std::string& k, const nlohmann::ordered_json& record) {
        std::lock_guard lock(mu_);
        std::ofstream out(transcripts_path(), std::ios::app | std::ios::binary);
        if (!out) throw Error(Errc::IO, "cannot append to " + transcripts_path().string());
        out << record.dump() << '\n';
        out.flush();
        if (!out) throw Error(Errc::IO, "write failed for " + transcripts_path().string());
        done_[k] = record.at("final_text").get<std::string>();
    }

    std::size_t persisted() const {
        std::lock_guard lock(mu_);
        return done_.size();
    }

private:
    void load() {
        const auto path = transcripts_path();
        if (!std::filesystem::exists(path)) return;
        std::string text = detail::read_file(path);
        if (!text.empty() && text.back() != '\n') {
            const auto cut = text.rfind('\n');
            text.resize(cut == std::string::npos ? 0 : cut + 1);
            std::filesystem::resize_file(path, text.size());
        }
        std::size_t pos = 0, lineno = 0;
        while (pos < text.size()) {
            const std::size_t eol = text.find('\n', pos);
            std::string_view line(text.data() + pos, eol - pos);
            pos = eol + 1;
            ++lineno;
            if (line.empty()) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                done_[key(j.at("dataset").get<std::string>(), j.at("strategy_id").get<std::string>(),
                          j.at("model").get<std::string>(), j.at("question_id").get<std::string>())] =
                    j.at("final_text").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                throw Error(Errc::ParseError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
    }

    std::filesystem::path dir_;
    mutable std::mutex mu_;
    std::map<std::string, std::string> done_;
};

struct EvalOptions {
    ChatSettings settings;
    unsigned workers = 1;
    RunStore* store = nullptr;
};

inline nlohmann::ordered_json question_record(const Question& q, const StrategySpec& spec, const std::string& model,
                                              const std::string& dataset, const StrategyOutcome& outcome) {
    nlohmann::ordered_json j;
    j["question_id"] = q.id;
    j["strategy_id"] = std::string(spec.id);
    j["model"] = model;
    j["dataset"] = dataset;
    auto steps = nlohmann::ordered_json::array();
    for (const auto& t : outcome.transcripts) steps.push_back(nlohmann::ordered_json(to_json(t)));
    j["transcripts"] = std::move(steps);
    j["final_text"] = outcome.final_text;
    j["timing"] = {{"elapsed_ms", outcome.elapsed_ms}};
    return j;
}

/// Runs one strategy over a dataset for one model and scores it. Questions
/// already recorded in the store are scored from their stored final text and
/// not sent again. On a backend failure the finished questions stay
/// persisted and the failure is rethrown tagged with the question id.
inline CellResult evaluate(const StrategySpec& spec, const Dataset& dataset, Backend& backend,
                           const EvalOptions& opts) {
    if (dataset.items.empty()) throw Error(Errc::ZeroN, "dataset " + dataset.name + " is empty");
    for (const auto& q : dataset.items)
        if (!strategy_applies(spec, q))
            throw Error(Errc::IllegalStrategy, std::string(spec.id) + " needs object names, dataset " +
                                                   dataset.name + " has none");

    const std::size_t n = dataset.items.size();
    std::vector<std::optional<std::string>> finals(n);
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < n; ++i) {
        if (opts.store)
            finals[i] = opts.store->completed(
                RunStore::key(dataset.name, spec.id, opts.settings.model, dataset.items[i].id));
        if (!finals[i]) pending.push_back(i);
    }

    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex err_mu;
    std::optional<std::pair<std::size_t, BackendFailure>> failure;
    std::optional<Error> other;

    auto work = [&] {
        for (;;) {
            if (stop.load()) return;
            const std::size_t slot = next++;
            if (slot >= pending.size()) return;
            const std::size_t i = pending[slot];
            const Question& q = dataset.items[i];
            try {
                auto outcome = execute(spec, q, dataset.kind, backend, opts.settings);
                if (opts.store)
                    opts.store->append(RunStore::key(dataset.name, spec.id, opts.settings.model, q.id),
                                       question_record(q, spec, opts.settings.model, dataset.name, outcome));
                finals[i] = std::move(outcome.final_text);
            } catch (const BackendFailure& e) {
                std::lock_guard lock(err_mu);
                if (!failure || i < failure->first) failure.emplace(i, e);
                stop = true;
            } catch (const Error& e) {
                std::lock_guard lock(err_mu);
                if (!other) other.emplace(e);
                stop = true;
            }
        }
    };

    const unsigned k = std::max(1u, std::min<unsigned>(opts.workers, static_cast<unsigned>(pending.size())));
    if (k == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < k; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (other) throw *other;
    if (failure) {
        BackendFailure e = failure->second;
        e.question_id = dataset.items[failure->first].id;
        throw e;
    }

    std::size_t correct = 0, unanswered = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Score s = score(extract(*finals[i], dataset.kind), dataset.items[i].key);
        correct += s == Score::Correct;
        unanswered += s == Score::Unanswered;
    }
    return make_cell(std::string(spec.id), opts.settings.model, dataset.name, n, correct, unanswered);
}

/// Cells of a grid plus the aggregates the report tables show.
struct EvalReport {
    std::vector<CellResult> cells;

    std::vector<std::string> datasets() const {
        std::vector<std::string> out;
        for (const auto& c : cells)
            if (std::find(out.begin(), out.end(), c.dataset) == out.end()) out.push_back(c.dataset);
        return out;
    }

    std::vector<std::string> models(const std::string& dataset) const {
        std::vector<std::string> out;
        for (const auto& c : cells)
            if (c.dataset == dataset && std::find(out.begin(), out.end(), c.model) == out.end())
                out.push_back(c.model);
        return out;
    }

    /// Strategies present for a dataset, in table order.
    std::vector<const StrategySpec*> strategies(const std::string& dataset) const {
        std::vector<const StrategySpec*> out;
        for (const auto& s : kStrategies)
            if (find(dataset, s.id, std::nullopt)) out.push_back(&s);
        return out;
    }

    const CellResult* find(const std::string& dataset, std::string_view strategy,
                           std::optional<std::string_view> model) const {
        for (const auto& c : cells)
            if (c.dataset == dataset && c.strategy_id == strategy && (!model || c.model == *model)) return &c;
        return nullptr;
    }

    /// Per-model accuracies in `models(dataset)` order; empty if any is missing.
    std::vector<double> accuracies(const std::string& dataset, std::string_view strategy) const {
        std::vector<double> out;
        for (const auto& m : models(dataset)) {
            const auto* c = find(dataset, strategy, m);
            if (!c) return {};
            out.push_back(c->accuracy);
        }
        return out;
    }

    std::optional<double> avg_accuracy(const std::string& dataset, std::string_view strategy) const {
        const auto acc = accuracies(dataset, strategy);
        if (acc.empty()) return std::nullopt;
        return std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
    }

    std::optional<double> avg_diff_vs_baseline(const std::string& dataset, std::string_view strategy) const {
        const auto method = accuracies(dataset, strategy);
        const auto base = accuracies(dataset, kBaselineStrategy);
        if (method.empty() || base.empty()) return std::nullopt;
        return avg_diff(method, base);
    }
};

namespace detail {

inline std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string s = buf;
    if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
    return s;
}

inline std::string signed_fixed(double v, int decimals) {
    std::string s = fixed(v, decimals);
    if (s.front() != '-' && s.find_first_not_of("0.") != std::string::npos) s.insert(0, "+");
    return s;
}

inline std::string pct_cell(const CellResult& c) {
    return fixed(c.accuracy * 100, 1) + "±" + fixed(c.se * 100, 1) + "%";
}

inline std::string copy_column(const StrategySpec& s) {
    if (s.messages == 1) return "-";
    return s.copy ? "yes" : "no";
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

} // namespace detail

/// Renders the report as "markdown", "csv" or "json-lines". Percentages are
/// rounded here and nowhere else.
inline std::string render_report(const EvalReport& report, std::string_view format) {
    if (format != "markdown" && format != "csv" && format != "json-lines")
        throw Error(Errc::UnknownFormat, "report format " + std::string(format));
    if (report.cells.empty()) throw Error(Errc::EmptyReport, "no cells to report");

    std::ostringstream out;
    if (format == "markdown") {
        bool first = true;
        for (const auto& ds : report.datasets()) {
            const auto models = report.models(ds);
            if (!first) out << '\n';
            first = false;
            out << "## " << ds << "\n\n| Method | # Inst. | # Messages | Copy |";
            for (const auto& m : models) out << ' ' << m << " |";
            out << " Avg. Acc. | Avg. Diff |\n|---|---|---|---|";
            for (std::size_t i = 0; i < models.size(); ++i) out << "---|";
            out << "---|---|\n";
            for (const auto* s : report.strategies(ds)) {
                out << "| " << s->label << " (" << s->id << ") | " << (s->instances == 2 ? "dual" : "single") << " | "
                    << s->messages << " | " << detail::copy_column(*s) << " |";
                for (const auto& m : models) {
                    const auto* c = report.find(ds, s->id, m);
                    out << ' ' << (c ? detail::pct_cell(*c) : "n/a") << " |";
                }
                const auto avg = report.avg_accuracy(ds, s->id);
                const auto diff = report.avg_diff_vs_baseline(ds, s->id);
                out << ' ' << (avg ? detail::fixed(*avg * 100, 2) : "n/a") << " | "
                    << (diff ? detail::signed_fixed(*diff * 100, 2) : "n/a") << " |\n";
            }
        }
    } else if (format == "csv") {
        out << "dataset,strategy_id,method,instances,messages,copy,model,n,correct,unanswered,accuracy_pct,se_pct,"
               "avg_acc_pct,avg_diff_pct\n";
        for (const auto& ds : report.datasets()) {
            for (const auto* s : report.strategies(ds)) {
                const auto avg = report.avg_accuracy(ds, s->id);
                const auto diff = report.avg_diff_vs_baseline(ds, s->id);
                for (const auto& m : report.models(ds)) {
                    const auto* c = report.find(ds, s->id, m);
                    if (!c) continue;
                    out << detail::csv_escape(ds) << ',' << s->id << ',' << detail::csv_escape(std::string(s->label))
                        << ',' << (s->instances == 2 ? "dual" : "single") << ',' << s->messages << ','
                        << detail::copy_column(*s) << ',' << detail::csv_escape(m) << ',' << c->n << ','
                        << c->correct << ',' << c->unanswered << ',' << detail::fixed(c->accuracy * 100, 1) << ','
                        << detail::fixed(c->se * 100, 1) << ',' << (avg ? detail::fixed(*avg * 100, 2) : "") << ','
                        << (diff ? detail::signed_fixed(*diff * 100, 2) : "") << '\n';
                }
            }
        }
    } else {
        for (const auto& ds : report.datasets()) {
            for (const auto* s : report.strategies(ds)) {
                nlohmann::ordered_json j;
                j["dataset"] = ds;
                j["strategy_id"] = std::string(s->id);
                auto cells = nlohmann::ordered_json::array();
                for (const auto& m : report.models(ds))
                    if (const auto* c = report.find(ds, s->id, m)) cells.push_back(to_json(*c));
                j["cells"] = std::move(cells);
                const auto avg = report.avg_accuracy(ds, s->id);
                const auto diff = report.avg_diff_vs_baseline(ds, s->id);
                j["avg_accuracy"] = avg ? nlohmann::ordered_json(*avg) : nlohmann::ordered_json();
                j["avg_diff"] = diff ? nlohmann::ordered_json(*diff) : nlohmann::ordered_json();
                out << j.dump() << '\n';
            }
        }
    }
    return out.str();
}

inline std::string cells_jsonl(const std::vector<CellResult>& cells) {
    std::string out;
    for (const auto& c : cells) out += to_json(c).dump() + "\n";
    return out;
}

inline std::vector<CellResult> parse_cells_jsonl(std::string_view text, const std::string& source = "cells.jsonl") {
    std::vector<CellResult> out;
    for (const auto& rec : detail::parse_json_lines(text, source)) {
        try {
            out.push_back(cell_from_json(rec.value));
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::ParseError, source + ":" + std::to_string(rec.lineno) + ": " + e.what());
        }
    }
    return out;
}

} // namespace prep
