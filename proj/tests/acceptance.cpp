// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include "prep/run.hpp"
#include "grid_fixture.hpp"
#include "miner_oracle.hpp"
#include "support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>

using namespace prep;
namespace ts = testing_support;

namespace {

struct Check {
    bool ok = true;
    std::string detail;

    void fail(const std::string& why) {
        if (ok) detail = why;
        ok = false;
    }
};

std::vector<std::string> user_messages(const StrategyOutcome& o) {
    std::vector<std::string> out;
    for (const auto& t : o.transcripts)
        for (const auto& m : t.messages)
            if (m.role == Role::User) out.push_back(m.content);
    return out;
}

Check golden_fidelity() {
    Check c;
    const auto q = ts::magnifying_glass();
    for (const auto& s : kStrategies) {
        auto backend = ts::recorded_backend();
        const auto out = execute(s, q, q.kind, backend, {"phi3", 0.0, kDefaultMaxTokens});
        if (user_messages(out) != ts::golden_messages(std::string(s.id))) c.fail(std::string(s.id) + " differs");
    }
    return c;
}

Check extraction_oracle() {
    Check c;
    const auto binary = TaskKind::binary_choice();
    const auto yes_no = TaskKind::yes_no();
    const auto mg = ts::magnifying_glass();
    struct Case {
        const char* file;
        const TaskKind* kind;
        Verdict verdict;
        AnswerKey key;
        Score score;
    };
    const std::vector<Case> cases{
        {"mg_prep", &binary, Verdict::option('b'), mg.key, Score::Correct},
        {"mg_direct", &binary, Verdict::option('a'), mg.key, Score::Incorrect},
        {"mg_zs_cot", &binary, Verdict::option('a'), mg.key, Score::Incorrect},
        {"mg_ps", &binary, Verdict::option('a'), mg.key, Score::Incorrect},
        {"mg_ind_1msg", &binary, Verdict::option('a'), mg.key, Score::Incorrect},
        {"mg_ind_2msg", &binary, Verdict::option('b'), mg.key, Score::Correct},
        {"mg_ind_2msg_copy", &binary, Verdict::option('a'), mg.key, Score::Incorrect},
        {"cactus_zs_cot", &yes_no, Verdict::unanswered(), ts::cactus().key, Score::Unanswered},
        {"cactus_prep", &yes_no, Verdict::yes_no(true), ts::cactus().key, Score::Correct},
    };
    for (const auto& k : cases) {
        const auto v = extract(ts::response(k.file), *k.kind);
        if (!v.same_answer(k.verdict)) c.fail(std::string(k.file) + " extracted " + to_string(v));
        if (score(v, k.key) != k.score) c.fail(std::string(k.file) + " scored " + std::string(to_string(score(v, k.key))));
    }
    return c;
}

struct Row {
    const char* id;
    std::array<std::pair<double, double>, 3> cells;  // accuracy %, reported SE %
    double diff;
};

struct Table {
    const char* name;
    std::size_t n;
    std::vector<Row> rows;
};

// Published per-model accuracies, standard errors and average differences.
const std::vector<Table>& published_tables() {
    static const std::vector<Table> t{
        {"curated",
         100,
         {{"zs-cot", {{{78, 4.1}, {59, 4.9}, {59, 4.9}}}, 0.00},
          {"direct", {{{67, 4.7}, {55, 5.0}, {54, 5.0}}}, -6.67},
          {"ps", {{{72, 4.5}, {63, 4.8}, {66, 4.7}}}, 1.67},
          {"ind-1msg", {{{73, 4.4}, {68, 4.7}, {56, 5.0}}}, 0.33},
          {"ind-2msg", {{{71, 4.5}, {62, 4.9}, {46, 5.0}}}, -5.67},
          {"ind-2msg-copy", {{{70, 4.6}, {64, 4.8}, {58, 4.9}}}, -1.33},
          {"prep-ind", {{{70, 4.6}, {67, 4.7}, {66, 4.7}}}, 2.33},
          {"dep-1msg", {{{65, 4.8}, {58, 4.9}, {64, 4.8}}}, -3.00},
          {"dep-2msg", {{{60, 4.9}, {60, 4.9}, {62, 4.9}}}, -4.67},
          {"dep-2msg-copy", {{{61, 4.9}, {68, 4.7}, {60, 4.9}}}, -2.33},
          {"prep-dep", {{{62, 4.9}, {71, 4.5}, {74, 4.4}}}, 3.67}}},
        {"csqa",
         500,
         {{"zs-cot", {{{74.2, 2.0}, {72.4, 2.0}, {73.0, 2.0}}}, 0.00},
          {"direct", {{{73.2, 2.0}, {83.0, 1.7}, {74.6, 1.9}}}, 3.73},
          {"ps", {{{72.6, 2.0}, {71.4, 2.0}, {69.2, 2.1}}}, -2.13},
          {"ind-1msg", {{{71.6, 2.0}, {78.0, 1.9}, {70.6, 2.0}}}, 0.20},
          {"ind-2msg", {{{69.8, 2.1}, {81.6, 1.7}, {72.2, 2.0}}}, 1.33},
          {"ind-2msg-copy", {{{71.4, 2.0}, {82.2, 1.7}, {72.0, 2.0}}}, 2.00},
          {"prep-ind", {{{73.4, 2.0}, {82.6, 1.7}, {77.0, 1.9}}}, 4.47}}},
        {"strategyqa",
         500,
         {{"zs-cot", {{{59.2, 2.2}, {78.6, 1.8}, {78.4, 1.8}}}, 0.00},
          {"direct", {{{63.0, 2.2}, {76.4, 1.9}, {78.8, 1.8}}}, 0.67},
          {"ps", {{{67.0, 2.1}, {77.2, 1.9}, {80.2, 1.8}}}, 2.73},
          {"ind-1msg", {{{64.8, 2.1}, {80.4, 1.8}, {79.0, 1.8}}}, 2.67},
          {"ind-2msg", {{{66.4, 2.1}, {79.4, 1.8}, {77.8, 1.9}}}, 2.47},
          {"ind-2msg-copy", {{{65.0, 2.1}, {80.0, 1.8}, {78.4, 1.8}}}, 2.40},
          {"prep-ind", {{{70.8, 2.0}, {77.8, 1.9}, {80.4, 1.8}}}, 4.27}}},
        {"obqa",
         500,
         {{"zs-cot", {{{89.2, 1.4}, {79.4, 1.8}, {85.0, 1.6}}}, 0.00},
          {"direct", {{{90.4, 1.3}, {87.4, 1.5}, {82.2, 1.7}}}, 2.13},
          {"ps", {{{92.2, 1.2}, {80.2, 1.8}, {82.0, 1.7}}}, 0.27},
          {"ind-1msg", {{{90.0, 1.3}, {86.8, 1.5}, {81.2, 1.7}}}, 1.47},
          {"ind-2msg", {{{81.6, 1.7}, {85.0, 1.6}, {82.6, 1.7}}}, -1.47},
          {"ind-2msg-copy", {{{87.2, 1.5}, {85.6, 1.6}, {83.0, 1.7}}}, 0.73},
          {"prep-ind", {{{88.2, 1.4}, {90.2, 1.3}, {86.6, 1.5}}}, 3.80}}},
    };
    return t;
}

Check statistics() {
    Check c;
    std::size_t cells = 0, diffs = 0;
    for (const auto& table : published_tables()) {
        std::vector<double> base;
        for (const auto& row : table.rows) {
            std::vector<double> acc;
            for (const auto& [pct, se] : row.cells) {
                const auto correct = static_cast<std::size_t>(std::llround(pct * static_cast<double>(table.n) / 100));
                const auto st = accuracy_stats(correct, table.n);
                ++cells;
                if (std::abs(st.se * 100 - se) > 0.05)
                    c.fail(std::string(table.name) + " " + row.id + " SE " + std::to_string(st.se * 100));
                acc.push_back(st.accuracy);
            }
            if (std::string_view(row.id) == kBaselineStrategy) base = acc;
            const double d = avg_diff(acc, base) * 100;
            ++diffs;
            if (std::abs(d - row.diff) > 0.01)
                c.fail(std::string(table.name) + " " + row.id + " Avg. Diff " + std::to_string(d));
        }
    }
    if (c.ok) c.detail = std::to_string(cells) + " cells, " + std::to_string(diffs) + " differences";
    return c;
}

Check miner_equivalence() {
    Check c;
    std::mt19937_64 rng(20240601);
    std::size_t schemas = 0, questions = 0;
    for (; schemas < 150; ++schemas) {
        const auto s = ts::random_schema(rng, 30);
        const auto mined = mine_triples(s);
        if (mined != ts::brute_force_triples(s)) {
            c.fail("schema " + std::to_string(schemas) + " differs from the oracle");
            continue;
        }
        if (mined.size() < 2) continue;
        const std::size_t n = std::min<std::size_t>(mined.size() & ~std::size_t{1}, 40);
        const auto d = emit_question_set(mined, n, schemas, &s);
        std::size_t a = 0, b = 0;
        for (const auto& q : d.items) {
            ++questions;
            if (!ts::oracle_sound(s, q)) c.fail("unsound question " + q.id + " in schema " + std::to_string(schemas));
            (std::get<char>(q.key) == 'a' ? a : b)++;
        }
        if (a != b || a + b != n) c.fail("unbalanced set in schema " + std::to_string(schemas));
    }
    if (c.ok) c.detail = std::to_string(schemas) + " schemas, " + std::to_string(questions) + " questions";
    return c;
}

Check determinism() {
    Check c;
    ts::TempDir dir;
    auto f = ts::make_grid(dir.path(), 100);
    f.config.run_id = "first";
    const auto r1 = cmd_run(f.config);
    f.config.run_id = "second";
    const auto r2 = cmd_run(f.config);
    if (r1.exit_code != kExitOk || r2.exit_code != kExitOk) {
        c.fail("run failed: " + r1.message + r2.message);
        return c;
    }
    if (r1.report.cells.size() != 11 * f.config.models.size()) c.fail("grid is incomplete");
    for (const char* file : {"cells.jsonl", "report.md"})
        if (ts::slurp(r1.run_dir / file) != ts::slurp(r2.run_dir / file)) c.fail(std::string(file) + " differs");
    return c;
}

Check resume_equivalence() {
    Check c;
    ts::TempDir dir;
    auto f = ts::make_grid(dir.path(), 100);
    f.config.run_id = "whole";
    auto whole_backend = make_backend(f.config);
    CallbackBackend counting([&](const ChatRequest& r) { return whole_backend.get().chat(r); });
    const auto whole = cmd_run(f.config, &counting);
    if (whole.exit_code != kExitOk) {
        c.fail("uninterrupted run failed: " + whole.message);
        return c;
    }
    const std::size_t half = counting.calls() / 2;

    f.config.run_id = "resumed";
    auto inner = make_backend(f.config);
    std::atomic<std::size_t> sent{0};
    CallbackBackend killed([&](const ChatRequest& r) -> std::string {
        if (sent++ >= half) throw Error(Errc::Transport, "killed");
        return inner.get().chat(r);
    });
    const auto cut = cmd_run(f.config, &killed);
    if (cut.exit_code != kExitPartial) c.fail("interrupted run exited with " + std::to_string(cut.exit_code));
    // A kill can also leave half a record behind.
    {
        std::ofstream torn(cut.run_dir / "transcripts.jsonl", std::ios::app | std::ios::binary);
        torn << "{\"question_id\":\"q-0";
    }
    const auto resumed = cmd_run(f.config);
    if (resumed.exit_code != kExitOk) c.fail("resumed run failed: " + resumed.message);
    for (const char* file : {"cells.jsonl", "report.md"})
        if (ts::slurp(whole.run_dir / file) != ts::slurp(resumed.run_dir / file)) c.fail(std::string(file) + " differs");
    if (c.ok) c.detail = "cut after " + std::to_string(half) + " of " + std::to_string(counting.calls()) + " calls";
    return c;
}

struct Criterion {
    const char* name;
    double limit_s;  // 0: no time limit
    std::function<Check()> run;
};

} // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"golden-transcript-fidelity", 1, golden_fidelity},
        {"extraction-oracle", 0, extraction_oracle},
        {"statistics-reproduction", 1, statistics},
        {"miner-equivalence", 30, miner_equivalence},
        {"determinism", 60, determinism},
        {"resume-equivalence", 0, resume_equivalence},
    };
    int failed = 0;
    for (const auto& cr : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Check c;
        try {
            c = cr.run();
        } catch (const std::exception& e) {
            c.fail(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (cr.limit_s > 0 && secs > cr.limit_s) c.fail("took longer than the time limit");
        char timing[64];
        std::snprintf(timing, sizeof timing, "%.3fs", secs);
        std::cout << (c.ok ? "PASS " : "FAIL ") << cr.name << " (" << timing << ")"
                  << (c.detail.empty() ? "" : ": " + c.detail) << '\n';
        failed += !c.ok;
    }
    return failed == 0 ? 0 : 1;
}
