#include "prep/evaluation.hpp"
#include "grid_fixture.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <regex>

using namespace prep;
using testing_support::synthetic_curated;
using testing_support::TempDir;

namespace {

// Answers question i correctly when `correct(i)` holds, evasively when
// `evasive(i)` holds, wrongly otherwise.
CallbackBackend graded_backend(const Dataset& d, std::function<bool(std::size_t)> correct,
                               std::function<bool(std::size_t)> evasive = [](std::size_t) { return false; }) {
    return CallbackBackend([&d, correct, evasive](const ChatRequest& r) -> std::string {
        const auto& last = r.messages.back().content;
        for (std::size_t i = 0; i < d.items.size(); ++i) {
            if (last.find(d.items[i].objects->b + "?") == std::string::npos) continue;
            if (evasive(i)) return "I refuse to pick.";
            const char key = std::get<char>(d.items[i].key);
            return "my answer is " + std::string(1, correct(i) ? key : (key == 'a' ? 'b' : 'a')) + ")";
        }
        return "1. some fact";
    });
}

EvalOptions opts(std::string model = "phi3", RunStore* store = nullptr, unsigned workers = 1) {
    EvalOptions o;
    o.settings.model = std::move(model);
    o.store = store;
    o.workers = workers;
    return o;
}

} // namespace

TEST(Stats, PaperCells) {
    const auto a = accuracy_stats(78, 100);
    EXPECT_DOUBLE_EQ(a.accuracy, 0.78);
    EXPECT_NEAR(a.se * 100, 4.1, 0.05);
    const auto b = accuracy_stats(371, 500);
    EXPECT_NEAR(b.accuracy * 100, 74.2, 1e-9);
    EXPECT_NEAR(b.se * 100, 2.0, 0.05);
    const auto z = accuracy_stats(0, 100);
    EXPECT_EQ(z.accuracy, 0.0);
    EXPECT_EQ(z.se, 0.0);
    EXPECT_THROW(accuracy_stats(0, 0), Error);
}

TEST(Stats, MonotoneAndBounded) {
    for (std::size_t n = 1; n <= 60; ++n)
        for (std::size_t c = 0; c <= n; ++c) {
            const auto s = accuracy_stats(c, n);
            EXPECT_GE(s.se, 0.0);
            EXPECT_LE(s.se, 0.5);
            if (c < n) {
                EXPECT_LE(s.accuracy, accuracy_stats(c + 1, n).accuracy);
            }
        }
}

TEST(Stats, AvgDiff) {
    EXPECT_NEAR(avg_diff({.72, .63, .66}, {.78, .59, .59}) * 100, 1.67, 0.01);
    EXPECT_NEAR(avg_diff({.62, .71, .74}, {.78, .59, .59}) * 100, 3.67, 0.01);
    EXPECT_EQ(avg_diff({.5, .6}, {.5, .6}), 0.0);
    try {
        avg_diff({.5}, {.5, .6});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::ModelSetMismatch);
    }
}

TEST(Evaluate, SeventyEightOfHundred) {
    const auto d = synthetic_curated(100);
    auto backend = graded_backend(d, [](std::size_t i) { return i < 78; });
    const auto cell = evaluate(find_strategy("direct"), d, backend, opts());
    EXPECT_EQ(cell.n, 100u);
    EXPECT_EQ(cell.correct, 78u);
    EXPECT_EQ(cell.unanswered, 0u);
    EXPECT_EQ(detail::pct_cell(cell), "78.0±4.1%");
}

TEST(Evaluate, SingleAndRefusing) {
    const auto one = synthetic_curated(1);
    auto good = graded_backend(one, [](std::size_t) { return true; });
    const auto c1 = evaluate(find_strategy("prep-dep"), one, good, opts());
    EXPECT_EQ(c1.accuracy, 1.0);
    EXPECT_EQ(c1.unanswered, 0u);

    const auto d = synthetic_curated(10);
    CallbackBackend refuse([](const ChatRequest&) { return std::string("I refuse"); });
    const auto c2 = evaluate(find_strategy("zs-cot"), d, refuse, opts());
    EXPECT_EQ(c2.unanswered, 10u);
    EXPECT_EQ(c2.correct, 0u);
    EXPECT_EQ(c2.accuracy, 0.0);
}

TEST(Evaluate, WorkersDoNotChangeResults) {
    const auto d = synthetic_curated(40);
    auto backend = graded_backend(d, [](std::size_t i) { return i % 3 != 0; }, [](std::size_t i) { return i % 7 == 0; });
    const auto serial = evaluate(find_strategy("prep-ind"), d, backend, opts("m", nullptr, 1));
    const auto parallel = evaluate(find_strategy("prep-ind"), d, backend, opts("m", nullptr, 4));
    EXPECT_EQ(serial, parallel);
}

TEST(Evaluate, DependentRejectedWithoutObjects) {
    auto d = synthetic_curated(2);
    for (auto& q : d.items) q.objects.reset();
    CallbackBackend b([](const ChatRequest&) { return std::string("x"); });
    try {
        evaluate(find_strategy("dep-1msg"), d, b, opts());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::IllegalStrategy);
    }
    EXPECT_EQ(b.calls(), 0u);
}

TEST(Evaluate, FailureKeepsFinishedQuestionsAndResumes) {
    TempDir dir;
    const auto d = synthetic_curated(20);
    auto good = graded_backend(d, [](std::size_t i) { return i % 2 == 0; });
    const auto reference = evaluate(find_strategy("ind-2msg"), d, good, opts());

    std::atomic<int> budget{21};
    CallbackBackend flaky([&](const ChatRequest& r) -> std::string {
        if (budget-- <= 0) throw Error(Errc::Transport, "connection reset");
        return good.chat(r);
    });
    {
        RunStore store(dir.path());
        try {
            evaluate(find_strategy("ind-2msg"), d, flaky, opts("phi3", &store));
            FAIL();
        } catch (const BackendFailure& e) {
            EXPECT_EQ(e.question_id, "q-010");
            EXPECT_EQ(e.code(), Errc::Transport);
        }
        EXPECT_EQ(store.persisted(), 10u);
    }
    RunStore reopened(dir.path());
    EXPECT_EQ(reopened.persisted(), 10u);
    const auto before = good.calls();
    const auto resumed = evaluate(find_strategy("ind-2msg"), d, good, opts("phi3", &reopened));
    EXPECT_EQ(resumed, reference);
    EXPECT_EQ(good.calls() - before, 20u);  // only the 10 missing questions, two calls each
}

TEST(Evaluate, TornTranscriptLineIsDropped) {
    TempDir dir;
    const auto d = synthetic_curated(6);
    auto good = graded_backend(d, [](std::size_t i) { return i != 2; });
    RunStore store(dir.path());
    const auto reference = evaluate(find_strategy("direct"), d, good, opts("phi3", &store));

    auto text = testing_support::slurp(store.transcripts_path());
    std::size_t cut = 0;
    for (int lines = 0; lines < 3; ++lines) cut = text.find('\n', cut) + 1;
    testing_support::spit(store.transcripts_path(), text.substr(0, cut + 25));

    RunStore reopened(dir.path());
    EXPECT_EQ(reopened.persisted(), 3u);
    EXPECT_EQ(testing_support::slurp(reopened.transcripts_path()), text.substr(0, cut));
    EXPECT_EQ(evaluate(find_strategy("direct"), d, good, opts("phi3", &reopened)), reference);
}

TEST(Evaluate, TranscriptRecordShape) {
    TempDir dir;
    const auto d = synthetic_curated(1);
    auto good = graded_backend(d, [](std::size_t) { return true; });
    RunStore store(dir.path());
    evaluate(find_strategy("prep-ind"), d, good, opts("phi3", &store));
    const auto j = nlohmann::json::parse(testing_support::slurp(store.transcripts_path()));
    EXPECT_EQ(j.at("question_id"), "q-000");
    EXPECT_EQ(j.at("strategy_id"), "prep-ind");
    EXPECT_EQ(j.at("transcripts").size(), 2u);
    EXPECT_EQ(j.at("final_text"), "my answer is a)");
    EXPECT_TRUE(j.at("timing").contains("elapsed_ms"));
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted && c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
            out.back() += '"';
            ++i;
        } else if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            out.emplace_back();
        } else {
            out.back() += c;
        }
    }
    return out;
}

EvalReport sample_report() {
    EvalReport r;
    const std::vector<std::string> models{"Phi-3", "Aya", "Command-R"};
    const std::vector<std::pair<std::string, std::vector<std::size_t>>> rows{
        {"zs-cot", {78, 59, 59}}, {"direct", {67, 55, 54}}, {"ps", {72, 63, 66}}, {"prep-dep", {62, 71, 74}}};
    for (const auto& [id, counts] : rows)
        for (std::size_t m = 0; m < models.size(); ++m)
            r.cells.push_back(make_cell(id, models[m], "curated", 100, counts[m], 1));
    return r;
}

} // namespace

TEST(Report, MarkdownLayout) {
    const auto md = render_report(sample_report(), "markdown");
    EXPECT_NE(md.find("## curated"), std::string::npos);
    EXPECT_NE(md.find("| Method | # Inst. | # Messages | Copy | Phi-3 | Aya | Command-R | Avg. Acc. | Avg. Diff |"),
              std::string::npos);
    EXPECT_NE(md.find("| ZS CoT (zs-cot) | single | 1 | - | 78.0±4.1% | 59.0±4.9% | 59.0±4.9% | 65.33 | 0.00 |"),
              std::string::npos);
    EXPECT_NE(md.find("| 58.67 | -6.67 |"), std::string::npos);
    EXPECT_NE(md.find("| 67.00 | +1.67 |"), std::string::npos);
    EXPECT_NE(md.find("| dual | 2 | yes | 62.0±4.9% | 71.0±4.5% | 74.0±4.4% | 69.00 | +3.67 |"), std::string::npos);
}

TEST(Report, CsvAndMarkdownAgree) {
    const auto report = sample_report();
    const auto md = render_report(report, "markdown");
    const auto csv = render_report(report, "csv");
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    std::size_t rows = 0;
    while (std::getline(lines, line)) {
        const auto f = split_csv(line);
        ASSERT_EQ(f.size(), 14u) << line;
        EXPECT_NE(md.find(f[10] + "±" + f[11] + "%"), std::string::npos) << line;
        EXPECT_NE(md.find("| " + f[12] + " | " + f[13] + " |"), std::string::npos) << line;
        ++rows;
    }
    EXPECT_EQ(rows, report.cells.size());
}

TEST(Report, JsonLinesAndErrors) {
    const auto jl = render_report(sample_report(), "json-lines");
    std::istringstream lines(jl);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j.at("cells").size(), 3u);
        if (j.at("strategy_id") == "zs-cot") {
            EXPECT_EQ(j.at("avg_diff").get<double>(), 0.0);
        }
        ++n;
    }
    EXPECT_EQ(n, 4u);
    try {
        render_report(EvalReport{}, "markdown");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::EmptyReport);
    }
    EXPECT_THROW(render_report(sample_report(), "html"), Error);
}

TEST(Report, AggregationMatchesRawScores) {
    TempDir dir;
    const auto d = synthetic_curated(30);
    std::vector<std::function<bool(std::size_t)>> graders{[](std::size_t i) { return i % 2 == 0; },
                                                          [](std::size_t i) { return i % 3 == 0; }};
    EvalReport report;
    std::vector<double> raw_base, raw_ps;
    for (std::size_t m = 0; m < graders.size(); ++m) {
        auto b = graded_backend(d, graders[m]);
        const std::string model = "m" + std::to_string(m);
        report.cells.push_back(evaluate(find_strategy("zs-cot"), d, b, opts(model)));
        report.cells.push_back(evaluate(find_strategy("ps"), d, b, opts(model)));
        std::size_t hits = 0;
        for (std::size_t i = 0; i < d.size(); ++i) hits += graders[m](i);
        raw_base.push_back(static_cast<double>(hits) / 30.0);
        raw_ps.push_back(static_cast<double>(hits) / 30.0);
    }
    EXPECT_NEAR(*report.avg_diff_vs_baseline("curated", "ps"), avg_diff(raw_ps, raw_base), 1e-12);
    EXPECT_EQ(*report.avg_diff_vs_baseline("curated", "zs-cot"), 0.0);
}

TEST(Report, CellsRoundTrip) {
    const auto r = sample_report();
    EXPECT_EQ(parse_cells_jsonl(cells_jsonl(r.cells)), r.cells);
}
