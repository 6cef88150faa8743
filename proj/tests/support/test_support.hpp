#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "forge/util.hpp"

namespace forge::test {

/// Self-deleting scratch directory.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        auto base = std::filesystem::temp_directory_path();
        path_ = base / ("forge_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path);
    for (const auto& line : lines) {
        out << line << '\n';
    }
}

inline std::string pad2(int n) {
    return (n < 10 ? "0" : "") + std::to_string(n);
}

struct PipelineFixtureSpec {
    int n_queries = 30;
    std::vector<int> all_positive;        // degenerate: every CoT reflects to the gold answer
    std::vector<int> all_negative;        // degenerate: no CoT reflects to the gold answer
    std::vector<int> closed_book_correct; // scripted closed-book hits
    std::vector<int> docs_have_answer;    // doc 1 of these queries carries the gold token
    std::string dataset = "default";
};

/// Scripted end-to-end fixture. Every query retrieves its own ten documents
/// via a query-unique token; all ten tie on score, so ranks follow doc_id.
/// For a plain query, docs 1..5 yield reflections containing the gold
/// answer and docs 6..10 do not.
struct PipelineFixture {
    std::filesystem::path corpus_path;
    std::filesystem::path queries_path;
    std::filesystem::path mock_script_path;
    int n_queries = 0;

    static std::string query_id(int i) { return "q" + pad2(i); }
    static std::string question(int i) { return "tell me about topic" + std::to_string(i); }
    static std::string gold(int i) { return "answer" + std::to_string(i); }
    static std::string doc_id(int i, int j) { return "q" + pad2(i) + "_d" + pad2(j); }
    // Token count is constant whether or not the gold token is present, so
    // every document of a query scores identically and ranks by doc_id.
    static std::string doc_text(int i, int j, bool with_answer) {
        return "topic" + std::to_string(i) + " passage body p" + pad2(j) + " " +
               (with_answer ? gold(i) : "filler") + " .";
    }
};

inline PipelineFixture make_pipeline_fixture(const std::filesystem::path& dir,
                                             const PipelineFixtureSpec& spec) {
    using nlohmann::json;
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    auto contains = [](const std::vector<int>& v, int x) {
        for (int e : v) {
            if (e == x) return true;
        }
        return false;
    };

    PipelineFixture fixture;
    fixture.n_queries = spec.n_queries;
    fixture.corpus_path = dir / "corpus.jsonl";
    fixture.queries_path = dir / "queries.jsonl";
    fixture.mock_script_path = dir / "mock_script.json";

    std::vector<std::string> corpus_lines;
    std::vector<std::string> query_lines;
    json rules = json::array();

    for (int i = 1; i <= spec.n_queries; ++i) {
        query_lines.push_back(json{{"query_id", PipelineFixture::query_id(i)},
                                   {"question", PipelineFixture::question(i)},
                                   {"answers", {PipelineFixture::gold(i)}},
                                   {"task", "open_qa"},
                                   {"dataset", spec.dataset}}
                                  .dump());
        for (int j = 1; j <= 10; ++j) {
            const bool with_answer = j == 1 && contains(spec.docs_have_answer, i);
            const std::string text = PipelineFixture::doc_text(i, j, with_answer);
            corpus_lines.push_back(json{{"doc_id", PipelineFixture::doc_id(i, j)},
                                        {"title", nullptr},
                                        {"text", text}}
                                       .dump());

            const std::string marker = "draft notes t" + std::to_string(i) + " j" + pad2(j);
            bool positive = j <= 5;
            if (contains(spec.all_positive, i)) positive = true;
            if (contains(spec.all_negative, i)) positive = false;

            // Reflection rule first: its match string only occurs in
            // reflect prompts.
            rules.push_back({{"match", marker},
                             {"responses",
                              {positive ? "The answer is " + PipelineFixture::gold(i) + " ."
                                        : "The passage does not say."}}});
            // CoT sampling rule, keyed by the rendered "[rank] text" form so
            // it never fires on answer prompts whose context carries the raw
            // document text. All ten docs tie on score, so rank == j.
            rules.push_back({{"match", "[" + std::to_string(j) + "] " + text},
                             {"responses", {marker + " about the question."}}});
        }

        // Closed-book answer prompts are distinguished from with-context
        // prompts by the system message preceding the question.
        rules.push_back({{"match", "own knowledge.\nQuestion: " + PipelineFixture::question(i) + "\n"},
                         {"responses",
                          {contains(spec.closed_book_correct, i)
                               ? "I recall it is " + PipelineFixture::gold(i) + " ."
                               : "I do not know."}}});
        // With-context answers: correct exactly when the rendered context
        // carries the gold token.
        rules.push_back({{"match", PipelineFixture::gold(i) + " ."},
                         {"responses",
                          {"Based on the context: " + PipelineFixture::gold(i) + " ."}}});
        rules.push_back({{"match", "Question: " + PipelineFixture::question(i) + "\n"},
                         {"responses", {"The context is inconclusive."}}});
    }

    write_lines(fixture.corpus_path, corpus_lines);
    write_lines(fixture.queries_path, query_lines);
    write_file_atomic(fixture.mock_script_path,
                      json{{"rules", rules}, {"default", "UNMATCHED"}}.dump(2));
    return fixture;
}

}  // namespace forge::test
