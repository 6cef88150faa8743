#include <doctest.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <fstream>
#include <thread>

#include "forge/commands.hpp"
#include "forge/jsonl.hpp"
#include "forge/util.hpp"

#include "support/test_support.hpp"

using namespace forge;
using forge::test::PipelineFixture;
using forge::test::PipelineFixtureSpec;
using forge::test::TempDir;
using nlohmann::json;

namespace {

RunConfig fixture_config(const TempDir& dir, const PipelineFixture& fixture) {
    RunConfig config;
    config.corpus_path = fixture.corpus_path;
    config.queries_path = fixture.queries_path;
    config.cache_dir = dir / "cache";
    config.out_dir = dir / "out";
    config.backend.kind = "mock";
    config.backend.mock_script = fixture.mock_script_path;
    config.retrieval.k = 10;
    config.retrieval.context_m = 5;
    config.seed = 42;
    config.dataset_metric_map = {{"default", HeadlineMetric::accuracy}};
    return config;
}

json load_manifest(const RunConfig& config, const std::string& name) {
    return json::parse(read_file(config.out_dir / name));
}

}  // namespace

TEST_CASE("config file parsing, overrides and validation") {
    TempDir dir("config");
    const auto path = dir / "run.toml";
    write_file_atomic(path,
                      "# comment\n"
                      "corpus_path = \"corpus.jsonl\"\n"
                      "retrieval.k = 10\n"
                      "retrieval.context_m = 5\n"
                      "sampling.cot_temperature = 0.8   # inline comment\n"
                      "backend.kind = mock\n"
                      "metric.nq = accuracy\n"
                      "metric.marco = rouge_l\n");
    auto entries = parse_config_file(path);
    CHECK(entries["corpus_path"] == "corpus.jsonl");
    CHECK(entries["sampling.cot_temperature"] == "0.8");

    apply_override(entries, "retrieval.k=20");
    apply_override(entries, "seed=7");
    const auto config = make_run_config(entries);
    CHECK(config.retrieval.k == 20);
    CHECK(config.seed == 7);
    CHECK(config.sampling.cot_temperature == doctest::Approx(0.8));
    CHECK(config.dataset_metric_map.at("marco") == HeadlineMetric::rouge_l);

    SUBCASE("unknown key is rejected") {
        auto bad = entries;
        bad["not_a_key"] = "x";
        CHECK_THROWS_AS(make_run_config(bad), ConfigError);
    }
    SUBCASE("context_m must not exceed k") {
        auto bad = entries;
        bad["retrieval.context_m"] = "40";
        CHECK_THROWS_AS(make_run_config(bad), ConfigError);
    }
    SUBCASE("digest is stable and sensitive") {
        const auto digest = config.digest();
        CHECK(digest == config.digest());
        auto other = config;
        other.seed = 8;
        CHECK(other.digest() != digest);
    }
}

TEST_CASE("cmd_index builds, reruns identically, and fails cleanly on bad input") {
    TempDir dir("cmd_index");
    const auto fixture =
        make_pipeline_fixture(dir / "fx", PipelineFixtureSpec{.n_queries = 2});
    auto config = fixture_config(dir, fixture);

    REQUIRE(cmd_index(config) == kExitOk);
    const auto manifest = load_manifest(config, "manifest_index.json");
    CHECK(manifest["counts"]["docs"] == 20);
    const std::string digest1 =
        manifest["outputs"][config.effective_index_path().string()];

    REQUIRE(cmd_index(config) == kExitOk);
    const auto manifest2 = load_manifest(config, "manifest_index.json");
    CHECK(manifest2["outputs"][config.effective_index_path().string()] == digest1);

    SUBCASE("missing corpus exits 2 and names the path") {
        auto bad = config;
        bad.corpus_path = dir / "nope.jsonl";
        CHECK(cmd_index(bad) == kExitConfig);
    }
}

TEST_CASE("cmd_refine writes records, counts calls, and replays from cache") {
    TempDir dir("cmd_refine");
    const auto fixture =
        make_pipeline_fixture(dir / "fx", PipelineFixtureSpec{.n_queries = 3});
    auto config = fixture_config(dir, fixture);
    REQUIRE(cmd_index(config) == kExitOk);

    SUBCASE("method none performs zero gateway calls") {
        REQUIRE(cmd_refine(config, RefineMethod::none) == kExitOk);
        const auto manifest = load_manifest(config, "manifest_refine_none.json");
        CHECK(manifest["gateway"]["backend_calls"] == 0);
        const auto rows = read_jsonl(config.out_dir / "refine_none.jsonl");
        REQUIRE(rows.size() == 3);
        for (const auto& row : rows) {
            CHECK(row["method"] == "none");
            CHECK(row["char_len"] == row["text"].get<std::string>().size());
        }
    }

    SUBCASE("rerank populates kept_doc_ids; unparsed labels fail open") {
        REQUIRE(cmd_refine(config, RefineMethod::rerank) == kExitOk);
        const auto rows = read_jsonl(config.out_dir / "refine_rerank.jsonl");
        REQUIRE(rows.size() == 3);
        // The fixture's per-doc responses are CoT drafts, not YES/NO, so
        // every document is kept fail-open and counted as unparsed.
        CHECK(rows[0]["kept_doc_ids"].size() == 5);
        const auto manifest = load_manifest(config, "manifest_refine_rerank.json");
        CHECK(manifest["warnings"]["unparsed_rerank_labels"] == 15);
        CHECK(manifest["gateway"]["backend_calls"] == 15);
    }

    SUBCASE("warm cache rerun performs zero calls and reproduces the digest") {
        REQUIRE(cmd_refine(config, RefineMethod::rankcot) == kExitOk);
        const auto first = load_manifest(config, "manifest_refine_rankcot.json");
        CHECK(first["gateway"]["backend_calls"] == 3);

        REQUIRE(cmd_refine(config, RefineMethod::rankcot) == kExitOk);
        const auto second = load_manifest(config, "manifest_refine_rankcot.json");
        CHECK(second["gateway"]["backend_calls"] == 0);
        CHECK(second["gateway"]["cache_hits"] == 3);
        CHECK(second["outputs"] == first["outputs"]);
    }
}

TEST_CASE("cmd_generate: closed book, record counts, missing refinement") {
    TempDir dir("cmd_generate");
    const auto fixture = make_pipeline_fixture(
        dir / "fx", PipelineFixtureSpec{.n_queries = 4, .closed_book_correct = {1, 3}});
    auto config = fixture_config(dir, fixture);
    REQUIRE(cmd_index(config) == kExitOk);

    SUBCASE("closed book answers every query without documents") {
        REQUIRE(cmd_generate(config, RefineMethod::none, /*closed_book=*/true) == kExitOk);
        const auto rows = read_jsonl(config.out_dir / "gen_closed_book.jsonl");
        REQUIRE(rows.size() == 4);
        for (const auto& row : rows) {
            CHECK(row["method"] == "closed_book");
            CHECK(row["refinement_text"] == "");
        }
        // The scripted closed-book hits answered with the gold token.
        CHECK(rows[0]["answer"].get<std::string>().find(PipelineFixture::gold(1)) !=
              std::string::npos);
        CHECK(rows[1]["answer"] == "I do not know.");
    }

    SUBCASE("with-context generation consumes the refinement file") {
        REQUIRE(cmd_refine(config, RefineMethod::none) == kExitOk);
        REQUIRE(cmd_generate(config, RefineMethod::none, false) == kExitOk);
        const auto rows = read_jsonl(config.out_dir / "gen_none.jsonl");
        REQUIRE(rows.size() == 4);
        CHECK(rows[0]["method"] == "none");
        CHECK(rows[0]["refinement_len"].get<long>() > 0);
    }

    SUBCASE("generating without the refinement file exits 2") {
        CHECK(cmd_generate(config, RefineMethod::summary, false) == kExitConfig);
    }
}

TEST_CASE("cmd_generate quarantines partial output on backend failure") {
    TempDir dir("cmd_gen_fault");
    const auto fixture =
        make_pipeline_fixture(dir / "fx", PipelineFixtureSpec{.n_queries = 3});

    // An OpenAI-compatible server that hard-fails one specific query.
    httplib::Server server;
    server.Post("/v1/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
        if (req.body.find("topic2") != std::string::npos) {
            res.status = 400;
            res.set_content("{\"error\": \"bad prompt\"}", "application/json");
            return;
        }
        res.set_content(json{{"choices",
                              {{{"message", {{"role", "assistant"}, {"content", "an answer"}}}}}}}
                            .dump(),
                        "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    auto config = fixture_config(dir, fixture);
    config.backend.kind = "openai_compatible";
    config.backend.base_url = "http://127.0.0.1:" + std::to_string(port);
    config.backend.mock_script.clear();
    config.max_inflight = 1;

    CHECK(cmd_generate(config, RefineMethod::none, /*closed_book=*/true) == kExitBackend);
    const auto partial = read_jsonl(config.out_dir / "failed" / "gen_closed_book.jsonl");
    CHECK(partial.size() == 2);
    CHECK_FALSE(std::filesystem::exists(config.out_dir / "gen_closed_book.jsonl"));

    server.stop();
    listener.join();
}

TEST_CASE("cmd_build_dpo: scripted 30-query fixture exports 24 pairs") {
    TempDir dir("cmd_dpo");
    PipelineFixtureSpec spec;
    spec.n_queries = 30;
    spec.all_positive = {4, 11, 27};
    spec.all_negative = {2, 19, 30};
    const auto fixture = make_pipeline_fixture(dir / "fx", spec);
    auto config = fixture_config(dir, fixture);
    REQUIRE(cmd_index(config) == kExitOk);

    REQUIRE(cmd_build_dpo(config) == kExitOk);
    const auto manifest = json::parse(read_file(config.out_dir / "manifest.json"));
    CHECK(manifest["n_pairs"] == 24);
    CHECK(manifest["n_train"] == 22);  // round(24/10) = 2 validation rows
    CHECK(manifest["n_valid"] == 2);
    CHECK(manifest["filter_stats"]["n_all_positive"] == 3);
    CHECK(manifest["filter_stats"]["n_all_negative"] == 3);
    CHECK(manifest["filter_stats"]["n_failed"] == 0);

    // Every exported pair: chosen contains gold, rejected does not; chosen
    // comes from the best-ranked positive doc (d01) and rejected from the
    // best-ranked negative doc (d06).
    auto rows = read_jsonl(config.out_dir / "dpo_train.jsonl");
    for (const auto& row : read_jsonl(config.out_dir / "dpo_valid.jsonl")) {
        rows.push_back(row);
    }
    REQUIRE(rows.size() == 24);
    for (const auto& row : rows) {
        const std::string query_id = row["meta"]["query_id"];
        const int i = std::stoi(query_id.substr(1));
        CHECK(contains_answer(row["chosen"].get<std::string>(), {PipelineFixture::gold(i)}));
        CHECK_FALSE(
            contains_answer(row["rejected"].get<std::string>(), {PipelineFixture::gold(i)}));
        CHECK(row["meta"]["chosen_doc_id"] == PipelineFixture::doc_id(i, 1));
        CHECK(row["meta"]["rejected_doc_id"] == PipelineFixture::doc_id(i, 6));
    }

    SUBCASE("same seed reruns byte-identically with zero backend calls") {
        const std::string train_before = read_file(config.out_dir / "dpo_train.jsonl");
        const std::string valid_before = read_file(config.out_dir / "dpo_valid.jsonl");
        REQUIRE(cmd_build_dpo(config) == kExitOk);
        CHECK(read_file(config.out_dir / "dpo_train.jsonl") == train_before);
        CHECK(read_file(config.out_dir / "dpo_valid.jsonl") == valid_before);
        const auto stage = load_manifest(config, "manifest_build_dpo.json");
        CHECK(stage["gateway"]["backend_calls"] == 0);
    }
}

TEST_CASE("cmd_build_dpo with no surviving queries exits 3") {
    TempDir dir("cmd_dpo_empty");
    PipelineFixtureSpec spec;
    spec.n_queries = 4;
    spec.all_positive = {1, 2};
    spec.all_negative = {3, 4};
    const auto fixture = make_pipeline_fixture(dir / "fx", spec);
    auto config = fixture_config(dir, fixture);
    REQUIRE(cmd_index(config) == kExitOk);
    CHECK(cmd_build_dpo(config) == kExitEmpty);
}

TEST_CASE("cmd_evaluate produces the scenario report; golden fixture") {
    TempDir dir("cmd_eval");
    PipelineFixtureSpec spec;
    spec.n_queries = 6;
    spec.docs_have_answer = {1, 2, 3};
    spec.closed_book_correct = {3, 4};
    const auto fixture = make_pipeline_fixture(dir / "fx", spec);
    auto config = fixture_config(dir, fixture);
    REQUIRE(cmd_index(config) == kExitOk);
    REQUIRE(cmd_refine(config, RefineMethod::none) == kExitOk);
    REQUIRE(cmd_generate(config, RefineMethod::none, false) == kExitOk);
    REQUIRE(cmd_generate(config, RefineMethod::none, true) == kExitOk);

    EvaluateInputs inputs;
    inputs.record_files = {config.out_dir / "gen_none.jsonl"};
    inputs.closed_book_file = config.out_dir / "gen_closed_book.jsonl";
    REQUIRE(cmd_evaluate(config, inputs) == kExitOk);

    auto report = json::parse(read_file(config.out_dir / "report.json"));
    // Closed-book accuracy on the internal-knowledge subset is exactly 100.
    CHECK(report["cells"]["closed_book"]["default"]["internal_knowledge"]["value"] == 100.0);
    CHECK(report["cells"]["closed_book"]["default"]["internal_knowledge"]["count"] == 2);
    // Method none answers correctly exactly on the has-answer half.
    CHECK(report["cells"]["none"]["default"]["has_answer"]["value"] == 100.0);
    CHECK(report["cells"]["none"]["default"]["miss_answer"]["value"] == 0.0);
    CHECK(report["cells"]["none"]["default"]["all"]["value"] == 50.0);

    SUBCASE("dataset without metric mapping exits 2") {
        auto bad = config;
        bad.dataset_metric_map = {{"other", HeadlineMetric::accuracy}};
        CHECK(cmd_evaluate(bad, inputs) == kExitConfig);
    }

    SUBCASE("report matches the checked-in golden file") {
        report["config_digest"] = "";
        const auto golden_path = std::filesystem::path(FORGE_GOLDEN_DIR) / "report.json";
        const auto golden = json::parse(read_file(golden_path));
        CHECK(report == golden);
    }

    SUBCASE("cmd_report re-renders the table and runs csv diagnostics") {
        std::filesystem::remove(config.out_dir / "report.txt");
        const auto csv_path = dir / "pairs.csv";
        write_file_atomic(csv_path,
                          "logp_policy_chosen,logp_ref_chosen,logp_policy_rejected,"
                          "logp_ref_rejected,beta\n1,0,0,0,0.1\n");
        REQUIRE(cmd_report(config, csv_path) == kExitOk);
        CHECK(std::filesystem::exists(config.out_dir / "report.txt"));

        auto no_report = config;
        no_report.out_dir = dir / "elsewhere";
        CHECK(cmd_report(no_report, std::nullopt) == kExitConfig);
    }
}

TEST_CASE("cmd_consistency: scripted fraction lands exactly") {
    TempDir dir("cmd_consistency");
    const auto fixture = make_pipeline_fixture(dir / "fx", PipelineFixtureSpec{.n_queries = 2});
    auto config = fixture_config(dir, fixture);
    REQUIRE(cmd_index(config) == kExitOk);
    REQUIRE(cmd_refine(config, RefineMethod::none) == kExitOk);

    // Consistency prompts render the refinement as context; the fixture's
    // with-context fallback rule answers deterministically, so replace the
    // script with an alternating one.
    MockScript script;
    script.rules.push_back(
        {"tell me about topic1", {"answer1 it is", "wrong"}});
    script.rules.push_back(
        {"tell me about topic2", {"answer2 indeed", "wrong"}});
    const auto script_path = dir / "alternating.json";
    json rules = json::array();
    for (const auto& rule : script.rules) {
        rules.push_back({{"match", rule.match}, {"responses", rule.responses}});
    }
    write_file_atomic(script_path, json{{"rules", rules}, {"default", "x"}}.dump());
    config.backend.mock_script = script_path;

    REQUIRE(cmd_consistency(config, RefineMethod::none, 20, 0.7) == kExitOk);
    const auto rows = read_jsonl(config.out_dir / "consistency_none.jsonl");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0]["consistency"] == 0.5);
    CHECK(rows[1]["consistency"] == 0.5);
    CHECK(rows[0]["n_samples"] == 20);
}

TEST_CASE("full pipeline replay: warm cache means zero backend calls everywhere") {
    TempDir dir("replay");
    PipelineFixtureSpec spec;
    spec.n_queries = 4;
    spec.docs_have_answer = {1, 2};
    spec.closed_book_correct = {2, 3};
    const auto fixture = make_pipeline_fixture(dir / "fx", spec);
    auto config = fixture_config(dir, fixture);

    auto run_all = [&] {
        REQUIRE(cmd_index(config) == kExitOk);
        for (auto method : {RefineMethod::none, RefineMethod::rerank, RefineMethod::summary,
                            RefineMethod::rankcot}) {
            REQUIRE(cmd_refine(config, method) == kExitOk);
            REQUIRE(cmd_generate(config, method, false) == kExitOk);
        }
        REQUIRE(cmd_generate(config, RefineMethod::none, true) == kExitOk);
        REQUIRE(cmd_build_dpo(config) == kExitOk);
        EvaluateInputs inputs;
        for (const char* m : {"none", "rerank", "summary", "rankcot"}) {
            inputs.record_files.push_back(config.out_dir / ("gen_" + std::string(m) + ".jsonl"));
        }
        inputs.closed_book_file = config.out_dir / "gen_closed_book.jsonl";
        REQUIRE(cmd_evaluate(config, inputs) == kExitOk);
        REQUIRE(cmd_consistency(config, RefineMethod::rankcot, 10, 0.7) == kExitOk);
    };

    run_all();
    // Collect output digests and call counts from every stage manifest.
    std::map<std::string, json> first_outputs;
    long first_calls = 0;
    for (const auto& entry : std::filesystem::directory_iterator(config.out_dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("manifest_", 0) == 0) {
            const auto manifest = json::parse(read_file(entry.path()));
            first_outputs[name] = manifest["outputs"];
            first_calls += manifest["gateway"].value("backend_calls", 0L);
        }
    }
    CHECK(first_calls > 0);

    run_all();
    long second_calls = 0;
    for (const auto& entry : std::filesystem::directory_iterator(config.out_dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("manifest_", 0) == 0) {
            const auto manifest = json::parse(read_file(entry.path()));
            CHECK(manifest["outputs"] == first_outputs[name]);
            second_calls += manifest["gateway"].value("backend_calls", 0L);
        }
    }
    CHECK(second_calls == 0);
}
