#include "forge/commands.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <exception>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include "forge/bm25.hpp"
#include "forge/dpo.hpp"
#include "forge/eval.hpp"
#include "forge/gateway.hpp"
#include "forge/jsonl.hpp"
#include "forge/manifest.hpp"
#include "forge/metrics.hpp"
#include "forge/preference.hpp"
#include "forge/remote_search.hpp"
#include "forge/templates.hpp"
#include "forge/util.hpp"

namespace forge {

using nlohmann::json;

namespace {

int exit_code_for(const std::exception_ptr& eptr) {
    try {
        std::rethrow_exception(eptr);
    } catch (const BackendError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kExitBackend;
    } catch (const EmptyResultError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kExitEmpty;
    } catch (const ConfigError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kExitConfig;
    } catch (const InputError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
}

template <typename Fn>
int run_command(Fn&& body) {
    try {
        return body();
    } catch (...) {
        return exit_code_for(std::current_exception());
    }
}

void require_file(const std::filesystem::path& path, const char* what) {
    if (path.empty() || !std::filesystem::exists(path)) {
        throw ConfigError(std::string(what) + " not found: " + path.string());
    }
}

struct GatewayBundle {
    std::shared_ptr<ChatBackend> backend;
    std::unique_ptr<Gateway> gateway;
    MockBackend* mock = nullptr;  // non-null for the mock backend
};

GatewayBundle make_gateway(const RunConfig& config) {
    GatewayBundle bundle;
    if (config.backend.kind == "mock") {
        MockScript script;
        if (!config.backend.mock_script.empty()) {
            require_file(config.backend.mock_script, "mock script");
            script = MockScript::load(config.backend.mock_script);
        }
        auto mock = std::make_shared<MockBackend>(std::move(script));
        bundle.mock = mock.get();
        bundle.backend = std::move(mock);
    } else {
        OpenAiBackendOptions options;
        options.base_url = config.backend.base_url;
        bundle.backend = std::make_shared<OpenAiBackend>(options);
    }
    bundle.gateway =
        std::make_unique<Gateway>(bundle.backend, config.cache_dir, config.max_inflight);
    return bundle;
}

TemplateSet load_templates(const RunConfig& config) {
    if (config.templates_path.empty()) {
        return TemplateSet::defaults();
    }
    require_file(config.templates_path, "template file");
    return TemplateSet::load(config.templates_path);
}

RefinerOptions refiner_options(const RunConfig& config, const GatewayBundle& bundle) {
    RefinerOptions options;
    options.backend_id = bundle.backend->id();
    options.model = config.backend.model;
    options.max_tokens = config.sampling.max_tokens;
    return options;
}

/// Run fn(i) for i in [0, count) on up to `workers` threads. The first
/// exception wins; remaining work is abandoned.
template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
    const auto n_threads =
        std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(workers), count));
    if (n_threads == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
        threads.emplace_back([&] {
            while (!failed.load()) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) {
                    return;
                }
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                    failed.store(true);
                    return;
                }
            }
        });
    }
    for (auto& thread : threads) {
        thread.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

/// Retrieve top-k documents for every query via the configured retriever.
std::map<std::string, std::vector<ScoredDocument>> retrieve_for_queries(
    const RunConfig& config, const std::vector<QueryRecord>& queries) {
    std::map<std::string, std::vector<ScoredDocument>> retrieved;
    const auto k = static_cast<std::size_t>(config.retrieval.k);
    if (config.retrieval.kind == "bm25") {
        require_file(config.effective_index_path(), "index file");
        const Bm25Index index = Bm25Index::load(config.effective_index_path());
        for (const auto& query : queries) {
            retrieved[query.query_id] = index.search(query.question, k);
        }
    } else {
        std::vector<std::vector<ScoredDocument>> results(queries.size());
        parallel_for(queries.size(), config.max_inflight, [&](std::size_t i) {
            results[i] = remote_search(config.retrieval.remote_endpoint, queries[i].question, k);
        });
        for (std::size_t i = 0; i < queries.size(); ++i) {
            retrieved[queries[i].query_id] = std::move(results[i]);
        }
    }
    return retrieved;
}

std::vector<ScoredDocument> top_m(const std::vector<ScoredDocument>& docs, int m) {
    std::vector<ScoredDocument> out(docs.begin(),
                                    docs.begin() + std::min<std::size_t>(docs.size(),
                                                                         static_cast<std::size_t>(m)));
    return out;
}

}  // namespace

int cmd_index(const RunConfig& config) {
    return run_command([&] {
        require_file(config.corpus_path, "corpus file");
        const auto corpus = load_corpus_jsonl(config.corpus_path);
        const auto index = Bm25Index::build(corpus);
        const auto index_path = config.effective_index_path();
        index.save(index_path);

        RunManifest manifest("index", config.digest());
        manifest.add_input(config.corpus_path);
        manifest.add_output(index_path);
        manifest.set_count("docs", static_cast<std::int64_t>(index.doc_count()));
        manifest.write(config.out_dir / "manifest_index.json");
        std::cout << "indexed " << index.doc_count() << " docs, avgdl " << index.avgdl() << '\n';
        return kExitOk;
    });
}

int cmd_refine(const RunConfig& config, RefineMethod method) {
    return run_command([&] {
        require_file(config.queries_path, "queries file");
        const auto queries = load_queries_jsonl(config.queries_path);
        const auto retrieved = retrieve_for_queries(config, queries);

        auto bundle = make_gateway(config);
        const auto templates = load_templates(config);
        Refiner refiner(*bundle.gateway, templates, refiner_options(config, bundle));

        std::vector<RefinementOutput> outputs(queries.size());
        parallel_for(queries.size(), config.max_inflight, [&](std::size_t i) {
            const auto& docs = retrieved.at(queries[i].query_id);
            if (docs.empty()) {
                throw EmptyResultError("no documents retrieved for query \"" +
                                       queries[i].query_id + "\"");
            }
            outputs[i] =
                refiner.refine(method, queries[i], top_m(docs, config.retrieval.context_m));
        });

        std::vector<json> rows;
        rows.reserve(outputs.size());
        for (const auto& output : outputs) {
            rows.push_back(to_json(output));
        }
        const auto out_path = config.out_dir / ("refine_" + to_string(method) + ".jsonl");
        write_jsonl_atomic(out_path, rows);

        RunManifest manifest("refine_" + to_string(method), config.digest());
        manifest.add_input(config.queries_path);
        manifest.add_output(out_path);
        manifest.set_count("queries", static_cast<std::int64_t>(queries.size()));
        manifest.set_warning("unparsed_rerank_labels", refiner.unparsed_rerank_labels());
        manifest.set_gateway_stats(bundle.gateway->backend_calls(), bundle.gateway->cache_hits());
        manifest.write(config.out_dir / ("manifest_refine_" + to_string(method) + ".json"));
        return kExitOk;
    });
}

int cmd_generate(const RunConfig& config, RefineMethod method, bool closed_book) {
    return run_command([&] {
        require_file(config.queries_path, "queries file");
        const auto queries = load_queries_jsonl(config.queries_path);

        std::map<std::string, RefinementOutput> refinements;
        if (!closed_book) {
            const auto refine_path = config.out_dir / ("refine_" + to_string(method) + ".jsonl");
            require_file(refine_path, "refinement file");
            for (const auto& row : read_jsonl(refine_path)) {
                auto output = refinement_from_json(row);
                refinements[output.query_id] = std::move(output);
            }
        }

        auto bundle = make_gateway(config);
        const auto templates = load_templates(config);
        Refiner refiner(*bundle.gateway, templates, refiner_options(config, bundle));

        const std::string method_name = closed_book ? "closed_book" : to_string(method);
        std::vector<std::optional<GenerationRecord>> records(queries.size());
        std::atomic<long> failures{0};
        parallel_for(queries.size(), config.max_inflight, [&](std::size_t i) {
            std::optional<RefinementOutput> context;
            if (!closed_book) {
                auto it = refinements.find(queries[i].query_id);
                if (it == refinements.end()) {
                    throw InputError("no refinement for query \"" + queries[i].query_id + "\"");
                }
                context = it->second;
            }
            try {
                records[i] = refiner.answer(queries[i], context);
            } catch (const BackendError&) {
                failures.fetch_add(1);
            }
        });

        std::vector<json> rows;
        for (const auto& record : records) {
            if (record.has_value()) {
                rows.push_back(to_json(*record));
            }
        }

        if (failures.load() > 0) {
            // Quarantine the partial output; a failed stage must not look
            // like a complete one.
            const auto failed_dir = config.out_dir / "failed";
            const auto partial_path = failed_dir / ("gen_" + method_name + ".jsonl");
            write_jsonl_atomic(partial_path, rows);
            std::cerr << "error: " << failures.load() << " generation(s) failed; partial output in "
                      << partial_path.string() << '\n';
            return kExitBackend;
        }

        const auto out_path = config.out_dir / ("gen_" + method_name + ".jsonl");
        write_jsonl_atomic(out_path, rows);

        RunManifest manifest("generate_" + method_name, config.digest());
        manifest.add_input(config.queries_path);
        manifest.add_output(out_path);
        manifest.set_count("records", static_cast<std::int64_t>(rows.size()));
        manifest.set_gateway_stats(bundle.gateway->backend_calls(), bundle.gateway->cache_hits());
        manifest.write(config.out_dir / ("manifest_generate_" + method_name + ".json"));
        return kExitOk;
    });
}

int cmd_build_dpo(const RunConfig& config) {
    return run_command([&] {
        require_file(config.queries_path, "queries file");
        const auto queries = load_queries_jsonl(config.queries_path);
        const auto retrieved = retrieve_for_queries(config, queries);

        auto bundle = make_gateway(config);
        const auto templates = load_templates(config);

        PreferenceOptions options;
        options.backend_id = bundle.backend->id();
        options.model = config.backend.model;
        options.n_docs = config.retrieval.k;
        options.context_m = config.retrieval.context_m;
        options.n_per_doc = config.sampling.n_per_doc;
        options.cot_temperature = config.sampling.cot_temperature;
        options.max_tokens = config.sampling.max_tokens;
        PreferenceBuilder builder(*bundle.gateway, templates, options);

        std::vector<std::optional<PreferencePair>> pair_slots(queries.size());
        std::atomic<std::int64_t> n_all_positive{0};
        std::atomic<std::int64_t> n_all_negative{0};
        std::atomic<std::int64_t> n_failed{0};
        std::atomic<std::int64_t> n_dropped_reflections{0};

        parallel_for(queries.size(), config.max_inflight, [&](std::size_t i) {
            const auto& query = queries[i];
            const auto& docs = retrieved.at(query.query_id);

            PreferenceBuilder::SampleOutcome outcome;
            try {
                outcome = builder.sample_candidates(query, docs);
            } catch (const Error&) {
                n_failed.fetch_add(1);
                return;
            }
            if (outcome.query_excluded || outcome.candidates.empty()) {
                n_failed.fetch_add(1);
                return;
            }

            std::vector<CoTCandidate> refined;
            for (auto& candidate : outcome.candidates) {
                auto reflected = builder.self_reflect(std::move(candidate), query);
                if (reflected.has_value()) {
                    refined.push_back(std::move(*reflected));
                } else {
                    n_dropped_reflections.fetch_add(1);
                }
            }
            if (refined.empty()) {
                n_failed.fetch_add(1);
                return;
            }

            auto labeled = PreferenceBuilder::label_and_filter(refined, query);
            if (!labeled.has_value()) {
                // Degenerate query: every label agrees, so one candidate
                // decides which filter counter applies.
                if (contains_answer(refined.front().refined_cot, query.gold_answers)) {
                    n_all_positive.fetch_add(1);
                } else {
                    n_all_negative.fetch_add(1);
                }
                return;
            }

            pair_slots[i] = builder.build_pair(labeled->first, labeled->second, query, docs);
        });

        std::vector<PreferencePair> pairs;
        for (auto& slot : pair_slots) {
            if (slot.has_value()) {
                pairs.push_back(std::move(*slot));
            }
        }

        FilterStats stats;
        stats.n_all_positive = n_all_positive.load();
        stats.n_all_negative = n_all_negative.load();
        stats.n_failed = n_failed.load();

        const auto manifest_split = split_and_export(pairs, config.seed, config.out_dir, stats);

        RunManifest manifest("build_dpo", config.digest());
        manifest.add_input(config.queries_path);
        manifest.add_output(config.out_dir / "dpo_train.jsonl");
        manifest.add_output(config.out_dir / "dpo_valid.jsonl");
        manifest.add_output(config.out_dir / "manifest.json");
        manifest.set_count("queries", static_cast<std::int64_t>(queries.size()));
        manifest.set_count("pairs", static_cast<std::int64_t>(pairs.size()));
        manifest.set_count("train", static_cast<std::int64_t>(manifest_split.train_ids.size()));
        manifest.set_count("valid", static_cast<std::int64_t>(manifest_split.valid_ids.size()));
        manifest.set_count("filtered_all_positive", stats.n_all_positive);
        manifest.set_count("filtered_all_negative", stats.n_all_negative);
        manifest.set_count("failed_queries", stats.n_failed);
        manifest.set_warning("dropped_reflections", n_dropped_reflections.load());
        manifest.set_gateway_stats(bundle.gateway->backend_calls(), bundle.gateway->cache_hits());
        manifest.write(config.out_dir / "manifest_build_dpo.json");
        std::cout << "exported " << pairs.size() << " pairs (" << manifest_split.train_ids.size()
                  << " train / " << manifest_split.valid_ids.size() << " valid)\n";
        return kExitOk;
    });
}

int cmd_evaluate(const RunConfig& config, const EvaluateInputs& inputs) {
    return run_command([&] {
        require_file(config.queries_path, "queries file");
        const auto queries = load_queries_jsonl(config.queries_path);

        std::vector<GenerationRecord> records;
        for (const auto& path : inputs.record_files) {
            require_file(path, "generation records file");
            for (const auto& row : read_jsonl(path)) {
                records.push_back(generation_from_json(row));
            }
        }
        require_file(inputs.closed_book_file, "closed-book records file");
        std::vector<GenerationRecord> closed_book;
        for (const auto& row : read_jsonl(inputs.closed_book_file)) {
            closed_book.push_back(generation_from_json(row));
        }

        const auto retrieved_full = retrieve_for_queries(config, queries);
        std::map<std::string, std::vector<ScoredDocument>> retrieved;
        for (const auto& [query_id, docs] : retrieved_full) {
            retrieved[query_id] = top_m(docs, config.retrieval.context_m);
        }

        const auto assignment = assign_scenarios(queries, retrieved, closed_book);

        // Closed-book rows appear in the report alongside refined methods.
        for (const auto& record : closed_book) {
            records.push_back(record);
        }
        if (records.empty()) {
            throw EmptyResultError("no generation records to evaluate");
        }

        const auto report =
            build_report(records, queries, assignment, config.dataset_metric_map, config.digest());

        const auto json_path = config.out_dir / "report.json";
        const auto text_path = config.out_dir / "report.txt";
        write_file_atomic(json_path, report.to_json().dump(2));
        write_file_atomic(text_path, report.to_text_table());
        std::cout << report.to_text_table();

        RunManifest manifest("evaluate", config.digest());
        manifest.add_input(config.queries_path);
        for (const auto& path : inputs.record_files) {
            manifest.add_input(path);
        }
        manifest.add_input(inputs.closed_book_file);
        manifest.add_output(json_path);
        manifest.add_output(text_path);
        manifest.set_count("records", static_cast<std::int64_t>(records.size()));
        manifest.write(config.out_dir / "manifest_evaluate.json");
        return kExitOk;
    });
}

int cmd_consistency(const RunConfig& config, RefineMethod method, int n_samples,
                    double temperature) {
    return run_command([&] {
        require_file(config.queries_path, "queries file");
        const auto queries = load_queries_jsonl(config.queries_path);
        const auto refine_path = config.out_dir / ("refine_" + to_string(method) + ".jsonl");
        require_file(refine_path, "refinement file");
        std::map<std::string, RefinementOutput> refinements;
        for (const auto& row : read_jsonl(refine_path)) {
            auto output = refinement_from_json(row);
            refinements[output.query_id] = std::move(output);
        }

        auto bundle = make_gateway(config);
        const auto templates = load_templates(config);

        ConsistencyOptions options;
        options.backend_id = bundle.backend->id();
        options.model = config.backend.model;
        options.n_samples = n_samples;
        options.temperature = temperature;
        options.max_tokens = config.sampling.max_tokens;

        std::vector<double> fractions(queries.size());
        parallel_for(queries.size(), config.max_inflight, [&](std::size_t i) {
            auto it = refinements.find(queries[i].query_id);
            if (it == refinements.end()) {
                throw InputError("no refinement for query \"" + queries[i].query_id + "\"");
            }
            fractions[i] =
                consistency(*bundle.gateway, templates, queries[i], it->second, options);
        });

        std::vector<json> rows;
        double total = 0.0;
        for (std::size_t i = 0; i < queries.size(); ++i) {
            rows.push_back({{"query_id", queries[i].query_id},
                            {"method", to_string(method)},
                            {"n_samples", n_samples},
                            {"temperature", temperature},
                            {"consistency", fractions[i]}});
            total += fractions[i];
        }
        const auto out_path = config.out_dir / ("consistency_" + to_string(method) + ".jsonl");
        write_jsonl_atomic(out_path, rows);

        RunManifest manifest("consistency_" + to_string(method), config.digest());
        manifest.add_input(config.queries_path);
        manifest.add_input(refine_path);
        manifest.add_output(out_path);
        manifest.set_count("queries", static_cast<std::int64_t>(queries.size()));
        manifest.set_count("samples_per_query", n_samples);
        manifest.set_gateway_stats(bundle.gateway->backend_calls(), bundle.gateway->cache_hits());
        manifest.write(config.out_dir / ("manifest_consistency_" + to_string(method) + ".json"));
        std::cout << "mean consistency " << (total / static_cast<double>(queries.size())) << '\n';
        return kExitOk;
    });
}

int cmd_report(const RunConfig& config, const std::optional<std::filesystem::path>& dpo_csv) {
    return run_command([&] {
        const auto json_path = config.out_dir / "report.json";
        if (std::filesystem::exists(json_path)) {
            const auto report = EvalReport::from_json(json::parse(read_file(json_path)));
            const auto text = report.to_text_table();
            write_file_atomic(config.out_dir / "report.txt", text);
            std::cout << text;
        } else if (!dpo_csv.has_value()) {
            throw ConfigError("nothing to report: no report.json in " + config.out_dir.string() +
                              " and no --dpo-csv given");
        }

        if (dpo_csv.has_value()) {
            require_file(*dpo_csv, "dpo csv");
            const auto rows = read_dpo_csv(*dpo_csv);
            if (rows.empty()) {
                throw EmptyResultError("dpo csv has no data rows");
            }
            double total_loss = 0.0;
            double total_margin = 0.0;
            for (const auto& row : rows) {
                const auto result = dpo_loss(row);
                total_loss += result.loss;
                total_margin += result.margin;
            }
            const double n = static_cast<double>(rows.size());
            std::cout << "dpo pairs: " << rows.size() << '\n'
                      << "mean loss: " << (total_loss / n) << '\n'
                      << "mean margin: " << (total_margin / n) << '\n'
                      << "preference rate: " << pair_preference_rate(rows) << '\n';
        }
        return kExitOk;
    });
}

}  // namespace forge
