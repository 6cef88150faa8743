#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "forge/eval.hpp"

namespace forge {

/// Effective run configuration. Precedence: --set flag > config file >
/// default. Only LLM_API_KEY and FORGE_CACHE_DIR come from the environment.
struct RunConfig {
    std::filesystem::path corpus_path;
    std::filesystem::path queries_path;
    std::filesystem::path templates_path;  // empty -> built-in defaults
    std::filesystem::path cache_dir = ".forge_cache";
    std::filesystem::path out_dir = "out";
    std::filesystem::path index_path;  // default: out_dir / "bm25_index.json"

    struct Backend {
        std::string kind = "mock";  // "openai_compatible" | "mock"
        std::string base_url;
        std::string model = "mock-model";
        std::filesystem::path mock_script;  // empty -> empty script (default response only)
    } backend;

    struct Retrieval {
        std::string kind = "bm25";  // "bm25" | "remote"
        int k = 10;
        int context_m = 5;
        std::string remote_endpoint;
    } retrieval;

    struct Sampling {
        double cot_temperature = 0.8;
        int n_per_doc = 1;
        int max_tokens = 512;
    } sampling;

    struct Dpo {
        double beta = 0.1;
    } dpo;

    std::uint64_t seed = 0;
    int max_inflight = 8;

    // metric.<dataset> = accuracy | string_em | rouge_l
    std::map<std::string, HeadlineMetric> dataset_metric_map;

    std::filesystem::path effective_index_path() const {
        return index_path.empty() ? out_dir / "bm25_index.json" : index_path;
    }

    /// Digest over the sorted effective key-value view; recorded in
    /// manifests and reports.
    std::string digest() const;
};

/// Parse a TOML-like key-value document: `key = value` lines, dotted keys
/// for sections, `#` comments, optional double quotes around values.
std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path);

/// Apply a `key=value` override (the --set flag).
void apply_override(std::map<std::string, std::string>& entries, const std::string& assignment);

/// Build the typed config from raw entries, validating ranges and enums.
RunConfig make_run_config(const std::map<std::string, std::string>& entries);

}  // namespace forge
