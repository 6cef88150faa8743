#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/gateway.hpp"
#include "forge/records.hpp"
#include "forge/templates.hpp"

namespace forge {

enum class CandidateLabel { positive, negative };

/// One per-document chain-of-thought: the raw sampled text, the
/// self-reflected rewrite, and the gold-answer containment label.
struct CoTCandidate {
    std::string query_id;
    std::string doc_id;
    std::string raw_cot;
    std::string refined_cot;
    CandidateLabel label = CandidateLabel::negative;
};

/// Trainer-ready (prompt, chosen, rejected) record. The prompt renders the
/// question over all m context documents, not only the two source documents.
struct PreferencePair {
    std::string query_id;
    std::string prompt;
    std::string chosen;
    std::string rejected;
    std::string chosen_doc_id;
    std::string rejected_doc_id;
};

struct SplitManifest {
    std::vector<std::string> train_ids;
    std::vector<std::string> valid_ids;
    std::uint64_t seed = 0;
};

struct FilterStats {
    std::int64_t n_all_positive = 0;
    std::int64_t n_all_negative = 0;
    std::int64_t n_failed = 0;
};

/// True iff any normalized gold alias is a substring of the normalized text.
bool contains_answer(std::string_view text, const std::vector<std::string>& gold_answers);

struct PreferenceOptions {
    std::string backend_id;
    std::string model;
    int n_docs = 10;             // documents sampled per query
    int context_m = 5;           // documents rendered into the pair prompt
    int n_per_doc = 1;           // CoT samples per document
    double cot_temperature = 0.8;
    double reflect_temperature = 0.0;
    int max_tokens = 512;
};

class PreferenceBuilder {
public:
    PreferenceBuilder(Gateway& gateway, const TemplateSet& templates, PreferenceOptions options);

    struct SampleOutcome {
        std::vector<CoTCandidate> candidates;  // raw_cot only
        int n_failed = 0;
        bool query_excluded = false;  // more than half of the samples failed
    };

    /// Sample one CoT per document (per sample) with the cot template over
    /// the single document. Gateway failures exclude that candidate; the
    /// query is excluded entirely when more than half fail.
    SampleOutcome sample_candidates(const QueryRecord& query,
                                    const std::vector<ScoredDocument>& docs) const;

    /// Re-prompt the model to answer the query from the raw CoT. Returns
    /// nullopt (candidate dropped) on an empty reflection.
    std::optional<CoTCandidate> self_reflect(CoTCandidate candidate,
                                             const QueryRecord& query) const;

    /// Label every candidate by gold-answer containment of refined_cot.
    /// Returns nothing when the query is degenerate (all positive or all
    /// negative) and cannot form a preference pair.
    static std::optional<std::pair<std::vector<CoTCandidate>, std::vector<CoTCandidate>>>
    label_and_filter(std::vector<CoTCandidate> candidates, const QueryRecord& query);

    /// Pick chosen/rejected by best source-document retrieval rank (ties by
    /// ascending doc_id) and render the prompt over the top-m context docs.
    PreferencePair build_pair(const std::vector<CoTCandidate>& positives,
                              const std::vector<CoTCandidate>& negatives,
                              const QueryRecord& query,
                              const std::vector<ScoredDocument>& context_docs) const;

    const PreferenceOptions& options() const { return options_; }

private:
    Gateway& gateway_;
    const TemplateSet& templates_;
    PreferenceOptions options_;
};

/// Deterministic seeded shuffle, round(N/10) rows to validation, atomic
/// export of dpo_train.jsonl / dpo_valid.jsonl / manifest.json.
SplitManifest split_and_export(const std::vector<PreferencePair>& pairs, std::uint64_t seed,
                               const std::filesystem::path& out_dir,
                               const FilterStats& stats = {});

}  // namespace forge
