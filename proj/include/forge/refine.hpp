#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/gateway.hpp"
#include "forge/records.hpp"
#include "forge/templates.hpp"

namespace forge {

enum class RefineMethod { none, rerank, summary, rankcot };

std::string to_string(RefineMethod method);
RefineMethod refine_method_from_string(std::string_view name);

/// Refined knowledge for one query. For method none the text is the
/// separator-joined concatenation of all input documents; for rerank it
/// concatenates exactly the kept documents in retrieval order.
struct RefinementOutput {
    RefineMethod method = RefineMethod::none;
    std::string query_id;
    std::string text;
    std::int64_t char_len = 0;
    std::vector<std::string> kept_doc_ids;  // rerank only
};

nlohmann::json to_json(const RefinementOutput& output);
RefinementOutput refinement_from_json(const nlohmann::json& j);

/// One generated answer plus the context it was generated from.
struct GenerationRecord {
    std::string query_id;
    std::string method;  // refinement method name or "closed_book"
    std::string answer;
    std::string refinement_text;
    std::int64_t refinement_len = 0;
    std::optional<bool> correct;
    bool empty_context = false;  // rerank dropped everything
};

nlohmann::json to_json(const GenerationRecord& record);
GenerationRecord generation_from_json(const nlohmann::json& j);

struct RefinerOptions {
    std::string backend_id;
    std::string model;
    std::string doc_separator = "\n\n";
    double temperature = 0.0;  // rerank/summary/cot-refinement/answer calls
    int max_tokens = 512;
};

/// The four knowledge-refinement strategies plus answer generation, all
/// driven by prompt templates through the gateway. Stateless per query
/// apart from the unparseable-rerank-label warning counter.
class Refiner {
public:
    Refiner(Gateway& gateway, const TemplateSet& templates, RefinerOptions options);

    RefinementOutput refine(RefineMethod method, const QueryRecord& query,
                            const std::vector<ScoredDocument>& docs);

    RefinementOutput refine_none(const QueryRecord& query,
                                 const std::vector<ScoredDocument>& docs);
    RefinementOutput refine_rerank(const QueryRecord& query,
                                   const std::vector<ScoredDocument>& docs);
    RefinementOutput refine_summary(const QueryRecord& query,
                                    const std::vector<ScoredDocument>& docs);
    RefinementOutput refine_rankcot(const QueryRecord& query,
                                    const std::vector<ScoredDocument>& docs);

    GenerationRecord answer(const QueryRecord& query,
                            const std::optional<RefinementOutput>& context);

    /// Rerank responses that matched neither YES nor NO (kept fail-open).
    long unparsed_rerank_labels() const { return unparsed_labels_.load(); }

private:
    Gateway& gateway_;
    const TemplateSet& templates_;
    RefinerOptions options_;
    std::atomic<long> unparsed_labels_{0};
};

}  // namespace forge
