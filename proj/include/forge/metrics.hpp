#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "forge/gateway.hpp"
#include "forge/records.hpp"
#include "forge/refine.hpp"
#include "forge/templates.hpp"

namespace forge {

/// Containment accuracy: true iff any normalized gold alias is a substring
/// of the normalized answer (same implementation as the preference labeler).
bool accuracy(std::string_view answer, const std::vector<std::string>& gold_answers);

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Sentence-level Rouge-L: LCS over rouge tokens, P = LCS/|hyp|,
/// R = LCS/|ref|, F1 = 2PR/(P+R) (0 when both are 0).
RougeScore rouge_l(std::string_view hypothesis, std::string_view reference);

/// Multi-reference Rouge-L: the reference with the best F1 wins.
RougeScore rouge_l_multi(std::string_view hypothesis, const std::vector<std::string>& references);

/// String-EM: fraction of short-answer sets with at least one alias
/// contained in the answer.
double string_em(std::string_view answer,
                 const std::vector<std::vector<std::string>>& short_answer_sets);

/// Fraction of refinements whose text contains a gold alias for its query.
double hit_rate(const std::vector<RefinementOutput>& refinements,
                const std::map<std::string, std::vector<std::string>>& gold);

struct LengthStats {
    std::map<std::string, double> mean_len;      // method -> mean char_len
    std::map<std::string, double> change_ratio;  // method -> mean / baseline mean
};

/// Per-method mean refinement length and the ratio against an explicitly
/// supplied baseline group.
LengthStats length_stats(const std::map<std::string, std::vector<RefinementOutput>>& groups,
                         const std::string& baseline_method);

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

/// Deterministic test embedder: tokens hashed into a fixed-dimension bag
/// vector, L2-normalized.
class HashingEmbedder : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dim = 64) : dim_(dim) {}
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

private:
    std::size_t dim_;
};

/// OpenAI-compatible embeddings endpoint (POST {base_url}/v1/embeddings).
class HttpEmbedder : public Embedder {
public:
    HttpEmbedder(std::string base_url, std::string model);
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

private:
    std::string base_url_;
    std::string model_;
};

double cosine(const std::vector<double>& a, const std::vector<double>& b);

/// Mean per-pair cosine between aligned query and refinement texts.
double mean_similarity(const std::vector<std::string>& query_texts,
                       const std::vector<std::string>& refinement_texts, Embedder& embedder);

struct ConsistencyOptions {
    std::string backend_id;
    std::string model;
    int n_samples = 300;
    double temperature = 0.8;
    int max_tokens = 512;
};

/// QA-consistency: sample n answers for (query, refinement) at the given
/// temperature with a distinct seed tag per sample; return the fraction
/// judged correct. Errors out when more than 10% of samples fail.
double consistency(Gateway& gateway, const TemplateSet& templates, const QueryRecord& query,
                   const RefinementOutput& refinement, const ConsistencyOptions& options);

}  // namespace forge
