#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "forge/corpus.hpp"

namespace forge {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// In-memory BM25 index over a document corpus. Immutable after build;
/// concurrent searches over one instance are safe.
///
/// Scoring contract (what the oracle tests reproduce): for each query token
/// occurrence, in query order, a document accumulates
///   idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
/// with idf(t) = max(0, ln((N - df + 0.5) / (df + 0.5))). Documents with a
/// final score of exactly 0 are never returned. Ties break by ascending
/// doc_id.
class Bm25Index {
public:
    static Bm25Index build(const std::vector<CorpusDocument>& corpus, Bm25Params params = {});

    void save(const std::filesystem::path& path) const;
    static Bm25Index load(const std::filesystem::path& path);

    std::vector<ScoredDocument> search(std::string_view query, std::size_t k) const;

    std::size_t doc_count() const { return docs_.size(); }
    double avgdl() const { return avgdl_; }
    const Bm25Params& params() const { return params_; }

private:
    struct DocEntry {
        std::string doc_id;
        std::string title;
        std::string text;
        std::uint32_t length = 0;  // token count
    };

    Bm25Params params_;
    double avgdl_ = 0.0;
    std::vector<DocEntry> docs_;
    // term -> [(doc ordinal, term frequency)], ordinals in corpus order
    std::unordered_map<std::string, std::vector<std::pair<std::uint32_t, std::uint32_t>>> postings_;
};

}  // namespace forge
