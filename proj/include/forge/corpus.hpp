#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace forge {

struct CorpusDocument {
    std::string doc_id;
    std::string title;  // may be empty
    std::string text;   // non-empty after trim
};

/// A retrieval hit. Scores are non-increasing with rank and ranks are
/// contiguous from 1 within one result list.
struct ScoredDocument {
    std::string doc_id;
    std::string text;
    double score = 0.0;
    int rank = 0;
    std::string title;
    std::string source = "local";  // "local" or "remote"
};

/// Load a corpus file (JSON Lines, one {"doc_id","title","text"} per row).
/// Rejects duplicate doc_ids (naming the id) and documents whose text is
/// empty after whitespace trim.
std::vector<CorpusDocument> load_corpus_jsonl(const std::filesystem::path& path);

}  // namespace forge
