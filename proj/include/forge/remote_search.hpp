#pragma once

#include <chrono>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "forge/corpus.hpp"

namespace forge {

struct RemoteSearchOptions {
    int max_retries = 3;
    std::chrono::milliseconds base_backoff{100};
    std::chrono::milliseconds max_backoff{2000};
};

struct RemoteSearchStats {
    int retries = 0;
};

/// POST {endpoint} with {"query","k"}; expects {"hits":[{doc_id,text,score}]}.
/// Hits are re-sorted by descending score (ascending doc_id on ties) before
/// ranks are assigned, and marked source="remote". Network failures retry
/// with capped exponential backoff; malformed responses fail immediately
/// with a payload excerpt.
std::vector<ScoredDocument> remote_search(const std::string& endpoint, std::string_view query,
                                          std::size_t k, const RemoteSearchOptions& options = {},
                                          RemoteSearchStats* stats = nullptr);

}  // namespace forge
