#include "forge/remote_search.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <thread>

#include "forge/util.hpp"

namespace forge {

using nlohmann::json;

namespace {

// Split "http://host:port/path" into client base and path.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("endpoint must include scheme: " + endpoint);
    }
    auto path_start = endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {endpoint, "/"};
    }
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

std::string excerpt(const std::string& body) {
    constexpr std::size_t kMax = 200;
    if (body.size() <= kMax) {
        return body;
    }
    return body.substr(0, kMax) + "...";
}

}  // namespace

std::vector<ScoredDocument> remote_search(const std::string& endpoint, std::string_view query,
                                          std::size_t k, const RemoteSearchOptions& options,
                                          RemoteSearchStats* stats) {
    if (k == 0) {
        throw InputError("remote_search requires k >= 1");
    }
    auto [base, path] = split_endpoint(endpoint);
    httplib::Client client(base);
    client.set_connection_timeout(10);
    client.set_read_timeout(30);

    json body = {{"query", std::string(query)}, {"k", k}};
    const std::string payload = body.dump();

    httplib::Result res;
    auto backoff = options.base_backoff;
    int attempt = 0;
    while (true) {
        res = client.Post(path, payload, "application/json");
        const bool transient = !res || res->status == 429 || res->status >= 500;
        if (!transient) {
            break;
        }
        if (attempt >= options.max_retries) {
            throw BackendError("remote search failed after " + std::to_string(attempt) +
                               " retries: " +
                               (res ? "HTTP " + std::to_string(res->status)
                                    : httplib::to_string(res.error())));
        }
        std::this_thread::sleep_for(backoff);
        backoff = std::min(backoff * 2, options.max_backoff);
        ++attempt;
        if (stats) {
            stats->retries = attempt;
        }
    }
    if (res->status != 200) {
        throw BackendError("remote search HTTP " + std::to_string(res->status) + ": " +
                           excerpt(res->body));
    }

    json parsed;
    try {
        parsed = json::parse(res->body);
    } catch (const json::exception&) {
        throw BackendError("malformed remote search response: " + excerpt(res->body));
    }
    if (!parsed.contains("hits") || !parsed["hits"].is_array()) {
        throw BackendError("remote search response missing hits array: " + excerpt(res->body));
    }

    std::vector<ScoredDocument> hits;
    for (const auto& hit : parsed["hits"]) {
        if (!hit.contains("doc_id") || !hit.contains("text") || !hit.contains("score")) {
            throw BackendError("remote search hit missing fields: " + excerpt(hit.dump()));
        }
        ScoredDocument doc;
        doc.doc_id = hit["doc_id"].get<std::string>();
        doc.text = hit["text"].get<std::string>();
        doc.score = hit["score"].get<double>();
        if (!std::isfinite(doc.score)) {
            throw BackendError("remote search hit has non-finite score for doc " + doc.doc_id);
        }
        doc.source = "remote";
        hits.push_back(std::move(doc));
    }

    // Remote scores are trusted but re-sorted locally to keep the rank
    // invariant (non-increasing scores, contiguous ranks).
    std::stable_sort(hits.begin(), hits.end(), [](const ScoredDocument& a, const ScoredDocument& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.doc_id < b.doc_id;
    });
    if (hits.size() > k) {
        hits.resize(k);
    }
    for (std::size_t i = 0; i < hits.size(); ++i) {
        hits[i].rank = static_cast<int>(i + 1);
    }
    return hits;
}

}  // namespace forge
