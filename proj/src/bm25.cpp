#include "forge/bm25.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include "forge/text.hpp"
#include "forge/util.hpp"

namespace forge {

using nlohmann::json;

Bm25Index Bm25Index::build(const std::vector<CorpusDocument>& corpus, Bm25Params params) {
    if (corpus.empty()) {
        throw InputError("cannot build index over empty corpus");
    }
    if (!std::isfinite(params.k1) || params.k1 < 0.0) {
        throw ConfigError("bm25 k1 must be finite and >= 0");
    }
    if (!std::isfinite(params.b) || params.b < 0.0 || params.b > 1.0) {
        throw ConfigError("bm25 b must be in [0,1]");
    }

    Bm25Index index;
    index.params_ = params;
    index.docs_.reserve(corpus.size());

    std::unordered_set<std::string> seen;
    std::uint64_t total_len = 0;
    for (const auto& doc : corpus) {
        if (!seen.insert(doc.doc_id).second) {
            throw InputError("duplicate doc_id \"" + doc.doc_id + "\" in corpus");
        }
        const auto ordinal = static_cast<std::uint32_t>(index.docs_.size());
        const auto tokens = bm25_tokenize(doc.text);
        std::map<std::string, std::uint32_t> tf;
        for (const auto& tok : tokens) {
            ++tf[tok];
        }
        for (const auto& [term, freq] : tf) {
            index.postings_[term].emplace_back(ordinal, freq);
        }
        index.docs_.push_back(
            {doc.doc_id, doc.title, doc.text, static_cast<std::uint32_t>(tokens.size())});
        total_len += tokens.size();
    }
    index.avgdl_ = static_cast<double>(total_len) / static_cast<double>(index.docs_.size());
    return index;
}

std::vector<ScoredDocument> Bm25Index::search(std::string_view query, std::size_t k) const {
    if (k == 0) {
        throw InputError("search requires k >= 1");
    }
    const auto tokens = bm25_tokenize(query);
    std::vector<double> scores(docs_.size(), 0.0);
    std::vector<bool> touched(docs_.size(), false);

    const double n_docs = static_cast<double>(docs_.size());
    for (const auto& tok : tokens) {
        auto it = postings_.find(tok);
        if (it == postings_.end()) {
            continue;
        }
        const double df = static_cast<double>(it->second.size());
        const double idf = std::max(0.0, std::log((n_docs - df + 0.5) / (df + 0.5)));
        for (const auto& [ordinal, freq] : it->second) {
            const double tf = static_cast<double>(freq);
            const double norm_len = avgdl_ > 0.0 ? docs_[ordinal].length / avgdl_ : 0.0;
            const double denom = tf + params_.k1 * (1.0 - params_.b + params_.b * norm_len);
            scores[ordinal] += idf * tf * (params_.k1 + 1.0) / denom;
            touched[ordinal] = true;
        }
    }

    std::vector<std::uint32_t> hits;
    for (std::uint32_t i = 0; i < docs_.size(); ++i) {
        if (touched[i] && scores[i] > 0.0) {
            hits.push_back(i);
        }
    }
    std::sort(hits.begin(), hits.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return docs_[a].doc_id < docs_[b].doc_id;
    });
    if (hits.size() > k) {
        hits.resize(k);
    }

    std::vector<ScoredDocument> results;
    results.reserve(hits.size());
    for (std::size_t i = 0; i < hits.size(); ++i) {
        const auto& doc = docs_[hits[i]];
        results.push_back({doc.doc_id, doc.text, scores[hits[i]], static_cast<int>(i + 1),
                           doc.title, "local"});
    }
    return results;
}

void Bm25Index::save(const std::filesystem::path& path) const {
    json j;
    j["format"] = "forge-bm25-v1";
    j["params"] = {{"k1", params_.k1}, {"b", params_.b}};
    j["avgdl"] = avgdl_;
    json docs = json::array();
    for (const auto& doc : docs_) {
        docs.push_back({{"doc_id", doc.doc_id},
                        {"title", doc.title},
                        {"text", doc.text},
                        {"length", doc.length}});
    }
    j["docs"] = std::move(docs);
    json postings = json::object();
    for (const auto& [term, posting] : postings_) {
        json rows = json::array();
        for (const auto& [ordinal, freq] : posting) {
            rows.push_back({ordinal, freq});
        }
        postings[term] = std::move(rows);
    }
    j["postings"] = std::move(postings);
    write_file_atomic(path, j.dump());
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& ex) {
        throw InputError("invalid index file " + path.string() + ": " + ex.what());
    }
    if (j.value("format", "") != "forge-bm25-v1") {
        throw InputError("unrecognized index format in " + path.string());
    }
    Bm25Index index;
    index.params_.k1 = j["params"]["k1"].get<double>();
    index.params_.b = j["params"]["b"].get<double>();
    index.avgdl_ = j["avgdl"].get<double>();
    for (const auto& doc : j["docs"]) {
        index.docs_.push_back({doc["doc_id"].get<std::string>(), doc["title"].get<std::string>(),
                               doc["text"].get<std::string>(), doc["length"].get<std::uint32_t>()});
    }
    for (const auto& [term, rows] : j["postings"].items()) {
        auto& posting = index.postings_[term];
        for (const auto& row : rows) {
            posting.emplace_back(row[0].get<std::uint32_t>(), row[1].get<std::uint32_t>());
        }
    }
    return index;
}

}  // namespace forge
