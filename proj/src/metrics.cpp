#include "forge/metrics.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "forge/text.hpp"
#include "forge/util.hpp"

namespace forge {

using nlohmann::json;

bool accuracy(std::string_view answer, const std::vector<std::string>& gold_answers) {
    if (gold_answers.empty()) {
        throw InputError("accuracy requires at least one gold answer");
    }
    return contains_normalized(answer, gold_answers);
}

namespace {

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) {
        return 0;
    }
    // Two-row DP over token sequences.
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            if (a[i - 1] == b[j - 1]) {
                cur[j] = prev[j - 1] + 1;
            } else {
                cur[j] = std::max(prev[j], cur[j - 1]);
            }
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

RougeScore rouge_l(std::string_view hypothesis, std::string_view reference) {
    const auto hyp = rouge_tokens(hypothesis);
    const auto ref = rouge_tokens(reference);
    if (hyp.empty() || ref.empty()) {
        return {};
    }
    const double lcs = static_cast<double>(lcs_length(hyp, ref));
    RougeScore score;
    score.precision = lcs / static_cast<double>(hyp.size());
    score.recall = lcs / static_cast<double>(ref.size());
    if (score.precision + score.recall > 0.0) {
        score.f1 = 2.0 * score.precision * score.recall / (score.precision + score.recall);
    }
    return score;
}

RougeScore rouge_l_multi(std::string_view hypothesis, const std::vector<std::string>& references) {
    if (references.empty()) {
        throw InputError("rouge_l_multi requires at least one reference");
    }
    RougeScore best;
    for (const auto& ref : references) {
        const auto score = rouge_l(hypothesis, ref);
        if (score.f1 > best.f1) {
            best = score;
        }
    }
    return best;
}

double string_em(std::string_view answer,
                 const std::vector<std::vector<std::string>>& short_answer_sets) {
    if (short_answer_sets.empty()) {
        throw InputError("string_em requires at least one short-answer set");
    }
    std::size_t matched = 0;
    for (const auto& aliases : short_answer_sets) {
        if (contains_normalized(answer, aliases)) {
            ++matched;
        }
    }
    return static_cast<double>(matched) / static_cast<double>(short_answer_sets.size());
}

double hit_rate(const std::vector<RefinementOutput>& refinements,
                const std::map<std::string, std::vector<std::string>>& gold) {
    if (refinements.empty()) {
        throw InputError("hit_rate requires at least one refinement");
    }
    std::size_t hits = 0;
    for (const auto& refinement : refinements) {
        auto it = gold.find(refinement.query_id);
        if (it == gold.end()) {
            throw InputError("no gold answers for query \"" + refinement.query_id + "\"");
        }
        if (contains_normalized(refinement.text, it->second)) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(refinements.size());
}

LengthStats length_stats(const std::map<std::string, std::vector<RefinementOutput>>& groups,
                         const std::string& baseline_method) {
    auto baseline_it = groups.find(baseline_method);
    if (baseline_it == groups.end() || baseline_it->second.empty()) {
        throw InputError("baseline group \"" + baseline_method + "\" is missing or empty");
    }
    LengthStats stats;
    for (const auto& [method, outputs] : groups) {
        if (outputs.empty()) {
            throw InputError("length_stats group \"" + method + "\" is empty");
        }
        double total = 0.0;
        for (const auto& output : outputs) {
            total += static_cast<double>(output.char_len);
        }
        stats.mean_len[method] = total / static_cast<double>(outputs.size());
    }
    const double baseline_mean = stats.mean_len[baseline_method];
    for (const auto& [method, mean] : stats.mean_len) {
        stats.change_ratio[method] = mean / baseline_mean;
    }
    return stats;
}

std::vector<std::vector<double>> HashingEmbedder::embed(const std::vector<std::string>& texts) {
    std::vector<std::vector<double>> vectors;
    vectors.reserve(texts.size());
    for (const auto& text : texts) {
        std::vector<double> vec(dim_, 0.0);
        for (const auto& token : bm25_tokenize(text)) {
            // FNV-1a, fixed across platforms.
            std::uint64_t h = 1469598103934665603ull;
            for (unsigned char c : token) {
                h = (h ^ c) * 1099511628211ull;
            }
            vec[h % dim_] += 1.0;
        }
        double norm = 0.0;
        for (double v : vec) {
            norm += v * v;
        }
        if (norm > 0.0) {
            norm = std::sqrt(norm);
            for (double& v : vec) {
                v /= norm;
            }
        }
        vectors.push_back(std::move(vec));
    }
    return vectors;
}

HttpEmbedder::HttpEmbedder(std::string base_url, std::string model)
    : base_url_(std::move(base_url)), model_(std::move(model)) {}

std::vector<std::vector<double>> HttpEmbedder::embed(const std::vector<std::string>& texts) {
    httplib::Client client(base_url_);
    client.set_connection_timeout(10);
    client.set_read_timeout(120);
    const json body = {{"model", model_}, {"input", texts}};
    auto res = client.Post("/v1/embeddings", body.dump(), "application/json");
    if (!res || res->status != 200) {
        throw BackendError("embedding request failed: " +
                           (res ? "HTTP " + std::to_string(res->status)
                                : httplib::to_string(res.error())));
    }
    json parsed;
    try {
        parsed = json::parse(res->body);
    } catch (const json::exception&) {
        throw BackendError("malformed embedding response: " + res->body.substr(0, 200));
    }
    std::vector<std::vector<double>> vectors;
    for (const auto& row : parsed.at("data")) {
        vectors.push_back(row.at("embedding").get<std::vector<double>>());
    }
    if (vectors.size() != texts.size()) {
        throw BackendError("embedding count mismatch");
    }
    return vectors;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw InputError("embedding dimension mismatch: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double mean_similarity(const std::vector<std::string>& query_texts,
                       const std::vector<std::string>& refinement_texts, Embedder& embedder) {
    if (query_texts.empty() || query_texts.size() != refinement_texts.size()) {
        throw InputError("mean_similarity requires aligned non-empty lists");
    }
    const auto query_vecs = embedder.embed(query_texts);
    const auto refinement_vecs = embedder.embed(refinement_texts);
    double total = 0.0;
    for (std::size_t i = 0; i < query_vecs.size(); ++i) {
        total += cosine(query_vecs[i], refinement_vecs[i]);
    }
    return total / static_cast<double>(query_vecs.size());
}

double consistency(Gateway& gateway, const TemplateSet& templates, const QueryRecord& query,
                   const RefinementOutput& refinement, const ConsistencyOptions& options) {
    if (options.n_samples < 1) {
        throw InputError("consistency requires n_samples >= 1");
    }
    const auto& tmpl = templates.get("answer_with_context");

    std::size_t correct = 0;
    std::size_t failed = 0;
    for (int i = 0; i < options.n_samples; ++i) {
        ChatRequest request;
        request.backend_id = options.backend_id;
        request.model = options.model;
        if (!tmpl.system.empty()) {
            request.messages.push_back({"system", tmpl.system});
        }
        request.messages.push_back(
            {"user", render_slots(tmpl.user,
                                  {{"query", query.question}, {"documents", refinement.text}})});
        request.temperature = options.temperature;
        request.max_tokens = options.max_tokens;
        request.seed_tag = "consistency/" + query.query_id + "#" + std::to_string(i);

        try {
            const auto response = gateway.complete(request);
            if (accuracy(response.completions.front(), query.gold_answers)) {
                ++correct;
            }
        } catch (const Error&) {
            ++failed;
            if (failed * 10 > static_cast<std::size_t>(options.n_samples)) {
                throw BackendError("more than 10% of consistency samples failed for query \"" +
                                   query.query_id + "\"");
            }
        }
    }
    return static_cast<double>(correct) / static_cast<double>(options.n_samples);
}

}  // namespace forge
