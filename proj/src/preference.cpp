#include "forge/preference.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "forge/jsonl.hpp"
#include "forge/text.hpp"
#include "forge/util.hpp"

namespace forge {

using nlohmann::json;

bool contains_answer(std::string_view text, const std::vector<std::string>& gold_answers) {
    if (gold_answers.empty()) {
        throw InputError("contains_answer requires at least one gold answer");
    }
    return contains_normalized(text, gold_answers);
}

PreferenceBuilder::PreferenceBuilder(Gateway& gateway, const TemplateSet& templates,
                                     PreferenceOptions options)
    : gateway_(gateway), templates_(templates), options_(std::move(options)) {
    if (options_.n_docs < 1 || options_.context_m < 1 || options_.n_per_doc < 1) {
        throw ConfigError("preference options require n_docs, context_m, n_per_doc >= 1");
    }
}

PreferenceBuilder::SampleOutcome PreferenceBuilder::sample_candidates(
    const QueryRecord& query, const std::vector<ScoredDocument>& docs) const {
    if (docs.size() < static_cast<std::size_t>(options_.n_docs)) {
        throw InputError("insufficient documents for query \"" + query.query_id + "\": have " +
                         std::to_string(docs.size()) + ", need " +
                         std::to_string(options_.n_docs));
    }
    const auto& tmpl = templates_.get("cot");

    SampleOutcome outcome;
    for (int i = 0; i < options_.n_docs; ++i) {
        const auto& doc = docs[static_cast<std::size_t>(i)];
        ChatRequest request;
        request.backend_id = options_.backend_id;
        request.model = options_.model;
        if (!tmpl.system.empty()) {
            request.messages.push_back({"system", tmpl.system});
        }
        request.messages.push_back(
            {"user",
             render_slots(tmpl.user, {{"query", query.question},
                                      {"documents", render_documents({doc}, tmpl.doc_separator)}})});
        request.temperature = options_.cot_temperature;
        request.n_samples = options_.n_per_doc;
        request.max_tokens = options_.max_tokens;
        request.seed_tag = query.query_id + "/" + doc.doc_id + "#0";

        try {
            const auto response = gateway_.complete(request);
            for (const auto& completion : response.completions) {
                const std::string raw = trim(completion);
                if (raw.empty()) {
                    ++outcome.n_failed;
                    continue;
                }
                CoTCandidate candidate;
                candidate.query_id = query.query_id;
                candidate.doc_id = doc.doc_id;
                candidate.raw_cot = raw;
                outcome.candidates.push_back(std::move(candidate));
            }
        } catch (const Error&) {
            outcome.n_failed += options_.n_per_doc;
        }
    }
    const int total = options_.n_docs * options_.n_per_doc;
    outcome.query_excluded = outcome.n_failed * 2 > total;
    if (outcome.query_excluded) {
        outcome.candidates.clear();
    }
    return outcome;
}

std::optional<CoTCandidate> PreferenceBuilder::self_reflect(CoTCandidate candidate,
                                                            const QueryRecord& query) const {
    if (candidate.raw_cot.empty()) {
        throw InputError("self_reflect requires a raw CoT");
    }
    const auto& tmpl = templates_.get("reflect");

    ChatRequest request;
    request.backend_id = options_.backend_id;
    request.model = options_.model;
    if (!tmpl.system.empty()) {
        request.messages.push_back({"system", tmpl.system});
    }
    request.messages.push_back(
        {"user", render_slots(tmpl.user, {{"query", query.question}, {"cot", candidate.raw_cot}})});
    request.temperature = options_.reflect_temperature;
    request.max_tokens = options_.max_tokens;
    request.seed_tag = "reflect/" + query.query_id + "/" + candidate.doc_id + "#0";

    const auto response = gateway_.complete(request);
    const std::string refined = trim(response.completions.front());
    if (refined.empty()) {
        return std::nullopt;  // dropped: empty reflection
    }
    candidate.refined_cot = refined;
    return candidate;
}

std::optional<std::pair<std::vector<CoTCandidate>, std::vector<CoTCandidate>>>
PreferenceBuilder::label_and_filter(std::vector<CoTCandidate> candidates,
                                    const QueryRecord& query) {
    std::vector<CoTCandidate> positives;
    std::vector<CoTCandidate> negatives;
    for (auto& candidate : candidates) {
        if (candidate.refined_cot.empty()) {
            throw InputError("candidate for query \"" + query.query_id +
                             "\" has no refined CoT; reflect before labeling");
        }
        if (contains_answer(candidate.refined_cot, query.gold_answers)) {
            candidate.label = CandidateLabel::positive;
            positives.push_back(std::move(candidate));
        } else {
            candidate.label = CandidateLabel::negative;
            negatives.push_back(std::move(candidate));
        }
    }
    if (positives.empty() || negatives.empty()) {
        // Degenerate query: every CoT correct or every CoT wrong. No pair
        // can be formed, so the query is filtered out.
        return std::nullopt;
    }
    return std::make_pair(std::move(positives), std::move(negatives));
}

PreferencePair PreferenceBuilder::build_pair(const std::vector<CoTCandidate>& positives,
                                             const std::vector<CoTCandidate>& negatives,
                                             const QueryRecord& query,
                                             const std::vector<ScoredDocument>& context_docs) const {
    if (positives.empty() || negatives.empty()) {
        throw InputError("build_pair requires non-empty positives and negatives");
    }
    if (context_docs.size() < static_cast<std::size_t>(options_.context_m)) {
        throw InputError("build_pair requires at least " + std::to_string(options_.context_m) +
                         " context documents");
    }

    std::map<std::string, int> rank_of;
    for (const auto& doc : context_docs) {
        rank_of.emplace(doc.doc_id, doc.rank);
    }
    auto best = [&](const std::vector<CoTCandidate>& group) -> const CoTCandidate& {
        const CoTCandidate* chosen = nullptr;
        int chosen_rank = std::numeric_limits<int>::max();
        for (const auto& candidate : group) {
            auto it = rank_of.find(candidate.doc_id);
            if (it == rank_of.end()) {
                throw InputError("candidate doc \"" + candidate.doc_id +
                                 "\" not in the retrieved set for query \"" + query.query_id +
                                 "\"");
            }
            if (!chosen || it->second < chosen_rank ||
                (it->second == chosen_rank && candidate.doc_id < chosen->doc_id)) {
                chosen = &candidate;
                chosen_rank = it->second;
            }
        }
        return *chosen;
    };

    const CoTCandidate& chosen = best(positives);
    const CoTCandidate& rejected = best(negatives);

    std::vector<ScoredDocument> top_m(context_docs.begin(),
                                      context_docs.begin() + options_.context_m);
    const auto& tmpl = templates_.get("cot");

    PreferencePair pair;
    pair.query_id = query.query_id;
    pair.prompt = render_slots(
        tmpl.user,
        {{"query", query.question}, {"documents", render_documents(top_m, tmpl.doc_separator)}});
    pair.chosen = chosen.refined_cot;
    pair.rejected = rejected.refined_cot;
    pair.chosen_doc_id = chosen.doc_id;
    pair.rejected_doc_id = rejected.doc_id;
    return pair;
}

SplitManifest split_and_export(const std::vector<PreferencePair>& pairs, std::uint64_t seed,
                               const std::filesystem::path& out_dir, const FilterStats& stats) {
    if (pairs.empty()) {
        throw EmptyResultError("no trainable pairs to export");
    }

    // Fisher-Yates with an explicit engine draw; std::shuffle's sequence is
    // implementation-defined, this one is reproducible everywhere.
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::mt19937_64 rng(seed);
    for (std::size_t i = order.size() - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(order[i], order[j]);
    }

    const auto n_valid = static_cast<std::size_t>(
        std::lround(static_cast<double>(pairs.size()) / 10.0));

    std::vector<json> train_rows;
    std::vector<json> valid_rows;
    SplitManifest manifest;
    manifest.seed = seed;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& pair = pairs[order[i]];
        json row = {{"prompt", pair.prompt},
                    {"chosen", pair.chosen},
                    {"rejected", pair.rejected},
                    {"meta",
                     {{"query_id", pair.query_id},
                      {"chosen_doc_id", pair.chosen_doc_id},
                      {"rejected_doc_id", pair.rejected_doc_id}}}};
        if (i < n_valid) {
            valid_rows.push_back(std::move(row));
            manifest.valid_ids.push_back(pair.query_id);
        } else {
            train_rows.push_back(std::move(row));
            manifest.train_ids.push_back(pair.query_id);
        }
    }

    std::filesystem::create_directories(out_dir);
    write_jsonl_atomic(out_dir / "dpo_train.jsonl", train_rows);
    write_jsonl_atomic(out_dir / "dpo_valid.jsonl", valid_rows);

    const json manifest_json = {
        {"seed", seed},
        {"n_pairs", pairs.size()},
        {"n_train", manifest.train_ids.size()},
        {"n_valid", manifest.valid_ids.size()},
        {"train_ids", manifest.train_ids},
        {"valid_ids", manifest.valid_ids},
        {"filter_stats",
         {{"n_all_positive", stats.n_all_positive},
          {"n_all_negative", stats.n_all_negative},
          {"n_failed", stats.n_failed}}}};
    write_file_atomic(out_dir / "manifest.json", manifest_json.dump(2));
    return manifest;
}

}  // namespace forge
