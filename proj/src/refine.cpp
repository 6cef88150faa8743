#include "forge/refine.hpp"

#include <algorithm>
#include <cctype>

#include "forge/text.hpp"
#include "forge/util.hpp"

namespace forge {

using nlohmann::json;

namespace {

std::vector<ScoredDocument> in_rank_order(std::vector<ScoredDocument> docs) {
    std::sort(docs.begin(), docs.end(),
              [](const ScoredDocument& a, const ScoredDocument& b) { return a.rank < b.rank; });
    return docs;
}

std::string join_texts(const std::vector<ScoredDocument>& docs, std::string_view separator) {
    std::string out;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (i > 0) {
            out += separator;
        }
        out += docs[i].text;
    }
    return out;
}

// Rerank label normalization: trim, strip punctuation, uppercase.
std::string normalize_label(std::string_view raw) {
    std::string out;
    for (unsigned char c : trim(raw)) {
        if (c < 0x80 && !std::isalnum(c) && !std::isspace(c)) {
            continue;
        }
        out.push_back(static_cast<char>(std::toupper(c)));
    }
    return out;
}

}  // namespace

std::string to_string(RefineMethod method) {
    switch (method) {
        case RefineMethod::none: return "none";
        case RefineMethod::rerank: return "rerank";
        case RefineMethod::summary: return "summary";
        case RefineMethod::rankcot: return "rankcot";
    }
    return "none";
}

RefineMethod refine_method_from_string(std::string_view name) {
    if (name == "none") return RefineMethod::none;
    if (name == "rerank") return RefineMethod::rerank;
    if (name == "summary") return RefineMethod::summary;
    if (name == "rankcot") return RefineMethod::rankcot;
    throw ConfigError("unknown refinement method \"" + std::string(name) + "\"");
}

json to_json(const RefinementOutput& output) {
    json j = {{"method", to_string(output.method)},
              {"query_id", output.query_id},
              {"text", output.text},
              {"char_len", output.char_len}};
    if (output.method == RefineMethod::rerank) {
        j["kept_doc_ids"] = output.kept_doc_ids;
    }
    return j;
}

RefinementOutput refinement_from_json(const json& j) {
    RefinementOutput out;
    out.method = refine_method_from_string(j.at("method").get<std::string>());
    out.query_id = j.at("query_id").get<std::string>();
    out.text = j.at("text").get<std::string>();
    out.char_len = j.at("char_len").get<std::int64_t>();
    if (j.contains("kept_doc_ids")) {
        out.kept_doc_ids = j["kept_doc_ids"].get<std::vector<std::string>>();
    }
    return out;
}

json to_json(const GenerationRecord& record) {
    json j = {{"query_id", record.query_id},
              {"method", record.method},
              {"answer", record.answer},
              {"refinement_text", record.refinement_text},
              {"refinement_len", record.refinement_len},
              {"empty_context", record.empty_context}};
    j["correct"] = record.correct.has_value() ? json(*record.correct) : json(nullptr);
    return j;
}

GenerationRecord generation_from_json(const json& j) {
    GenerationRecord rec;
    rec.query_id = j.at("query_id").get<std::string>();
    rec.method = j.at("method").get<std::string>();
    rec.answer = j.at("answer").get<std::string>();
    rec.refinement_text = j.value("refinement_text", "");
    rec.refinement_len = j.value("refinement_len", std::int64_t{0});
    rec.empty_context = j.value("empty_context", false);
    if (j.contains("correct") && !j["correct"].is_null()) {
        rec.correct = j["correct"].get<bool>();
    }
    return rec;
}

Refiner::Refiner(Gateway& gateway, const TemplateSet& templates, RefinerOptions options)
    : gateway_(gateway), templates_(templates), options_(std::move(options)) {}

RefinementOutput Refiner::refine(RefineMethod method, const QueryRecord& query,
                                 const std::vector<ScoredDocument>& docs) {
    switch (method) {
        case RefineMethod::none: return refine_none(query, docs);
        case RefineMethod::rerank: return refine_rerank(query, docs);
        case RefineMethod::summary: return refine_summary(query, docs);
        case RefineMethod::rankcot: return refine_rankcot(query, docs);
    }
    throw ConfigError("unhandled refinement method");
}

RefinementOutput Refiner::refine_none(const QueryRecord& query,
                                      const std::vector<ScoredDocument>& docs) {
    if (docs.empty()) {
        throw InputError("refine_none requires at least one document");
    }
    RefinementOutput out;
    out.method = RefineMethod::none;
    out.query_id = query.query_id;
    out.text = join_texts(in_rank_order(docs), options_.doc_separator);
    out.char_len = static_cast<std::int64_t>(out.text.size());
    return out;
}

RefinementOutput Refiner::refine_rerank(const QueryRecord& query,
                                        const std::vector<ScoredDocument>& docs) {
    if (docs.empty()) {
        throw InputError("refine_rerank requires at least one document");
    }
    const auto& tmpl = templates_.get("rerank");
    const auto ordered = in_rank_order(docs);

    std::vector<ScoredDocument> kept;
    for (const auto& doc : ordered) {
        ChatRequest request;
        request.backend_id = options_.backend_id;
        request.model = options_.model;
        if (!tmpl.system.empty()) {
            request.messages.push_back({"system", tmpl.system});
        }
        request.messages.push_back(
            {"user", render_slots(tmpl.user, {{"query", query.question},
                                              {"document", render_documents({doc}, tmpl.doc_separator)}})});
        request.temperature = options_.temperature;
        request.max_tokens = options_.max_tokens;
        request.seed_tag = "refine/rerank/" + query.query_id + "/" + doc.doc_id + "#0";

        const auto response = gateway_.complete(request);
        const std::string label = normalize_label(response.completions.front());
        if (label.starts_with("YES")) {
            kept.push_back(doc);
        } else if (label.starts_with("NO")) {
            // dropped
        } else {
            // Unparseable label: keep the document (fail open) and count it.
            unparsed_labels_.fetch_add(1);
            kept.push_back(doc);
        }
    }

    RefinementOutput out;
    out.method = RefineMethod::rerank;
    out.query_id = query.query_id;
    out.text = join_texts(kept, options_.doc_separator);
    out.char_len = static_cast<std::int64_t>(out.text.size());
    for (const auto& doc : kept) {
        out.kept_doc_ids.push_back(doc.doc_id);
    }
    return out;
}

RefinementOutput Refiner::refine_summary(const QueryRecord& query,
                                         const std::vector<ScoredDocument>& docs) {
    if (docs.empty()) {
        throw InputError("refine_summary requires at least one document");
    }
    const auto& tmpl = templates_.get("summary");
    const auto ordered = in_rank_order(docs);

    ChatRequest request;
    request.backend_id = options_.backend_id;
    request.model = options_.model;
    if (!tmpl.system.empty()) {
        request.messages.push_back({"system", tmpl.system});
    }
    request.messages.push_back(
        {"user", render_slots(tmpl.user, {{"query", query.question},
                                          {"documents", render_documents(ordered, tmpl.doc_separator)}})});
    request.temperature = options_.temperature;
    request.max_tokens = options_.max_tokens;
    request.seed_tag = "refine/summary/" + query.query_id + "#0";

    const auto response = gateway_.complete(request);
    const std::string text = trim(response.completions.front());
    if (text.empty()) {
        throw BackendError("empty refinement for query \"" + query.query_id + "\"");
    }

    RefinementOutput out;
    out.method = RefineMethod::summary;
    out.query_id = query.query_id;
    out.text = text;
    out.char_len = static_cast<std::int64_t>(out.text.size());
    return out;
}

RefinementOutput Refiner::refine_rankcot(const QueryRecord& query,
                                         const std::vector<ScoredDocument>& docs) {
    if (docs.empty()) {
        throw InputError("refine_rankcot requires at least one document");
    }
    const auto& tmpl = templates_.get("cot");
    const auto ordered = in_rank_order(docs);

    ChatRequest request;
    request.backend_id = options_.backend_id;
    request.model = options_.model;
    if (!tmpl.system.empty()) {
        request.messages.push_back({"system", tmpl.system});
    }
    request.messages.push_back(
        {"user", render_slots(tmpl.user, {{"query", query.question},
                                          {"documents", render_documents(ordered, tmpl.doc_separator)}})});
    request.temperature = options_.temperature;
    request.max_tokens = options_.max_tokens;
    request.seed_tag = "refine/rankcot/" + query.query_id + "#0";

    const auto response = gateway_.complete(request);
    const std::string text = trim(response.completions.front());
    if (text.empty()) {
        throw BackendError("empty refinement for query \"" + query.query_id + "\"");
    }

    RefinementOutput out;
    out.method = RefineMethod::rankcot;
    out.query_id = query.query_id;
    out.text = text;
    out.char_len = static_cast<std::int64_t>(out.text.size());
    return out;
}

GenerationRecord Refiner::answer(const QueryRecord& query,
                                 const std::optional<RefinementOutput>& context) {
    const bool closed_book = !context.has_value();
    const auto& tmpl = templates_.get(closed_book ? "answer_closed_book" : "answer_with_context");

    ChatRequest request;
    request.backend_id = options_.backend_id;
    request.model = options_.model;
    if (!tmpl.system.empty()) {
        request.messages.push_back({"system", tmpl.system});
    }
    std::map<std::string, std::string> slots = {{"query", query.question}};
    if (!closed_book) {
        slots["documents"] = context->text;
    }
    request.messages.push_back({"user", render_slots(tmpl.user, slots)});
    request.temperature = options_.temperature;
    request.max_tokens = options_.max_tokens;
    request.seed_tag = "answer/" + query.query_id + "#0";

    const auto response = gateway_.complete(request);

    GenerationRecord record;
    record.query_id = query.query_id;
    record.method = closed_book ? "closed_book" : to_string(context->method);
    record.answer = trim(response.completions.front());
    if (!closed_book) {
        record.refinement_text = context->text;
        record.refinement_len = context->char_len;
        record.empty_context = context->text.empty();
    }
    return record;
}

}  // namespace forge
