#include "forge/templates.hpp"

#include <nlohmann/json.hpp>

#include "forge/util.hpp"

namespace forge {

using nlohmann::json;

namespace {

bool is_slot_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

PromptTemplate make(std::string name, std::string system, std::string user) {
    PromptTemplate t;
    t.name = std::move(name);
    t.system = std::move(system);
    t.user = std::move(user);
    return t;
}

}  // namespace

std::string render_slots(std::string_view text, const std::map<std::string, std::string>& slots) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '{') {
            out.push_back(text[i]);
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < text.size() && is_slot_char(text[j])) {
            ++j;
        }
        if (j >= text.size() || text[j] != '}' || j == i + 1) {
            // Not a slot reference; emit the brace literally.
            out.push_back(text[i]);
            ++i;
            continue;
        }
        const std::string name(text.substr(i + 1, j - i - 1));
        auto it = slots.find(name);
        if (it == slots.end()) {
            throw ConfigError("template references unfilled slot {" + name + "}");
        }
        out += it->second;
        i = j + 1;
    }
    return out;
}

std::string render_documents(const std::vector<ScoredDocument>& docs, std::string_view separator) {
    std::string out;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (i > 0) {
            out += separator;
        }
        out += "[" + std::to_string(docs[i].rank) + "] ";
        if (!docs[i].title.empty()) {
            out += docs[i].title + ": ";
        }
        out += docs[i].text;
    }
    return out;
}

TemplateSet TemplateSet::defaults() {
    TemplateSet set;
    auto add = [&](PromptTemplate t) { set.templates_[t.name] = std::move(t); };

    add(make("rerank",
             "You judge whether a document is relevant to a question.",
             "Question: {query}\n\nDocument:\n{document}\n\n"
             "Is this document relevant to the question? Answer YES or NO only."));
    add(make("summary",
             "You extract question-relevant information from documents.",
             "Question: {query}\n\nDocuments:\n{documents}\n\n"
             "Write a concise summary of the information in the documents that is relevant to "
             "the question."));
    add(make("cot",
             "You reason carefully over the provided documents.",
             "Question: {query}\n\nDocuments:\n{documents}\n\n"
             "Think step by step over the documents and reason toward the answer to the "
             "question."));
    add(make("reflect",
             "You answer questions from your own earlier reasoning.",
             "Question: {query}\n\nReasoning:\n{cot}\n\n"
             "Based only on this reasoning, state the answer to the question directly."));
    add(make("answer_with_context",
             "You answer questions using the provided context.",
             "Context:\n{documents}\n\nQuestion: {query}\n\nAnswer the question."));
    add(make("answer_closed_book",
             "You answer questions from your own knowledge.",
             "Question: {query}\n\nAnswer the question."));
    return set;
}

TemplateSet TemplateSet::load(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& ex) {
        throw ConfigError("invalid template file " + path.string() + ": " + ex.what());
    }
    // Start from defaults so a file may override any subset.
    TemplateSet set = defaults();
    for (const auto& [name, body] : j.items()) {
        PromptTemplate t;
        t.name = name;
        t.system = body.value("system", "");
        if (!body.contains("user") || !body["user"].is_string()) {
            throw ConfigError("template \"" + name + "\" missing user text");
        }
        t.user = body["user"].get<std::string>();
        t.doc_separator = body.value("doc_separator", "\n\n");
        set.templates_[name] = std::move(t);
    }
    return set;
}

const PromptTemplate& TemplateSet::get(std::string_view name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) {
        throw ConfigError("no template named \"" + std::string(name) + "\"");
    }
    return it->second;
}

bool TemplateSet::has(std::string_view name) const {
    return templates_.find(name) != templates_.end();
}

}  // namespace forge
