#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "forge/corpus.hpp"

namespace forge {

struct PromptTemplate {
    std::string name;
    std::string system;
    std::string user;
    std::string doc_separator = "\n\n";
};

/// Replace {slot} placeholders in a template string. Every placeholder must
/// have an entry in `slots`; a placeholder without one is an error (braces
/// inside substituted values are never re-scanned).
std::string render_slots(std::string_view text, const std::map<std::string, std::string>& slots);

/// Prompt-facing document block: "[{rank}] {title}: {text}", joined by the
/// separator. Untitled documents render as "[{rank}] {text}".
std::string render_documents(const std::vector<ScoredDocument>& docs, std::string_view separator);

/// Named template collection. Shipped defaults cover rerank, summary, cot,
/// reflect, answer_with_context and answer_closed_book; a template file
/// (JSON, {name: {system, user, doc_separator}}) overrides any subset.
class TemplateSet {
public:
    static TemplateSet defaults();
    static TemplateSet load(const std::filesystem::path& path);

    const PromptTemplate& get(std::string_view name) const;
    bool has(std::string_view name) const;

private:
    std::map<std::string, PromptTemplate, std::less<>> templates_;
};

}  // namespace forge
