#include "forge/records.hpp"

#include <unordered_set>

#include "forge/jsonl.hpp"
#include "forge/text.hpp"
#include "forge/util.hpp"

namespace forge {

std::string to_string(TaskType task) {
    switch (task) {
        case TaskType::open_qa: return "open_qa";
        case TaskType::reasoning: return "reasoning";
        case TaskType::long_form: return "long_form";
    }
    return "open_qa";
}

TaskType task_from_string(std::string_view name) {
    if (name == "open_qa") return TaskType::open_qa;
    if (name == "reasoning") return TaskType::reasoning;
    if (name == "long_form") return TaskType::long_form;
    throw InputError("unknown task type \"" + std::string(name) + "\"");
}

std::vector<QueryRecord> load_queries_jsonl(const std::filesystem::path& path) {
    std::vector<QueryRecord> queries;
    std::unordered_set<std::string> seen;
    for (const auto& row : read_jsonl(path)) {
        QueryRecord q;
        if (!row.contains("query_id") || !row["query_id"].is_string()) {
            throw InputError(path.string() + ": query row missing string query_id");
        }
        q.query_id = row["query_id"].get<std::string>();
        if (!seen.insert(q.query_id).second) {
            throw InputError("duplicate query_id \"" + q.query_id + "\"");
        }
        q.question = row.value("question", "");
        if (trim(q.question).empty()) {
            throw InputError("query \"" + q.query_id + "\" has empty question");
        }
        if (!row.contains("answers") || !row["answers"].is_array() || row["answers"].empty()) {
            throw InputError("query \"" + q.query_id + "\" has no answers");
        }
        for (const auto& entry : row["answers"]) {
            if (entry.is_string()) {
                q.gold_answers.push_back(entry.get<std::string>());
            } else if (entry.is_array()) {
                std::vector<std::string> set;
                for (const auto& alias : entry) {
                    set.push_back(alias.get<std::string>());
                    q.gold_answers.push_back(alias.get<std::string>());
                }
                if (set.empty()) {
                    throw InputError("query \"" + q.query_id + "\" has an empty answer set");
                }
                q.answer_sets.push_back(std::move(set));
            } else {
                throw InputError("query \"" + q.query_id + "\" has a non-string answer");
            }
        }
        if (q.answer_sets.empty()) {
            // Flat alias list: one set, any alias satisfies it.
            q.answer_sets.push_back(q.gold_answers);
        }
        for (const auto& alias : q.gold_answers) {
            if (normalize_answer(alias).empty()) {
                throw InputError("query \"" + q.query_id +
                                 "\" has an answer that is empty after normalization");
            }
        }
        if (row.contains("task")) {
            q.task = task_from_string(row["task"].get<std::string>());
        }
        q.dataset = row.value("dataset", "default");
        queries.push_back(std::move(q));
    }
    if (queries.empty()) {
        throw InputError("empty query dataset: " + path.string());
    }
    return queries;
}

}  // namespace forge
