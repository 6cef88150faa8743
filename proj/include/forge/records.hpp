#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

enum class TaskType { open_qa, reasoning, long_form };

std::string to_string(TaskType task);
TaskType task_from_string(std::string_view name);

/// A question with its gold answers; the unit of every pipeline stage.
///
/// The queries file carries "answers" either as a flat alias list (any alias
/// counts as correct) or as a list of alias lists (ASQA-style: one required
/// short answer per inner list). gold_answers is always the flattened view;
/// answer_sets preserves the grouping for String-EM.
struct QueryRecord {
    std::string query_id;
    std::string question;
    std::vector<std::string> gold_answers;
    std::vector<std::vector<std::string>> answer_sets;
    TaskType task = TaskType::open_qa;
    std::string dataset = "default";
};

/// Load a query dataset (JSON Lines: {"query_id","question","answers","task"}
/// plus optional "dataset").
std::vector<QueryRecord> load_queries_jsonl(const std::filesystem::path& path);

}  // namespace forge
