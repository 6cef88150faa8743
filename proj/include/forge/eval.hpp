#pragma once

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/records.hpp"
#include "forge/refine.hpp"

namespace forge {

/// Test-scenario partition. has_answer/miss_answer partition the query set
/// by whether any retrieved context document contains a gold alias;
/// internal_knowledge flags queries the closed-book model answers correctly
/// and is independent of the partition.
struct ScenarioAssignment {
    std::map<std::string, bool> has_answer;          // query_id -> in Has-Answer
    std::map<std::string, bool> internal_knowledge;  // query_id -> closed-book correct
};

ScenarioAssignment assign_scenarios(
    const std::vector<QueryRecord>& queries,
    const std::map<std::string, std::vector<ScoredDocument>>& retrieved_docs,
    const std::vector<GenerationRecord>& closed_book_records);

enum class HeadlineMetric { accuracy, string_em, rouge_l };

std::string to_string(HeadlineMetric metric);
HeadlineMetric headline_metric_from_string(std::string_view name);

/// One aggregate cell: a percent value over `count` records, or null when
/// the cell is empty.
struct ReportCell {
    std::optional<double> value;  // percent, [0,100]
    std::size_t count = 0;
};

/// Per-(method, dataset, scenario) metric aggregates shaped like the paper's
/// tables, plus a macro-average across datasets per scenario.
struct EvalReport {
    // method -> dataset -> scenario -> cell; scenario is one of
    // "all", "has_answer", "miss_answer", "internal_knowledge".
    std::map<std::string, std::map<std::string, std::map<std::string, ReportCell>>> cells;
    std::map<std::string, HeadlineMetric> dataset_metric;
    std::map<std::string, std::map<std::string, ReportCell>> averages;  // method -> scenario
    std::string config_digest;

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
    std::string to_text_table() const;
};

/// Score every generation record with its dataset's headline metric and
/// aggregate per scenario. Every dataset present in the records must be
/// mapped. Records' `correct` flags are populated for accuracy datasets.
EvalReport build_report(std::vector<GenerationRecord>& records,
                        const std::vector<QueryRecord>& queries,
                        const ScenarioAssignment& assignment,
                        const std::map<std::string, HeadlineMetric>& dataset_metric_map,
                        const std::string& config_digest);

}  // namespace forge
