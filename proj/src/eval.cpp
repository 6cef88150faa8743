#include "forge/eval.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include "forge/metrics.hpp"
#include "forge/text.hpp"
#include "forge/util.hpp"

namespace forge {

using nlohmann::json;

ScenarioAssignment assign_scenarios(
    const std::vector<QueryRecord>& queries,
    const std::map<std::string, std::vector<ScoredDocument>>& retrieved_docs,
    const std::vector<GenerationRecord>& closed_book_records) {
    std::map<std::string, const GenerationRecord*> closed_book;
    for (const auto& record : closed_book_records) {
        closed_book[record.query_id] = &record;
    }

    ScenarioAssignment assignment;
    for (const auto& query : queries) {
        bool has = false;
        auto docs_it = retrieved_docs.find(query.query_id);
        if (docs_it != retrieved_docs.end()) {
            for (const auto& doc : docs_it->second) {
                if (contains_normalized(doc.text, query.gold_answers)) {
                    has = true;
                    break;
                }
            }
        }
        assignment.has_answer[query.query_id] = has;

        auto cb_it = closed_book.find(query.query_id);
        if (cb_it == closed_book.end()) {
            throw InputError("missing closed-book record for query \"" + query.query_id + "\"");
        }
        assignment.internal_knowledge[query.query_id] =
            accuracy(cb_it->second->answer, query.gold_answers);
    }
    return assignment;
}

std::string to_string(HeadlineMetric metric) {
    switch (metric) {
        case HeadlineMetric::accuracy: return "accuracy";
        case HeadlineMetric::string_em: return "string_em";
        case HeadlineMetric::rouge_l: return "rouge_l";
    }
    return "accuracy";
}

HeadlineMetric headline_metric_from_string(std::string_view name) {
    if (name == "accuracy") return HeadlineMetric::accuracy;
    if (name == "string_em") return HeadlineMetric::string_em;
    if (name == "rouge_l") return HeadlineMetric::rouge_l;
    throw ConfigError("unknown metric \"" + std::string(name) + "\"");
}

namespace {

constexpr const char* kScenarios[] = {"all", "has_answer", "miss_answer", "internal_knowledge"};

struct Accumulator {
    double total = 0.0;
    std::size_t count = 0;
};

}  // namespace

EvalReport build_report(std::vector<GenerationRecord>& records,
                        const std::vector<QueryRecord>& queries,
                        const ScenarioAssignment& assignment,
                        const std::map<std::string, HeadlineMetric>& dataset_metric_map,
                        const std::string& config_digest) {
    std::map<std::string, const QueryRecord*> by_id;
    for (const auto& query : queries) {
        by_id[query.query_id] = &query;
    }

    // method -> dataset -> scenario -> accumulator
    std::map<std::string, std::map<std::string, std::map<std::string, Accumulator>>> acc;

    for (auto& record : records) {
        auto query_it = by_id.find(record.query_id);
        if (query_it == by_id.end()) {
            throw InputError("generation record for unknown query \"" + record.query_id + "\"");
        }
        const QueryRecord& query = *query_it->second;
        auto metric_it = dataset_metric_map.find(query.dataset);
        if (metric_it == dataset_metric_map.end()) {
            throw ConfigError("dataset \"" + query.dataset + "\" has no metric mapping");
        }

        double score = 0.0;
        switch (metric_it->second) {
            case HeadlineMetric::accuracy: {
                const bool ok = accuracy(record.answer, query.gold_answers);
                record.correct = ok;
                score = ok ? 1.0 : 0.0;
                break;
            }
            case HeadlineMetric::string_em:
                score = string_em(record.answer, query.answer_sets);
                break;
            case HeadlineMetric::rouge_l:
                score = rouge_l_multi(record.answer, query.gold_answers).f1;
                break;
        }

        auto has_it = assignment.has_answer.find(record.query_id);
        auto internal_it = assignment.internal_knowledge.find(record.query_id);
        if (has_it == assignment.has_answer.end() ||
            internal_it == assignment.internal_knowledge.end()) {
            throw InputError("query \"" + record.query_id + "\" missing scenario assignment");
        }

        auto& dataset_acc = acc[record.method][query.dataset];
        auto add = [&](const char* scenario) {
            dataset_acc[scenario].total += score;
            dataset_acc[scenario].count += 1;
        };
        add("all");
        add(has_it->second ? "has_answer" : "miss_answer");
        if (internal_it->second) {
            add("internal_knowledge");
        }
    }

    EvalReport report;
    report.dataset_metric = dataset_metric_map;
    report.config_digest = config_digest;
    for (const auto& [method, datasets] : acc) {
        for (const auto& [dataset, scenarios] : datasets) {
            for (const char* scenario : kScenarios) {
                ReportCell cell;
                auto it = scenarios.find(scenario);
                if (it != scenarios.end() && it->second.count > 0) {
                    cell.value = 100.0 * it->second.total / static_cast<double>(it->second.count);
                    cell.count = it->second.count;
                }
                report.cells[method][dataset][scenario] = cell;
            }
        }
        // Macro-average across datasets; empty cells are excluded.
        for (const char* scenario : kScenarios) {
            double total = 0.0;
            std::size_t n = 0;
            std::size_t records_covered = 0;
            for (const auto& [dataset, scenarios] : report.cells[method]) {
                const auto& cell = scenarios.at(scenario);
                if (cell.value.has_value()) {
                    total += *cell.value;
                    ++n;
                    records_covered += cell.count;
                }
            }
            ReportCell avg;
            if (n > 0) {
                avg.value = total / static_cast<double>(n);
                avg.count = records_covered;
            }
            report.averages[method][scenario] = avg;
        }
    }
    return report;
}

json EvalReport::to_json() const {
    json cells_json = json::object();
    for (const auto& [method, datasets] : cells) {
        json datasets_json = json::object();
        for (const auto& [dataset, scenarios] : datasets) {
            json scenarios_json = json::object();
            for (const auto& [scenario, cell] : scenarios) {
                scenarios_json[scenario] = {
                    {"value", cell.value.has_value() ? json(*cell.value) : json(nullptr)},
                    {"count", cell.count}};
            }
            datasets_json[dataset] = std::move(scenarios_json);
        }
        cells_json[method] = std::move(datasets_json);
    }
    json averages_json = json::object();
    for (const auto& [method, scenarios] : averages) {
        json scenarios_json = json::object();
        for (const auto& [scenario, cell] : scenarios) {
            scenarios_json[scenario] = {
                {"value", cell.value.has_value() ? json(*cell.value) : json(nullptr)},
                {"count", cell.count}};
        }
        averages_json[method] = std::move(scenarios_json);
    }
    json metric_json = json::object();
    for (const auto& [dataset, metric] : dataset_metric) {
        metric_json[dataset] = to_string(metric);
    }
    return {{"cells", std::move(cells_json)},
            {"averages", std::move(averages_json)},
            {"dataset_metric", std::move(metric_json)},
            {"config_digest", config_digest}};
}

EvalReport EvalReport::from_json(const json& j) {
    auto parse_cell = [](const json& cell_json) {
        ReportCell cell;
        if (!cell_json.at("value").is_null()) {
            cell.value = cell_json["value"].get<double>();
        }
        cell.count = cell_json.value("count", std::size_t{0});
        return cell;
    };
    EvalReport report;
    for (const auto& [method, datasets] : j.at("cells").items()) {
        for (const auto& [dataset, scenarios] : datasets.items()) {
            for (const auto& [scenario, cell] : scenarios.items()) {
                report.cells[method][dataset][scenario] = parse_cell(cell);
            }
        }
    }
    for (const auto& [method, scenarios] : j.at("averages").items()) {
        for (const auto& [scenario, cell] : scenarios.items()) {
            report.averages[method][scenario] = parse_cell(cell);
        }
    }
    for (const auto& [dataset, metric] : j.at("dataset_metric").items()) {
        report.dataset_metric[dataset] = headline_metric_from_string(metric.get<std::string>());
    }
    report.config_digest = j.value("config_digest", "");
    return report;
}

std::string EvalReport::to_text_table() const {
    std::set<std::string> datasets;
    for (const auto& [method, per_dataset] : cells) {
        for (const auto& [dataset, _] : per_dataset) {
            datasets.insert(dataset);
        }
    }

    std::ostringstream out;
    auto fmt = [](const ReportCell& cell) {
        if (!cell.value.has_value()) {
            return std::string("-");
        }
        std::ostringstream s;
        s << std::fixed << std::setprecision(2) << *cell.value;
        return s.str();
    };

    for (const char* scenario : kScenarios) {
        out << "== " << scenario << " ==\n";
        out << std::left << std::setw(14) << "method";
        for (const auto& dataset : datasets) {
            const auto metric_it = dataset_metric.find(dataset);
            const std::string header =
                dataset + (metric_it != dataset_metric.end()
                               ? " (" + to_string(metric_it->second) + ")"
                               : "");
            out << std::setw(22) << header;
        }
        out << std::setw(10) << "Avg." << '\n';
        for (const auto& [method, per_dataset] : cells) {
            out << std::left << std::setw(14) << method;
            for (const auto& dataset : datasets) {
                auto it = per_dataset.find(dataset);
                out << std::setw(22)
                    << (it != per_dataset.end() ? fmt(it->second.at(scenario)) : "-");
            }
            out << std::setw(10) << fmt(averages.at(method).at(scenario)) << '\n';
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace forge
