#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "forge/config.hpp"
#include "forge/refine.hpp"

namespace forge {

// Exit codes shared by every command: 0 success, 2 configuration/input
// error, 3 empty-result condition, 4 backend failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitEmpty = 3;
inline constexpr int kExitBackend = 4;

int cmd_index(const RunConfig& config);

int cmd_refine(const RunConfig& config, RefineMethod method);

/// Answer every query from its refinement file, or closed-book when
/// `closed_book` is set. Backend failures quarantine the partial output
/// under out_dir/failed and exit 4.
int cmd_generate(const RunConfig& config, RefineMethod method, bool closed_book);

int cmd_build_dpo(const RunConfig& config);

struct EvaluateInputs {
    std::vector<std::filesystem::path> record_files;
    std::filesystem::path closed_book_file;
};

int cmd_evaluate(const RunConfig& config, const EvaluateInputs& inputs);

int cmd_consistency(const RunConfig& config, RefineMethod method, int n_samples,
                    double temperature);

/// Re-render report.txt from an existing report.json; optionally run batch
/// DPO diagnostics over a CSV of log-probabilities.
int cmd_report(const RunConfig& config, const std::optional<std::filesystem::path>& dpo_csv);

}  // namespace forge
