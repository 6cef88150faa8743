#include "forge/dpo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "forge/util.hpp"

namespace forge {

namespace {

void check_finite(const DpoInputs& in) {
    if (!std::isfinite(in.logp_policy_chosen) || !std::isfinite(in.logp_ref_chosen) ||
        !std::isfinite(in.logp_policy_rejected) || !std::isfinite(in.logp_ref_rejected)) {
        throw InputError("dpo inputs must be finite");
    }
    if (!std::isfinite(in.beta) || in.beta <= 0.0) {
        throw InputError("dpo beta must be finite and > 0");
    }
}

double softplus(double x) {
    // max(x, 0) + log1p(exp(-|x|)); exact for |x| far beyond exp overflow.
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

DpoResult dpo_loss(const DpoInputs& inputs) {
    check_finite(inputs);
    const double delta_chosen = inputs.logp_policy_chosen - inputs.logp_ref_chosen;
    const double delta_rejected = inputs.logp_policy_rejected - inputs.logp_ref_rejected;
    const double margin = inputs.beta * (delta_chosen - delta_rejected);

    DpoResult result;
    result.margin = margin;
    result.loss = softplus(-margin);
    const double s = sigmoid(-margin);  // = 1 - sigmoid(margin)
    result.grad = {-inputs.beta * s, 0.0, inputs.beta * s, 0.0};
    return result;
}

double dpo_grad_check(const DpoInputs& inputs, double eps) {
    if (!(eps > 0.0) || eps > 1e-3) {
        throw InputError("dpo_grad_check eps must be in (0, 1e-3]");
    }
    const DpoResult analytic = dpo_loss(inputs);

    auto loss_at = [&](double dc, double dr) {
        DpoInputs perturbed = inputs;
        perturbed.logp_policy_chosen += dc;
        perturbed.logp_policy_rejected += dr;
        return dpo_loss(perturbed).loss;
    };

    const double fd_chosen = (loss_at(eps, 0.0) - loss_at(-eps, 0.0)) / (2.0 * eps);
    const double fd_rejected = (loss_at(0.0, eps) - loss_at(0.0, -eps)) / (2.0 * eps);

    auto rel_error = [](double analytic_g, double numeric_g) {
        const double scale = std::max({std::abs(analytic_g), std::abs(numeric_g), 1e-12});
        return std::abs(analytic_g - numeric_g) / scale;
    };
    return std::max(rel_error(analytic.grad[0], fd_chosen),
                    rel_error(analytic.grad[2], fd_rejected));
}

double pair_preference_rate(const std::vector<DpoInputs>& pairs) {
    if (pairs.empty()) {
        throw InputError("pair_preference_rate requires at least one pair");
    }
    std::size_t preferred = 0;
    for (const auto& pair : pairs) {
        if (dpo_loss(pair).margin > 0.0) {
            ++preferred;
        }
    }
    return static_cast<double>(preferred) / static_cast<double>(pairs.size());
}

std::vector<DpoInputs> read_dpo_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot read csv: " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw InputError("empty csv: " + path.string());
    }

    auto split = [](const std::string& row) {
        std::vector<std::string> cells;
        std::stringstream ss(row);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) {
                cell.pop_back();
            }
            std::size_t start = cell.find_first_not_of(' ');
            cells.push_back(start == std::string::npos ? "" : cell.substr(start));
        }
        return cells;
    };

    std::map<std::string, std::size_t> columns;
    const auto header = split(line);
    for (std::size_t i = 0; i < header.size(); ++i) {
        columns[header[i]] = i;
    }
    for (const char* required : {"logp_policy_chosen", "logp_ref_chosen", "logp_policy_rejected",
                                 "logp_ref_rejected", "beta"}) {
        if (!columns.count(required)) {
            throw InputError("csv missing column \"" + std::string(required) + "\"");
        }
    }

    std::vector<DpoInputs> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        const auto cells = split(line);
        auto value = [&](const char* name) {
            const std::size_t idx = columns[name];
            if (idx >= cells.size()) {
                throw InputError(path.string() + ":" + std::to_string(lineno) +
                                 ": missing value for " + name);
            }
            try {
                return std::stod(cells[idx]);
            } catch (const std::exception&) {
                throw InputError(path.string() + ":" + std::to_string(lineno) +
                                 ": bad number \"" + cells[idx] + "\"");
            }
        };
        DpoInputs in_row;
        in_row.logp_policy_chosen = value("logp_policy_chosen");
        in_row.logp_ref_chosen = value("logp_ref_chosen");
        in_row.logp_policy_rejected = value("logp_policy_rejected");
        in_row.logp_ref_rejected = value("logp_ref_rejected");
        in_row.beta = value("beta");
        check_finite(in_row);
        rows.push_back(in_row);
    }
    return rows;
}

}  // namespace forge
