#pragma once

#include <array>
#include <filesystem>
#include <vector>

namespace forge {

/// Sequence-level log-probabilities (sums of token log-probs, in nats) for
/// one preference pair under the policy and the frozen reference model.
struct DpoInputs {
    double logp_policy_chosen = 0.0;
    double logp_ref_chosen = 0.0;
    double logp_policy_rejected = 0.0;
    double logp_ref_rejected = 0.0;
    double beta = 0.1;
};

struct DpoResult {
    double loss = 0.0;
    double margin = 0.0;
    // Partials w.r.t. (logp_policy_chosen, logp_ref_chosen,
    // logp_policy_rejected, logp_ref_rejected). The reference model is
    // frozen, so its partials are identically 0.
    std::array<double, 4> grad{};
};

/// DPO loss for one pair:
///   margin = beta * ((lp_c - lr_c) - (lp_r - lr_r))
///   loss   = -log(sigmoid(margin)) = softplus(-margin)
/// computed in the overflow-safe form max(-m, 0) + log1p(exp(-|m|)).
DpoResult dpo_loss(const DpoInputs& inputs);

/// Max relative error between the analytic policy gradients and central
/// finite differences with step eps. eps must be in (0, 1e-3].
double dpo_grad_check(const DpoInputs& inputs, double eps);

/// Fraction of pairs the policy already prefers (margin strictly > 0).
double pair_preference_rate(const std::vector<DpoInputs>& pairs);

/// CSV intake for batch diagnostics. Header row must name the DpoInputs
/// fields (any order): logp_policy_chosen, logp_ref_chosen,
/// logp_policy_rejected, logp_ref_rejected, beta.
std::vector<DpoInputs> read_dpo_csv(const std::filesystem::path& path);

}  // namespace forge
