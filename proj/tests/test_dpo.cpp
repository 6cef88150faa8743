#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "forge/dpo.hpp"
#include "forge/util.hpp"

#include "support/test_support.hpp"

using namespace forge;

namespace {

DpoInputs inputs(double lpc, double lrc, double lpr, double lrr, double beta = 0.1) {
    return {lpc, lrc, lpr, lrr, beta};
}

// High-precision reference: softplus in long double straight from the
// definition -log(sigmoid(m)) = log(1 + exp(-m)).
long double softplus_oracle(long double x) {
    if (x > 0) {
        return x + std::log1p(std::exp(-x));
    }
    return std::log1p(std::exp(x));
}

}  // namespace

TEST_CASE("zero margin gives loss ln 2 and margin 0") {
    const auto result = dpo_loss(inputs(-3.5, -3.5, -7.0, -7.0));
    CHECK(result.margin == 0.0);
    CHECK(std::abs(result.loss - std::log(2.0)) < 1e-12);
}

TEST_CASE("worked margin: beta 0.1, deltas 2 and -1") {
    const auto result = dpo_loss(inputs(2.0, 0.0, -1.0, 0.0));
    CHECK(result.margin == doctest::Approx(0.3).epsilon(1e-15));
    const double expected = static_cast<double>(softplus_oracle(-0.3L));
    CHECK(result.loss == doctest::Approx(expected).epsilon(1e-14));
    CHECK(result.loss == doctest::Approx(0.554355244468527).epsilon(1e-12));
}

TEST_CASE("margin -800 stays finite via the stable branch") {
    const auto result = dpo_loss(inputs(0.0, 0.0, 8000.0, 0.0, 0.1));
    CHECK(result.margin == doctest::Approx(-800.0));
    CHECK(std::isfinite(result.loss));
    // softplus(800) = 800 + log1p(exp(-800)) = 800 exactly in double.
    CHECK(result.loss == doctest::Approx(800.0).epsilon(1e-13));
}

TEST_CASE("loss approaches 0 for a very large positive margin and is never negative") {
    const auto result = dpo_loss(inputs(8000.0, 0.0, 0.0, 0.0, 1.0));
    CHECK(result.loss >= 0.0);
    CHECK(result.loss < 1e-300);
}

TEST_CASE("analytic gradient at margin 0 is exactly -beta/2 on chosen") {
    const double beta = 0.1;
    const auto result = dpo_loss(inputs(1.0, 1.0, 2.0, 2.0, beta));
    CHECK(result.grad[0] == -beta / 2.0);
    CHECK(result.grad[2] == beta / 2.0);
    CHECK(result.grad[1] == 0.0);
    CHECK(result.grad[3] == 0.0);

    // Doubling beta doubles both policy gradients at margin 0.
    const auto doubled = dpo_loss(inputs(1.0, 1.0, 2.0, 2.0, 2.0 * beta));
    CHECK(doubled.grad[0] == 2.0 * result.grad[0]);
    CHECK(doubled.grad[2] == 2.0 * result.grad[2]);
}

TEST_CASE("gradient matches central finite differences over random inputs") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> logp(-20.0, 20.0);
    std::uniform_real_distribution<double> beta(0.02, 2.0);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        const auto in = inputs(logp(rng), logp(rng), logp(rng), logp(rng), beta(rng));
        worst = std::max(worst, dpo_grad_check(in, 1e-6));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("grad check validates eps") {
    CHECK_THROWS_AS(dpo_grad_check(inputs(0, 0, 0, 0), 0.0), InputError);
    CHECK_THROWS_AS(dpo_grad_check(inputs(0, 0, 0, 0), 1e-2), InputError);
}

TEST_CASE("ratio invariance: shifting policy and reference together is a no-op") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> logp(-15.0, 15.0);
    for (int i = 0; i < 100; ++i) {
        const auto base = inputs(logp(rng), logp(rng), logp(rng), logp(rng), 0.1);
        const double base_loss = dpo_loss(base).loss;

        auto shifted = base;
        const double c = logp(rng);
        shifted.logp_policy_chosen += c;
        shifted.logp_ref_chosen += c;
        CHECK(std::abs(dpo_loss(shifted).loss - base_loss) < 1e-12);

        shifted = base;
        shifted.logp_policy_rejected += c;
        shifted.logp_ref_rejected += c;
        CHECK(std::abs(dpo_loss(shifted).loss - base_loss) < 1e-12);
    }
}

TEST_CASE("loss is strictly monotone in the two policy log-probs") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> logp(-10.0, 10.0);
    std::uniform_real_distribution<double> delta(0.1, 3.0);
    for (int i = 0; i < 100; ++i) {
        const auto base = inputs(logp(rng), logp(rng), logp(rng), logp(rng), 0.3);
        const double base_loss = dpo_loss(base).loss;

        auto up = base;
        up.logp_policy_chosen += delta(rng);
        CHECK(dpo_loss(up).loss < base_loss);  // decreasing in chosen

        up = base;
        up.logp_policy_rejected += delta(rng);
        CHECK(dpo_loss(up).loss > base_loss);  // increasing in rejected
    }
}

TEST_CASE("non-finite inputs and bad beta are rejected") {
    CHECK_THROWS_AS(dpo_loss(inputs(std::nan(""), 0, 0, 0)), InputError);
    CHECK_THROWS_AS(dpo_loss(inputs(0, 0, 0, 0, 0.0)), InputError);
    CHECK_THROWS_AS(dpo_loss(inputs(0, 0, 0, 0, -0.1)), InputError);
}

TEST_CASE("pair preference rate counts strictly positive margins") {
    CHECK(pair_preference_rate({inputs(5, 0, 0, 0), inputs(3, 0, 1, 0)}) == 1.0);
    CHECK(pair_preference_rate({inputs(1, 0, 0, 0), inputs(0, 0, 1, 0)}) == 0.5);
    // Margin exactly 0 counts as not preferred.
    CHECK(pair_preference_rate({inputs(0, 0, 0, 0)}) == 0.0);
}

TEST_CASE("preference rate over symmetric random pairs is near one half") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> logp(-5.0, 5.0);
    std::vector<DpoInputs> pairs;
    for (int i = 0; i < 1000; ++i) {
        pairs.push_back(inputs(logp(rng), logp(rng), logp(rng), logp(rng)));
    }
    const double rate = pair_preference_rate(pairs);
    // 3 sigma binomial bounds around 0.5 at n=1000.
    CHECK(rate > 0.5 - 0.0475);
    CHECK(rate < 0.5 + 0.0475);
}

TEST_CASE("csv intake maps header columns in any order") {
    test::TempDir dir("dpo_csv");
    const auto path = dir / "pairs.csv";
    {
        std::ofstream out(path);
        out << "beta,logp_policy_rejected,logp_policy_chosen,logp_ref_chosen,logp_ref_rejected\n";
        out << "0.1, -1.0, 2.0, 0.0, 0.0\n";
        out << "0.5,0,0,0,0\n";
    }
    const auto rows = read_dpo_csv(path);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].logp_policy_chosen == 2.0);
    CHECK(rows[0].logp_policy_rejected == -1.0);
    CHECK(rows[0].beta == 0.1);
    CHECK(dpo_loss(rows[0]).margin == doctest::Approx(0.3));
    CHECK(dpo_loss(rows[1]).loss == doctest::Approx(std::log(2.0)));

    CHECK_THROWS_AS(read_dpo_csv(dir / "missing.csv"), InputError);
}

TEST_CASE("csv intake rejects missing columns and bad numbers") {
    test::TempDir dir("dpo_csv_bad");
    {
        std::ofstream out(dir / "no_beta.csv");
        out << "logp_policy_chosen,logp_ref_chosen,logp_policy_rejected,logp_ref_rejected\n";
    }
    CHECK_THROWS_WITH_AS(read_dpo_csv(dir / "no_beta.csv"), doctest::Contains("beta"),
                         InputError);
    {
        std::ofstream out(dir / "bad_num.csv");
        out << "logp_policy_chosen,logp_ref_chosen,logp_policy_rejected,logp_ref_rejected,beta\n";
        out << "x,0,0,0,0.1\n";
    }
    CHECK_THROWS_AS(read_dpo_csv(dir / "bad_num.csv"), InputError);
}
