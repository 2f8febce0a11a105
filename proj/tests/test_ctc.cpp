#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dust/ctc.hpp"
#include "dust/rng.hpp"

#include "ctc_oracle.hpp"

using namespace dust;

namespace {

LogProbLattice uniform_lattice(std::size_t T, std::size_t V) {
    Matrix logits(T, V, 0.0);
    return log_softmax(logits);
}

LogProbLattice random_lattice(std::size_t T, std::size_t V, SeededRng& rng) {
    Matrix logits(T, V);
    for (auto& v : logits.data) v = rng.uniform(-2.0, 2.0);
    return log_softmax(logits);
}

} // namespace

TEST_CASE("lattice rows normalize") {
    SeededRng rng(7);
    auto lat = random_lattice(5, 4, rng);
    lat.validate();
}

TEST_CASE("ctc loss, single-frame single-path") {
    auto lat = uniform_lattice(1, 2);
    auto [loss, grad] = ctc_loss_and_grad(lat, {1});
    CHECK(loss == Catch::Approx(-std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("ctc loss, two-frame enumeration") {
    // alignments collapsing to "a": a-, -a, aa -> p = 3 * 0.25
    auto lat = uniform_lattice(2, 2);
    auto [loss, grad] = ctc_loss_and_grad(lat, {1});
    CHECK(loss == Catch::Approx(-std::log(0.75)).epsilon(1e-12));
}

TEST_CASE("ctc loss matches exhaustive alignment oracle") {
    SeededRng rng(42);
    for (int trial = 0; trial < 60; ++trial) {
        std::size_t T = 1 + rng.uniform_int(6);
        std::size_t V = 2 + rng.uniform_int(3);
        auto lat = random_lattice(T, V, rng);
        std::size_t len = 1 + rng.uniform_int(std::min<std::size_t>(T, 3));
        std::vector<int> target;
        for (std::size_t i = 0; i < len; ++i) target.push_back(1 + int(rng.uniform_int(V - 1)));

        double p_oracle = oracle::labeling_probability(lat, target);
        if (p_oracle == 0.0) {
            CHECK_THROWS_AS(ctc_loss_and_grad(lat, target), Error);
            continue;
        }
        auto [loss, grad] = ctc_loss_and_grad(lat, target);
        CHECK(std::exp(-loss) == Catch::Approx(p_oracle).margin(1e-8));
    }
}

TEST_CASE("oracle marginals over all labelings sum to one") {
    SeededRng rng(5);
    auto lat = random_lattice(4, 3, rng);
    double total = 0.0;
    for (const auto& [labeling, p] : oracle::labeling_marginals(lat)) total += p;
    CHECK(total == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("ctc gradient matches finite differences on logits") {
    SeededRng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        std::size_t T = 3 + rng.uniform_int(3);
        std::size_t V = 3;
        Matrix logits(T, V);
        for (auto& v : logits.data) v = rng.uniform(-1.5, 1.5);
        std::vector<int> target{1, 2};

        auto [loss, grad] = ctc_loss_and_grad(log_softmax(logits), target);
        const double eps = 1e-6;
        for (std::size_t i = 0; i < logits.data.size(); ++i) {
            Matrix plus = logits, minus = logits;
            plus.data[i] += eps;
            minus.data[i] -= eps;
            double lp = ctc_loss_and_grad(log_softmax(plus), target).first;
            double lm = ctc_loss_and_grad(log_softmax(minus), target).first;
            double fd = (lp - lm) / (2.0 * eps);
            double denom = std::max(1e-3, std::fabs(fd));
            CHECK(std::fabs(grad.data[i] - fd) / denom < 1e-5);
        }
    }
}

TEST_CASE("ctc rejects infeasible targets") {
    auto lat = uniform_lattice(2, 3);
    CHECK_THROWS_WITH(ctc_loss_and_grad(lat, {1, 1, 2}),
                      Catch::Matchers::ContainsSubstring("infeasible"));
    // repeated symbol needs a blank frame between: "aa" needs T >= 3
    CHECK_THROWS_AS(ctc_loss_and_grad(lat, {1, 1}), Error);
}

TEST_CASE("greedy decode collapse rules") {
    // all frames argmax blank -> empty
    Matrix logits(3, 2, 0.0);
    for (std::size_t t = 0; t < 3; ++t) logits(t, 0) = 5.0;
    CHECK(greedy_decode(log_softmax(logits)).tokens.empty());

    // argmax sequence a a blank b -> "ab"
    Matrix l2(4, 3, 0.0);
    l2(0, 1) = 5.0;
    l2(1, 1) = 5.0;
    l2(2, 0) = 5.0;
    l2(3, 2) = 5.0;
    auto hyp = greedy_decode(log_softmax(l2));
    CHECK(hyp.tokens == std::vector<int>{1, 2});
}

TEST_CASE("greedy can lose to the marginal argmax; wide beam does not") {
    // Classic 3-frame construction: blank is the per-frame argmax but the
    // labeling "a" accumulates more total mass than the empty labeling.
    Matrix logits(3, 2, 0.0);
    for (std::size_t t = 0; t < 3; ++t) {
        logits(t, 0) = std::log(0.52);
        logits(t, 1) = std::log(0.48);
    }
    auto lat = log_softmax(logits);
    auto greedy = greedy_decode(lat);
    CHECK(greedy.tokens.empty());

    auto best = oracle::best_labeling(lat);
    CHECK_FALSE(best.empty());
    auto ranked = beam_search(lat, 64);
    CHECK(ranked.front().tokens == best);
}

TEST_CASE("beam width 1 equals greedy on a unimodal lattice") {
    Matrix logits(4, 3, 0.0);
    logits(0, 1) = 6.0;
    logits(1, 0) = 6.0;
    logits(2, 2) = 6.0;
    logits(3, 2) = 6.0;
    auto lat = log_softmax(logits);
    auto ranked = beam_search(lat, 1);
    CHECK(ranked.front().tokens == greedy_decode(lat).tokens);
}

TEST_CASE("exhaustive beam equals oracle argmax") {
    SeededRng rng(99);
    for (int trial = 0; trial < 30; ++trial) {
        std::size_t T = 1 + rng.uniform_int(5);
        std::size_t V = 2 + rng.uniform_int(3);
        auto lat = random_lattice(T, V, rng);
        auto ranked = beam_search(lat, 1024); // > count of all labelings
        CHECK(ranked.front().tokens == oracle::best_labeling(lat));

        double p_oracle = oracle::labeling_probability(lat, ranked.front().tokens);
        CHECK(std::exp(ranked.front().score) == Catch::Approx(p_oracle).margin(1e-9));
    }
}

TEST_CASE("beam ranking invariant under per-row logit shifts") {
    SeededRng rng(3);
    Matrix logits(5, 4);
    for (auto& v : logits.data) v = rng.uniform(-2.0, 2.0);
    auto base = beam_search(log_softmax(logits), 8);

    Matrix shifted = logits;
    for (std::size_t t = 0; t < shifted.rows; ++t) {
        double c = rng.uniform(-3.0, 3.0);
        for (std::size_t k = 0; k < shifted.cols; ++k) shifted(t, k) += c;
    }
    auto moved = beam_search(log_softmax(shifted), 8);
    REQUIRE(moved.size() == base.size());
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(moved[i].tokens == base[i].tokens);
}

TEST_CASE("top-1 score is monotone in beam width") {
    SeededRng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        auto lat = random_lattice(5, 4, rng);
        double prev = -1e300;
        for (std::size_t w : {1, 2, 4, 16, 256}) {
            double top = beam_search(lat, w).front().score;
            CHECK(top >= prev - 1e-12);
            prev = top;
        }
    }
}
