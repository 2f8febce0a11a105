#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "dust/rng.hpp"
#include "dust/textdist.hpp"

using namespace dust;

TEST_CASE("edit distance basics") {
    CHECK(edit_distance(std::string(""), std::string("")) == 0);
    CHECK(edit_distance(std::string("abc"), std::string("abc")) == 0);
    CHECK(edit_distance(std::string("abc"), std::string("")) == 3);
    CHECK(edit_distance(std::string(""), std::string("xy")) == 2);
    CHECK(edit_distance(std::string("kitten"), std::string("sitting")) == 3);
    CHECK(edit_distance(std::string("flaw"), std::string("lawn")) == 2);
    CHECK(edit_distance(std::vector<int>{1, 2, 3}, std::vector<int>{1, 3}) == 1);
}

TEST_CASE("edit distance is a metric") {
    SeededRng rng(8);
    auto random_word = [&](std::size_t max_len) {
        std::string s;
        std::size_t len = rng.uniform_int(max_len + 1);
        for (std::size_t i = 0; i < len; ++i) s.push_back(char('a' + rng.uniform_int(3)));
        return s;
    };
    for (int trial = 0; trial < 200; ++trial) {
        std::string a = random_word(6), b = random_word(6), c = random_word(6);
        std::size_t ab = edit_distance(a, b);
        CHECK(ab == edit_distance(b, a));
        CHECK((ab == 0) == (a == b));
        CHECK(ab <= edit_distance(a, c) + edit_distance(c, b));
        CHECK(ab <= std::max(a.size(), b.size()));
        CHECK(ab >= (a.size() > b.size() ? a.size() - b.size() : b.size() - a.size()));
    }
}

TEST_CASE("edit_ops breakdown sums to the distance") {
    SeededRng rng(15);
    auto random_seq = [&](std::size_t max_len) {
        std::vector<std::string> s;
        std::size_t len = rng.uniform_int(max_len + 1);
        for (std::size_t i = 0; i < len; ++i) s.push_back(std::string(1, char('a' + rng.uniform_int(3))));
        return s;
    };
    for (int trial = 0; trial < 100; ++trial) {
        auto ref = random_seq(7), hyp = random_seq(7);
        EditOps ops = edit_ops(ref, hyp);
        CHECK(ops.total() == edit_distance(ref, hyp));
    }
    // pure deletion / insertion cases
    std::vector<std::string> r{"a", "b", "c"}, h{"a", "c"};
    EditOps ops = edit_ops(r, h);
    CHECK(ops.deletions == 1);
    CHECK(ops.substitutions == 0);
    CHECK(ops.insertions == 0);
    ops = edit_ops(h, r);
    CHECK(ops.insertions == 1);
}

TEST_CASE("split_words drops empties") {
    auto w = split_words("ab_c__d_", '_');
    REQUIRE(w.size() == 3);
    CHECK(w[0] == "ab");
    CHECK(w[1] == "c");
    CHECK(w[2] == "d");
    CHECK(split_words("", '_').empty());
    CHECK(split_words("___", '_').empty());
}

TEST_CASE("wer/cer pooled over the corpus") {
    // ref "ab_cd" (2 words, 5 chars), hyp "ab_ce": 1 word sub, 1 char sub
    // ref "x" (1 word, 1 char), hyp "x": perfect
    std::vector<std::string> refs{"ab_cd", "x"};
    std::vector<std::string> hyps{"ab_ce", "x"};
    EvalReport rep = wer_cer(hyps, refs, '_');
    CHECK(rep.ref_words == 3);
    CHECK(rep.ref_chars == 6);
    CHECK(rep.substitutions == 1);
    CHECK(rep.wer == Catch::Approx(100.0 / 3.0));
    CHECK(rep.cer == Catch::Approx(100.0 / 6.0));
    CHECK(rep.utterance_count == 2);

    CHECK_THROWS_AS(wer_cer({"a"}, {"a", "b"}, '_'), Error);
    CHECK_THROWS_AS(wer_cer({""}, {""}, '_'), Error);
}

TEST_CASE("wer pooling differs from averaging per-utterance rates") {
    // utterance 1: 1 error / 1 word; utterance 2: 0 errors / 9 words.
    std::vector<std::string> refs{"a", "b_c_d_e_f_g_a_b_c"};
    std::vector<std::string> hyps{"b", "b_c_d_e_f_g_a_b_c"};
    EvalReport rep = wer_cer(hyps, refs, '_');
    CHECK(rep.wer == Catch::Approx(10.0)); // 1/10 pooled, not (100+0)/2
}

TEST_CASE("eval report json round trip") {
    std::vector<std::string> refs{"ab_cd", "x"};
    std::vector<std::string> hyps{"ab_ce", "xy"};
    EvalReport rep = wer_cer(hyps, refs, '_');
    EvalReport back = EvalReport::from_json(rep.to_json());
    CHECK(back.substitutions == rep.substitutions);
    CHECK(back.insertions == rep.insertions);
    CHECK(back.deletions == rep.deletions);
    CHECK(back.ref_words == rep.ref_words);
    CHECK(back.ref_chars == rep.ref_chars);
    CHECK(back.utterance_count == rep.utterance_count);
    CHECK(std::fabs(back.wer - rep.wer) < 0.005 + 1e-12); // stored at 2 decimals
    CHECK(std::fabs(back.cer - rep.cer) < 0.005 + 1e-12);
}

TEST_CASE("word error recovery rate") {
    CHECK(werr(38.3, 22.3, 19.7) == Catch::Approx(86.02).margin(0.005));
    CHECK(werr(38.3, 31.9, 19.7) == Catch::Approx(34.41).margin(0.005));
    CHECK(werr(114.2, 44.0, 19.7) == Catch::Approx(74.3).margin(0.05));
    CHECK(werr(40.0, 40.0, 20.0) == 0.0);
    CHECK(werr(40.0, 20.0, 20.0) == 100.0);
    CHECK(werr(40.0, 15.0, 20.0) > 100.0); // beating the topline is legal
    CHECK(werr(40.0, 45.0, 20.0) < 0.0);   // getting worse is negative
    CHECK_THROWS_AS(werr(30.0, 25.0, 30.0), Error);
}

TEST_CASE("nine-language recovery average reproduces the published table") {
    // baseline / model / topline WER triplets
    const double rows[9][3] = {
        {119.1, 12.8, 17.6}, {114.2, 38.3, 19.7}, {106.0, 26.7, 11.1},
        {99.5, 30.3, 17.1},  {111.9, 34.2, 16.4}, {99.5, 22.9, 7.9},
        {107.0, 34.2, 20.4}, {108.8, 39.1, 21.7}, {112.0, 41.6, 37.9},
    };
    double sum = 0.0;
    for (const auto& r : rows) sum += werr(r[0], r[1], r[2]);
    CHECK(sum / 9.0 == Catch::Approx(86.3).margin(0.1));
}
