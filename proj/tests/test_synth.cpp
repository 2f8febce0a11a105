#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "dust/synth.hpp"
#include "dust/textdist.hpp"

using namespace dust;

namespace {

LanguageParams small_params() {
    LanguageParams p;
    p.dim = 6;
    p.symbols = "abcd_";
    p.min_separation = 0.7;
    p.noise_sigma = 0.2;
    return p;
}

} // namespace

TEST_CASE("alphabet invariants") {
    Alphabet a("abc_", '_');
    CHECK(a.vocab_size() == 5);
    CHECK(a.index_of('a') == 1);
    CHECK(a.index_of('_') == 4);
    CHECK(a.char_at(1) == 'a');
    CHECK(a.encode("ab_") == std::vector<int>{1, 2, 4});
    CHECK(a.decode({1, 2, 4}) == "ab_");
    CHECK_THROWS_AS(a.index_of('z'), Error);
    CHECK_THROWS_AS(a.char_at(0), Error); // blank has no character
    CHECK_THROWS_AS(Alphabet("aab_", '_'), Error);
    CHECK_THROWS_AS(Alphabet("abc", '_'), Error);
}

TEST_CASE("language generation separates prototypes and is reproducible") {
    auto p = small_params();
    LanguageSpec lang1 = generate_language(17, p);
    LanguageSpec lang2 = generate_language(17, p);
    CHECK(lang1.prototypes == lang2.prototypes);
    REQUIRE(lang1.prototypes.size() == 5);
    CHECK(lang1.dim() == 6);

    const double min_sq = p.min_separation * p.min_separation;
    for (std::size_t i = 0; i < lang1.prototypes.size(); ++i)
        for (std::size_t j = i + 1; j < lang1.prototypes.size(); ++j) {
            double d = 0.0;
            for (std::size_t k = 0; k < 6; ++k) {
                double diff = lang1.prototypes[i][k] - lang1.prototypes[j][k];
                d += diff * diff;
            }
            CHECK(d >= min_sq);
        }

    LanguageSpec other = generate_language(18, p);
    CHECK(other.prototypes != lang1.prototypes);
}

TEST_CASE("impossible separation demands are refused") {
    auto p = small_params();
    p.dim = 2;
    p.min_separation = 100.0; // cannot place 5 unit-scale gaussians this far apart
    CHECK_THROWS_AS(generate_language(1, p), Error);
}

TEST_CASE("derived target shares the configured fraction of prototypes") {
    auto p = small_params();
    LanguageSpec source = generate_language(21, p);
    LanguageSpec target = derive_target_language(source, 22, p, 0.4);
    // round(0.4 * 5) = 2 shared
    std::size_t shared = 0;
    for (std::size_t i = 0; i < target.prototypes.size(); ++i)
        if (target.prototypes[i] == source.prototypes[i]) ++shared;
    CHECK(shared == 2);

    // the fresh ones keep their distance from every source prototype
    const double min_sq = p.min_separation * p.min_separation;
    for (std::size_t i = shared; i < target.prototypes.size(); ++i)
        for (const auto& sp : source.prototypes) {
            double d = 0.0;
            for (std::size_t k = 0; k < 6; ++k) {
                double diff = target.prototypes[i][k] - sp[k];
                d += diff * diff;
            }
            CHECK(d >= min_sq);
        }

    LanguageSpec all = derive_target_language(source, 23, p, 1.0);
    CHECK(all.prototypes == source.prototypes);
}

TEST_CASE("sampled text is well formed") {
    auto p = small_params();
    LanguageSpec lang = generate_language(31, p);
    SeededRng rng(2);
    for (int i = 0; i < 300; ++i) {
        std::string text = sample_text(lang, rng);
        REQUIRE(text.size() >= lang.text.min_chars);
        REQUIRE(text.size() <= lang.text.max_chars);
        CHECK(text.front() != '_');
        CHECK(text.back() != '_');
        for (std::size_t k = 1; k < text.size(); ++k) {
            CHECK(text[k] != text[k - 1]); // no immediate repeats at all
            CHECK(lang.alphabet.symbols().find(text[k]) != std::string::npos);
        }
    }
}

TEST_CASE("emitted frames reflect text length and channel transform") {
    auto p = small_params();
    p.noise_sigma = 0.0;
    p.frames_per_char_min = 2;
    p.frames_per_char_max = 2; // deterministic length
    LanguageSpec lang = generate_language(41, p);
    SeededRng rng(3);
    Matrix frames = emit_frames(lang, "ab_c", rng);
    CHECK(frames.rows == 8);
    CHECK(frames.cols == 6);
    // noiseless identity channel: frames are exact prototypes
    for (std::size_t k = 0; k < 6; ++k)
        CHECK(frames(0, k) == Catch::Approx(lang.prototypes[0][k]));

    LanguageSpec shifted = lang;
    shifted.channel_scale.assign(6, 2.0);
    shifted.channel_offset.assign(6, 1.0);
    SeededRng rng2(3);
    Matrix f2 = emit_frames(shifted, "ab_c", rng2);
    for (std::size_t i = 0; i < f2.data.size(); ++i)
        CHECK(f2.data[i] == Catch::Approx(2.0 * frames.data[i] + 1.0));
}

TEST_CASE("nearest-prototype decoding inverts noiseless emission") {
    auto p = small_params();
    p.noise_sigma = 0.0;
    p.channel_scale = 1.3;
    p.channel_offset = -0.4;
    LanguageSpec lang = generate_language(51, p);
    SeededRng rng(4);
    for (int i = 0; i < 50; ++i) {
        std::string text = sample_text(lang, rng);
        Matrix frames = emit_frames(lang, text, rng);
        CHECK(nearest_prototype_decode(lang, frames) == text);
    }
}

TEST_CASE("corpus synthesis: split sizes, disjoint ids, order independence") {
    auto p = small_params();
    LanguageSpec lang = generate_language(61, p);
    SplitBudgets budgets;
    budgets.labeled_train = 6;
    budgets.labeled_valid = 2;
    budgets.unlabeled = 10;
    budgets.dev = 3;
    auto splits = synthesize_corpus(lang, budgets, 777, "tgt");
    REQUIRE(splits.size() == 4);
    CHECK(splits[0].utterances.size() == 6);
    CHECK(splits[1].utterances.size() == 2);
    CHECK(splits[2].utterances.size() == 10);
    CHECK(splits[3].utterances.size() == 3);

    std::set<std::string> ids;
    for (const auto& corpus : splits)
        for (const auto& u : corpus.utterances) {
            CHECK(ids.insert(u.id).second);
            REQUIRE(u.text.has_value());
            CHECK(u.frames.rows >= 2 * u.text->size());
        }

    // per-utterance seeding: regenerating yields identical bits
    auto again = synthesize_corpus(lang, budgets, 777, "tgt");
    for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t i = 0; i < splits[s].utterances.size(); ++i) {
            CHECK(splits[s].utterances[i].id == again[s].utterances[i].id);
            CHECK(splits[s].utterances[i].frames.data == again[s].utterances[i].frames.data);
            CHECK(splits[s].utterances[i].text == again[s].utterances[i].text);
        }
}

TEST_CASE("training view hides unlabeled transcripts") {
    auto p = small_params();
    LanguageSpec lang = generate_language(71, p);
    SplitBudgets budgets;
    budgets.unlabeled = 4;
    budgets.labeled_train = 4;
    auto splits = synthesize_corpus(lang, budgets, 5, "x");
    for (const auto& corpus : splits) {
        for (const auto& u : corpus.training_view()) {
            if (corpus.split == Split::Unlabeled)
                CHECK_FALSE(u.text.has_value());
            else
                CHECK(u.text.has_value());
        }
        // the hidden truth stays available on the corpus itself
        for (const auto& u : corpus.utterances) CHECK(u.text.has_value());
    }
}

TEST_CASE("noise makes nearest-prototype decoding imperfect but related") {
    auto p = small_params();
    p.noise_sigma = 0.45;
    LanguageSpec lang = generate_language(81, p);
    SeededRng rng(6);
    std::size_t total_edits = 0, total_chars = 0;
    for (int i = 0; i < 30; ++i) {
        std::string text = sample_text(lang, rng);
        Matrix frames = emit_frames(lang, text, rng);
        std::string decoded = nearest_prototype_decode(lang, frames);
        total_edits += edit_distance(decoded, text);
        total_chars += text.size();
    }
    double cer = double(total_edits) / double(total_chars);
    CHECK(cer > 0.0);  // noise hurts
    CHECK(cer < 0.75); // but structure survives
}
