#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dust/alphabet.hpp"
#include "dust/corpus.hpp"
#include "dust/error.hpp"
#include "dust/matrix.hpp"
#include "dust/rng.hpp"

namespace dust {

// Character-level text sampler: unigram character weights plus a word
// separator inserted with fixed probability (never leading, trailing, or
// doubled).
struct TextModel {
    std::vector<double> char_weights; // one per non-separator symbol
    double separator_prob = 0.18;
    std::size_t min_chars = 8;
    std::size_t max_chars = 24;
};

// A synthetic "language": each character emits a few noisy copies of its
// prototype vector; a channel transform models domain shift.
struct LanguageSpec {
    Alphabet alphabet;
    std::vector<std::vector<double>> prototypes; // one per symbol (incl. separator)
    std::size_t frames_per_char_min = 2;
    std::size_t frames_per_char_max = 4;
    double noise_sigma = 0.3;
    // channel y = scale * x + offset, per dimension
    std::vector<double> channel_scale;
    std::vector<double> channel_offset;
    TextModel text;

    std::size_t dim() const { return prototypes.empty() ? 0 : prototypes[0].size(); }
};

struct LanguageParams {
    std::size_t dim = 8;
    std::string symbols = "abcdefg_"; // separator included
    char separator = '_';
    double min_separation = 0.7;
    double proto_scale = 1.0;
    std::size_t frames_per_char_min = 2;
    std::size_t frames_per_char_max = 4;
    double noise_sigma = 0.3;
    double channel_scale = 1.0;  // uniform scale applied to all dims
    double channel_offset = 0.0; // uniform offset
    double separator_prob = 0.18;
    std::size_t min_chars = 8;
    std::size_t max_chars = 24;
};

namespace synth_detail {

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

// Rejection-sample prototypes with pairwise separation >= min_sep, also
// keeping distance from every vector in `avoid`.
inline std::vector<std::vector<double>> sample_prototypes(
    SeededRng& rng, std::size_t count, std::size_t dim, double min_sep, double scale,
    const std::vector<std::vector<double>>& avoid) {
    std::vector<std::vector<double>> protos;
    const double min_sq = min_sep * min_sep;
    for (std::size_t i = 0; i < count; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
            std::vector<double> cand(dim);
            for (auto& v : cand) v = rng.gaussian(0.0, scale);
            bool ok = true;
            for (const auto& p : protos)
                if (sq_dist(cand, p) < min_sq) { ok = false; break; }
            for (const auto& p : avoid)
                if (ok && sq_dist(cand, p) < min_sq) { ok = false; break; }
            if (ok) {
                protos.push_back(std::move(cand));
                placed = true;
            }
        }
        if (!placed)
            throw Error("generate_language: cannot place " + std::to_string(count) +
                        " prototypes with separation " + std::to_string(min_sep) + " in " +
                        std::to_string(dim) + " dims");
    }
    return protos;
}

} // namespace synth_detail

inline LanguageSpec generate_language(std::uint64_t seed, const LanguageParams& params) {
    require(params.dim >= 2, "generate_language: dim must be >= 2");
    require(params.symbols.size() >= 4, "generate_language: need >= 3 symbols + separator");
    require(params.frames_per_char_min >= 1 &&
                params.frames_per_char_min <= params.frames_per_char_max,
            "generate_language: bad frames_per_char range");
    require(params.noise_sigma >= 0.0, "generate_language: negative noise_sigma");

    LanguageSpec spec;
    spec.alphabet = Alphabet(params.symbols, params.separator);
    SeededRng rng(seed);
    spec.prototypes = synth_detail::sample_prototypes(
        rng, params.symbols.size(), params.dim, params.min_separation, params.proto_scale, {});
    spec.frames_per_char_min = params.frames_per_char_min;
    spec.frames_per_char_max = params.frames_per_char_max;
    spec.noise_sigma = params.noise_sigma;
    spec.channel_scale.assign(params.dim, params.channel_scale);
    spec.channel_offset.assign(params.dim, params.channel_offset);
    spec.text.char_weights.assign(params.symbols.size() - 1, 1.0);
    spec.text.separator_prob = params.separator_prob;
    spec.text.min_chars = params.min_chars;
    spec.text.max_chars = params.max_chars;
    return spec;
}

// Derives a target language from a source one: `shared_fraction` of the
// target's prototypes are copied from the source (cross-lingual overlap),
// the rest are freshly sampled away from all existing prototypes.
inline LanguageSpec derive_target_language(const LanguageSpec& source, std::uint64_t seed,
                                           const LanguageParams& params,
                                           double shared_fraction) {
    require(shared_fraction >= 0.0 && shared_fraction <= 1.0,
            "derive_target_language: shared_fraction in [0,1]");
    LanguageSpec spec = generate_language(seed, params);
    require(spec.dim() == source.dim(), "derive_target_language: dim mismatch");

    std::size_t n = spec.prototypes.size();
    std::size_t shared = std::size_t(shared_fraction * double(n) + 0.5);
    shared = std::min(shared, source.prototypes.size());
    SeededRng rng(seed ^ 0x5eedf00dull);
    // Shared slots reuse source prototypes; the rest are resampled away
    // from both languages' existing prototypes.
    for (std::size_t i = 0; i < shared; ++i) spec.prototypes[i] = source.prototypes[i];
    if (shared < n) {
        std::vector<std::vector<double>> avoid = source.prototypes;
        avoid.insert(avoid.end(), spec.prototypes.begin(), spec.prototypes.begin() + long(shared));
        auto fresh = synth_detail::sample_prototypes(rng, n - shared, spec.dim(),
                                                     params.min_separation, params.proto_scale,
                                                     avoid);
        for (std::size_t i = shared; i < n; ++i) spec.prototypes[i] = std::move(fresh[i - shared]);
    }
    return spec;
}

inline std::string sample_text(const LanguageSpec& spec, SeededRng& rng) {
    const std::string& syms = spec.alphabet.symbols();
    std::string chars;
    for (char c : syms)
        if (c != spec.alphabet.separator()) chars.push_back(c);

    std::size_t len = spec.text.min_chars +
                      rng.uniform_int(spec.text.max_chars - spec.text.min_chars + 1);
    std::string out;
    while (out.size() < len) {
        bool can_sep = !out.empty() && out.back() != spec.alphabet.separator() &&
                       out.size() + 1 < len;
        if (can_sep && rng.bernoulli(spec.text.separator_prob)) {
            out.push_back(spec.alphabet.separator());
        } else {
            // No immediate repeats: keeps collapse-based decoders lossless
            // and CTC alignments short.
            char c = chars[rng.uniform_int(chars.size())];
            while (!out.empty() && c == out.back())
                c = chars[rng.uniform_int(chars.size())];
            out.push_back(c);
        }
    }
    return out;
}

inline Matrix emit_frames(const LanguageSpec& spec, const std::string& text, SeededRng& rng) {
    std::vector<std::vector<double>> rows;
    const std::size_t d = spec.dim();
    for (char c : text) {
        int idx = spec.alphabet.index_of(c);
        const auto& proto = spec.prototypes[std::size_t(idx - 1)];
        std::size_t reps = spec.frames_per_char_min +
                           rng.uniform_int(spec.frames_per_char_max - spec.frames_per_char_min + 1);
        for (std::size_t r = 0; r < reps; ++r) {
            std::vector<double> row(d);
            for (std::size_t k = 0; k < d; ++k) {
                double v = proto[k] + rng.gaussian(0.0, spec.noise_sigma);
                row[k] = spec.channel_scale[k] * v + spec.channel_offset[k];
            }
            rows.push_back(std::move(row));
        }
    }
    Matrix m(rows.size(), d);
    for (std::size_t t = 0; t < rows.size(); ++t)
        std::copy(rows[t].begin(), rows[t].end(), m.row(t));
    return m;
}

struct SplitBudgets {
    std::size_t labeled_train = 0;
    std::size_t labeled_valid = 0;
    std::size_t unlabeled = 0;
    std::size_t dev = 0;
};

// Generates all four splits with disjoint ids. Per-utterance randomness is
// derived from (seed, id) so generation order is irrelevant. The unlabeled
// split keeps its transcript as hidden ground truth; Corpus::training_view
// is what hides it from training code.
inline std::vector<Corpus> synthesize_corpus(const LanguageSpec& spec,
                                             const SplitBudgets& budgets, std::uint64_t seed,
                                             const std::string& tag) {
    std::vector<Corpus> out;
    const std::array<std::pair<Split, std::size_t>, 4> plan{
        {{Split::LabeledTrain, budgets.labeled_train},
         {Split::LabeledValid, budgets.labeled_valid},
         {Split::Unlabeled, budgets.unlabeled},
         {Split::Dev, budgets.dev}}};
    for (const auto& [split, count] : plan) {
        Corpus corpus;
        corpus.split = split;
        for (std::size_t i = 0; i < count; ++i) {
            Utterance u;
            u.id = tag + "-" + split_name(split) + "-" + std::to_string(i);
            SeededRng rng(seed ^ fnv1a(u.id));
            std::string text = sample_text(spec, rng);
            u.frames = emit_frames(spec, text, rng);
            u.text = text;
            corpus.utterances.push_back(std::move(u));
        }
        out.push_back(std::move(corpus));
    }
    return out;
}

// Framewise nearest-prototype decoder: the known-optimal reference for
// noiseless data and a difficulty probe for noisy configs. Undoes the
// channel transform before matching.
inline std::string nearest_prototype_decode(const LanguageSpec& spec, const Matrix& frames) {
    std::string raw;
    for (std::size_t t = 0; t < frames.rows; ++t) {
        std::vector<double> x(frames.cols);
        for (std::size_t k = 0; k < frames.cols; ++k)
            x[k] = (frames(t, k) - spec.channel_offset[k]) / spec.channel_scale[k];
        std::size_t best = 0;
        double best_d = synth_detail::sq_dist(x, spec.prototypes[0]);
        for (std::size_t p = 1; p < spec.prototypes.size(); ++p) {
            double d2 = synth_detail::sq_dist(x, spec.prototypes[p]);
            if (d2 < best_d) { best_d = d2; best = p; }
        }
        char c = spec.alphabet.char_at(int(best) + 1);
        if (raw.empty() || raw.back() != c) raw.push_back(c);
    }
    return raw;
}

} // namespace dust
