#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dust/error.hpp"

#include "json.hpp"

namespace dust {

// Levenshtein distance (substitutions + insertions + deletions).
template <typename Seq>
std::size_t edit_distance(const Seq& a, const Seq& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            std::size_t del = prev[j] + 1;
            std::size_t ins = cur[j - 1] + 1;
            cur[j] = std::min({sub, del, ins});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

struct EditOps {
    std::size_t substitutions = 0;
    std::size_t insertions = 0;
    std::size_t deletions = 0;
    std::size_t total() const { return substitutions + insertions + deletions; }
};

// Edit distance with an operation breakdown (reference = a, hypothesis = b;
// deletions are reference tokens missing from the hypothesis).
template <typename Seq>
EditOps edit_ops(const Seq& ref, const Seq& hyp) {
    const std::size_t n = ref.size(), m = hyp.size();
    // DP over (cost, S, I, D); cost decides, ties keep the first minimum.
    struct Cell {
        std::size_t cost, s, i, d;
    };
    std::vector<Cell> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = {j, 0, j, 0};
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = {i, 0, 0, i};
        for (std::size_t j = 1; j <= m; ++j) {
            bool match = ref[i - 1] == hyp[j - 1];
            Cell sub = prev[j - 1];
            sub.cost += match ? 0 : 1;
            if (!match) sub.s += 1;
            Cell del = prev[j];
            del.cost += 1;
            del.d += 1;
            Cell ins = cur[j - 1];
            ins.cost += 1;
            ins.i += 1;
            Cell best = sub;
            if (del.cost < best.cost) best = del;
            if (ins.cost < best.cost) best = ins;
            cur[j] = best;
        }
        std::swap(prev, cur);
    }
    return {prev[m].s, prev[m].i, prev[m].d};
}

struct EvalReport {
    double wer = 0.0; // percent
    double cer = 0.0; // percent
    std::size_t substitutions = 0; // word-level
    std::size_t insertions = 0;
    std::size_t deletions = 0;
    std::size_t ref_words = 0;
    std::size_t ref_chars = 0;
    std::size_t char_edits = 0;
    std::size_t utterance_count = 0;

    nlohmann::json to_json() const {
        auto round2 = [](double v) { return std::round(v * 100.0) / 100.0; };
        return nlohmann::json{{"wer", round2(wer)},
                              {"cer", round2(cer)},
                              {"substitutions", substitutions},
                              {"insertions", insertions},
                              {"deletions", deletions},
                              {"ref_words", ref_words},
                              {"ref_chars", ref_chars},
                              {"char_edits", char_edits},
                              {"utterance_count", utterance_count}};
    }

    static EvalReport from_json(const nlohmann::json& j) {
        EvalReport r;
        r.wer = j.at("wer").get<double>();
        r.cer = j.at("cer").get<double>();
        r.substitutions = j.at("substitutions").get<std::size_t>();
        r.insertions = j.at("insertions").get<std::size_t>();
        r.deletions = j.at("deletions").get<std::size_t>();
        r.ref_words = j.at("ref_words").get<std::size_t>();
        r.ref_chars = j.at("ref_chars").get<std::size_t>();
        r.char_edits = j.at("char_edits").get<std::size_t>();
        r.utterance_count = j.at("utterance_count").get<std::size_t>();
        return r;
    }
};

inline std::vector<std::string> split_words(const std::string& text, char separator) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        if (c == separator) {
            if (!cur.empty()) words.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

// Corpus-level WER/CER: pooled edit counts over pooled reference lengths,
// not an average of per-utterance rates.
inline EvalReport wer_cer(const std::vector<std::string>& hyps,
                          const std::vector<std::string>& refs, char separator) {
    require(hyps.size() == refs.size(), "wer_cer: hypothesis/reference count mismatch");
    EvalReport rep;
    rep.utterance_count = refs.size();
    std::size_t word_edits = 0;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        auto rw = split_words(refs[i], separator);
        auto hw = split_words(hyps[i], separator);
        EditOps ops = edit_ops(rw, hw);
        rep.substitutions += ops.substitutions;
        rep.insertions += ops.insertions;
        rep.deletions += ops.deletions;
        word_edits += ops.total();
        rep.ref_words += rw.size();
        rep.char_edits += edit_distance(refs[i], hyps[i]);
        rep.ref_chars += refs[i].size();
    }
    require(rep.ref_words > 0 && rep.ref_chars > 0,
            "wer_cer: zero total reference length");
    rep.wer = 100.0 * double(word_edits) / double(rep.ref_words);
    rep.cer = 100.0 * double(rep.char_edits) / double(rep.ref_chars);
    return rep;
}

// Fraction of the baseline-to-topline gap recovered by the model, percent.
inline double werr(double baseline, double model, double topline) {
    require(baseline != topline, "werr: baseline equals topline (zero gap)");
    return 100.0 * (baseline - model) / (baseline - topline);
}

} // namespace dust
