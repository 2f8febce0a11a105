#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "dust/alphabet.hpp"
#include "dust/error.hpp"
#include "dust/matrix.hpp"

namespace dust {

// Per-frame log-probabilities; every row must log-sum-exp to zero.
struct LogProbLattice {
    Matrix logp; // T x |V|

    std::size_t frames() const { return logp.rows; }
    std::size_t vocab() const { return logp.cols; }

    void validate() const {
        require(logp.rows >= 1 && logp.cols >= 2, "LogProbLattice: degenerate shape");
        for (std::size_t t = 0; t < logp.rows; ++t) {
            double s = kLogZero;
            for (std::size_t k = 0; k < logp.cols; ++k) s = log_add(s, logp(t, k));
            require(std::fabs(s) < 1e-9, "LogProbLattice: row " + std::to_string(t) +
                                             " does not normalize");
        }
    }
};

// Row-wise log-softmax of raw logits.
inline LogProbLattice log_softmax(const Matrix& logits) {
    LogProbLattice lat;
    lat.logp = Matrix(logits.rows, logits.cols);
    for (std::size_t t = 0; t < logits.rows; ++t) {
        const double* in = logits.row(t);
        double* out = lat.logp.row(t);
        double mx = *std::max_element(in, in + logits.cols);
        double z = 0.0;
        for (std::size_t k = 0; k < logits.cols; ++k) z += std::exp(in[k] - mx);
        double lz = mx + std::log(z);
        for (std::size_t k = 0; k < logits.cols; ++k) out[k] = in[k] - lz;
    }
    return lat;
}

// A decoded labeling: blank-free token indices plus a log-probability score.
struct Hypothesis {
    std::vector<int> tokens;
    double score = kLogZero;
};

namespace ctc_detail {

// Blank-augmented target: blank, y1, blank, y2, ..., blank.
inline std::vector<int> extend_with_blanks(const std::vector<int>& target) {
    std::vector<int> ext;
    ext.reserve(target.size() * 2 + 1);
    ext.push_back(Alphabet::blank_index);
    for (int y : target) {
        ext.push_back(y);
        ext.push_back(Alphabet::blank_index);
    }
    return ext;
}

inline std::size_t min_frames_for(const std::vector<int>& target) {
    std::size_t need = target.size();
    for (std::size_t i = 1; i < target.size(); ++i)
        if (target[i] == target[i - 1]) ++need; // repeat needs a blank between
    return need;
}

} // namespace ctc_detail

// CTC negative log-likelihood and its exact gradient with respect to the
// pre-softmax logits that produced the lattice. Log-space forward-backward.
inline std::pair<double, Matrix> ctc_loss_and_grad(const LogProbLattice& lattice,
                                                   const std::vector<int>& target) {
    require(!target.empty(), "ctc_loss_and_grad: empty target");
    const std::size_t T = lattice.frames();
    const std::size_t V = lattice.vocab();
    for (int y : target)
        require(y >= 1 && y < static_cast<int>(V),
                "ctc_loss_and_grad: target symbol out of vocabulary");
    if (T < ctc_detail::min_frames_for(target))
        throw Error("ctc_loss_and_grad: infeasible alignment (target needs " +
                    std::to_string(ctc_detail::min_frames_for(target)) + " frames, lattice has " +
                    std::to_string(T) + ")");

    const std::vector<int> ext = ctc_detail::extend_with_blanks(target);
    const std::size_t S = ext.size();
    const Matrix& lp = lattice.logp;

    auto allows_skip = [&](std::size_t s) {
        // Skip from s-2 to s is legal when s is a non-blank that differs
        // from the previous non-blank.
        return s >= 2 && ext[s] != Alphabet::blank_index && ext[s] != ext[s - 2];
    };

    Matrix alpha(T, S, kLogZero);
    alpha(0, 0) = lp(0, std::size_t(ext[0]));
    if (S > 1) alpha(0, 1) = lp(0, std::size_t(ext[1]));
    for (std::size_t t = 1; t < T; ++t) {
        for (std::size_t s = 0; s < S; ++s) {
            double a = alpha(t - 1, s);
            if (s >= 1) a = log_add(a, alpha(t - 1, s - 1));
            if (allows_skip(s)) a = log_add(a, alpha(t - 1, s - 2));
            alpha(t, s) = a + lp(t, std::size_t(ext[s]));
        }
    }
    double log_like = alpha(T - 1, S - 1);
    if (S > 1) log_like = log_add(log_like, alpha(T - 1, S - 2));
    if (log_like == kLogZero)
        throw Error("ctc_loss_and_grad: infeasible alignment (zero-probability path)");

    Matrix beta(T, S, kLogZero);
    beta(T - 1, S - 1) = lp(T - 1, std::size_t(ext[S - 1]));
    if (S > 1) beta(T - 1, S - 2) = lp(T - 1, std::size_t(ext[S - 2]));
    for (std::size_t t = T - 1; t-- > 0;) {
        for (std::size_t s = 0; s < S; ++s) {
            double b = beta(t + 1, s);
            if (s + 1 < S) b = log_add(b, beta(t + 1, s + 1));
            if (s + 2 < S && allows_skip(s + 2)) b = log_add(b, beta(t + 1, s + 2));
            beta(t, s) = b + lp(t, std::size_t(ext[s]));
        }
    }

    // grad wrt logits: softmax(t,k) - posterior(t,k).
    Matrix grad(T, V);
    for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> occ(V, kLogZero);
        for (std::size_t s = 0; s < S; ++s) {
            // alpha*beta double-counts the emission at t.
            double g = alpha(t, s) + beta(t, s) - lp(t, std::size_t(ext[s]));
            occ[std::size_t(ext[s])] = log_add(occ[std::size_t(ext[s])], g);
        }
        for (std::size_t k = 0; k < V; ++k)
            grad(t, k) = std::exp(lp(t, k)) - std::exp(occ[k] - log_like);
    }
    return {-log_like, std::move(grad)};
}

// Per-frame argmax, collapse repeats, strip blanks. Score is the sum of the
// chosen frame log-probabilities.
inline Hypothesis greedy_decode(const LogProbLattice& lattice) {
    Hypothesis hyp;
    hyp.score = 0.0;
    int prev = -1;
    for (std::size_t t = 0; t < lattice.frames(); ++t) {
        const double* row = lattice.logp.row(t);
        int best = int(std::max_element(row, row + lattice.vocab()) - row);
        hyp.score += row[best];
        if (best != Alphabet::blank_index && best != prev) hyp.tokens.push_back(best);
        prev = best;
    }
    return hyp;
}

// CTC prefix beam search over collapsed labelings. Blank-ending and
// non-blank-ending probabilities are tracked per prefix and merged for
// ranking. Ties break lexicographically on the token sequence so the
// output is reproducible bit-for-bit.
inline std::vector<Hypothesis> beam_search(const LogProbLattice& lattice,
                                           std::size_t beam_width) {
    require(beam_width >= 1, "beam_search: beam_width must be >= 1");
    const std::size_t T = lattice.frames();
    const std::size_t V = lattice.vocab();

    struct Probs {
        double blank = kLogZero;    // prefix last emitted a blank
        double nonblank = kLogZero; // prefix last emitted its final symbol
        double total() const { return log_add(blank, nonblank); }
    };
    using Beam = std::map<std::vector<int>, Probs>;

    Beam beam;
    beam[{}] = Probs{0.0, kLogZero};

    auto prune = [&](Beam& b) {
        if (b.size() <= beam_width) return;
        std::vector<const Beam::value_type*> items;
        items.reserve(b.size());
        for (const auto& kv : b) items.push_back(&kv);
        std::sort(items.begin(), items.end(), [](const auto* a, const auto* c) {
            double sa = a->second.total(), sc = c->second.total();
            if (sa != sc) return sa > sc;
            return a->first < c->first;
        });
        Beam kept;
        for (std::size_t i = 0; i < beam_width; ++i) kept.insert(*items[i]);
        b = std::move(kept);
    };

    for (std::size_t t = 0; t < T; ++t) {
        const double* row = lattice.logp.row(t);
        Beam next;
        for (const auto& [prefix, pr] : beam) {
            // Emit blank: prefix unchanged, now blank-ending.
            {
                auto& np = next[prefix];
                np.blank = log_add(np.blank, pr.total() + row[Alphabet::blank_index]);
            }
            // Repeat the final symbol: collapses into the same prefix.
            if (!prefix.empty()) {
                auto& np = next[prefix];
                np.nonblank =
                    log_add(np.nonblank, pr.nonblank + row[std::size_t(prefix.back())]);
            }
            for (std::size_t k = 1; k < V; ++k) {
                std::vector<int> grown = prefix;
                grown.push_back(int(k));
                auto& np = next[grown];
                if (!prefix.empty() && int(k) == prefix.back()) {
                    // Needs an intervening blank, so only the blank mass extends.
                    np.nonblank = log_add(np.nonblank, pr.blank + row[k]);
                } else {
                    np.nonblank = log_add(np.nonblank, pr.total() + row[k]);
                }
            }
        }
        prune(next);
        beam = std::move(next);
    }

    std::vector<Hypothesis> out;
    out.reserve(beam.size());
    for (const auto& [prefix, pr] : beam) out.push_back({prefix, pr.total()});
    std::sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.tokens < b.tokens;
    });
    return out;
}

} // namespace dust
