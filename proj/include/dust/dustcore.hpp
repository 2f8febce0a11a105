#pragma once

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dust/checkpoint.hpp"
#include "dust/corpus.hpp"
#include "dust/ctc.hpp"
#include "dust/error.hpp"
#include "dust/store.hpp"
#include "dust/textdist.hpp"
#include "dust/train.hpp"

#include "json.hpp"

namespace dust {

struct FilterConfig {
    double tau = 0.2;
    std::size_t passes = 3;           // R
    std::vector<std::uint64_t> seeds; // one per pass; defaults to 1..R
    std::size_t beam_width = 10;
    double dropout_p = -1.0; // < 0: use the teacher's own trained p

    void validate() const {
        require(tau >= 0.0 && tau <= 1.0, "FilterConfig: tau in [0,1]");
        require(passes >= 1, "FilterConfig: passes >= 1");
        require(beam_width >= 1, "FilterConfig: beam_width >= 1");
        if (!seeds.empty()) {
            require(seeds.size() == passes, "FilterConfig: seeds count != passes");
            for (std::size_t i = 0; i < seeds.size(); ++i)
                for (std::size_t j = i + 1; j < seeds.size(); ++j)
                    require(seeds[i] != seeds[j], "FilterConfig: duplicate seeds");
        }
    }

    std::vector<std::uint64_t> resolved_seeds() const {
        if (!seeds.empty()) return seeds;
        std::vector<std::uint64_t> s(passes);
        for (std::size_t i = 0; i < passes; ++i) s[i] = i + 1;
        return s;
    }

    nlohmann::json to_json() const {
        return {{"tau", tau},
                {"passes", passes},
                {"seeds", resolved_seeds()},
                {"beam_width", beam_width},
                {"dropout_p", dropout_p}};
    }

    static FilterConfig from_json(const nlohmann::json& j) {
        FilterConfig c;
        c.tau = j.value("tau", c.tau);
        c.passes = j.value("passes", c.passes);
        c.seeds = j.value("seeds", std::vector<std::uint64_t>{});
        c.beam_width = j.value("beam_width", c.beam_width);
        c.dropout_p = j.value("dropout_p", c.dropout_p);
        c.validate();
        return c;
    }
};

struct HypothesisBundle {
    std::string utterance_id;
    Hypothesis ref;
    std::vector<Hypothesis> sampled;
    std::vector<std::size_t> distances; // edit distance of each sample to ref
    bool accepted = false;
    std::string diagnostic; // nonempty when a decode pass failed
};

struct PseudoLabelEntry {
    std::string utterance_id;
    std::string text;
    std::string source; // "ref" or "sample-<r>"
};

struct PseudoLabelSet {
    std::vector<PseudoLabelEntry> entries;
    std::string teacher_id;
    FilterConfig config;
    std::size_t accepted = 0;
    std::size_t total = 0;
    std::optional<double> pseudo_wer; // vs hidden truth, when available
};

// One utterance through the DUST filter: a deterministic reference decode
// plus R dropout decodes, accepted only when every sampled hypothesis stays
// strictly within tau * |ref| edits of the reference.
inline HypothesisBundle label_one(const ModelCheckpoint& teacher, const std::string& utt_id,
                                  const Matrix& frames, const FilterConfig& config) {
    config.validate();
    require(frames.rows >= 1, "label_one: empty utterance");

    HypothesisBundle bundle;
    bundle.utterance_id = utt_id;

    EncoderModel model = teacher.model;
    if (config.dropout_p >= 0.0) model.set_dropout_p(config.dropout_p);
    const auto pass_seeds = config.resolved_seeds();
    const std::uint64_t utt_hash = fnv1a(utt_id);

    try {
        auto [logits, cache] = forward(model, frames, ForwardMode::deterministic());
        auto ranked = beam_search(log_softmax(logits), config.beam_width);
        bundle.ref = ranked.front();

        for (std::size_t r = 0; r < config.passes; ++r) {
            // Config-level seed offset by the utterance hash: reproducible,
            // independent across utterances.
            auto [slogits, scache] =
                forward(model, frames, ForwardMode::with_dropout(pass_seeds[r] ^ utt_hash));
            auto sranked = beam_search(log_softmax(slogits), config.beam_width);
            bundle.sampled.push_back(sranked.front());
            bundle.distances.push_back(
                edit_distance(bundle.sampled.back().tokens, bundle.ref.tokens));
        }
    } catch (const Error& e) {
        bundle.accepted = false;
        bundle.diagnostic = e.what();
        return bundle;
    }

    std::size_t max_dist = 0;
    for (std::size_t d : bundle.distances) max_dist = std::max(max_dist, d);
    const double ref_len = double(bundle.ref.tokens.size());
    bundle.accepted = ref_len > 0.0 && double(max_dist) < config.tau * ref_len;
    return bundle;
}

// Runs the filter over a whole unlabeled corpus. Uses the training-facing
// view (no transcripts); the hidden ground truth, when present, is used
// only to score the resulting pseudo-label set.
inline PseudoLabelSet build_pseudoset(const ModelCheckpoint& teacher, const Corpus& unlabeled,
                                      const FilterConfig& config) {
    config.validate();
    PseudoLabelSet set;
    set.teacher_id = teacher.id();
    set.config = config;

    if (unlabeled.utterances.empty())
        std::cerr << "warning: build_pseudoset called on an empty corpus\n";

    std::unordered_map<std::string, std::string> truth;
    for (const auto& u : unlabeled.utterances)
        if (u.text) truth[u.id] = *u.text;

    std::vector<std::string> hyp_texts, ref_texts;
    for (const auto& u : unlabeled.training_view()) {
        set.total += 1;
        HypothesisBundle bundle = label_one(teacher, u.id, u.frames, config);
        if (!bundle.accepted) continue;
        set.accepted += 1;
        auto push = [&](const Hypothesis& h, const std::string& source) {
            std::string text = teacher.alphabet.decode(h.tokens);
            set.entries.push_back({u.id, text, source});
            auto it = truth.find(u.id);
            if (it != truth.end()) {
                hyp_texts.push_back(text);
                ref_texts.push_back(it->second);
            }
        };
        push(bundle.ref, "ref");
        for (std::size_t r = 0; r < bundle.sampled.size(); ++r)
            push(bundle.sampled[r], "sample-" + std::to_string(r + 1));
    }

    if (!ref_texts.empty())
        set.pseudo_wer = wer_cer(hyp_texts, ref_texts, teacher.alphabet.separator()).wer;
    return set;
}

// ---- pseudo-label set persistence: JSONL manifest + stats sidecar ----

inline void write_pseudoset(const fs::path& dir, const PseudoLabelSet& set) {
    std::string manifest;
    for (const auto& e : set.entries) {
        manifest += nlohmann::json{{"id", e.utterance_id}, {"text", e.text}, {"source", e.source}}
                        .dump();
        manifest += "\n";
    }
    atomic_write_bytes(dir / "pseudo_labels.jsonl", manifest);
    nlohmann::json stats{{"tau", set.config.tau},
                         {"R", set.config.passes},
                         {"accepted", set.accepted},
                         {"total", set.total},
                         {"teacher_id", set.teacher_id},
                         {"pseudo_wer", set.pseudo_wer ? nlohmann::json(*set.pseudo_wer)
                                                       : nlohmann::json(nullptr)}};
    atomic_write_bytes(dir / "pseudo_stats.json", stats.dump(2) + "\n");
}

inline PseudoLabelSet read_pseudoset(const fs::path& dir) {
    PseudoLabelSet set;
    std::string bytes = read_bytes(dir / "pseudo_labels.jsonl");
    std::size_t start = 0;
    while (start < bytes.size()) {
        std::size_t end = bytes.find('\n', start);
        if (end == std::string::npos) end = bytes.size();
        std::string line = bytes.substr(start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        set.entries.push_back({j.at("id").get<std::string>(), j.at("text").get<std::string>(),
                               j.at("source").get<std::string>()});
    }
    nlohmann::json stats = nlohmann::json::parse(read_bytes(dir / "pseudo_stats.json"));
    set.config.tau = stats.at("tau").get<double>();
    set.config.passes = stats.at("R").get<std::size_t>();
    set.accepted = stats.at("accepted").get<std::size_t>();
    set.total = stats.at("total").get<std::size_t>();
    set.teacher_id = stats.at("teacher_id").get<std::string>();
    if (!stats.at("pseudo_wer").is_null()) set.pseudo_wer = stats.at("pseudo_wer").get<double>();
    return set;
}

struct DustIterationResult {
    ModelCheckpoint student;
    PseudoLabelSet pseudo;
};

// One teacher/student round: the teacher labels the unlabeled corpus, and a
// fresh copy of the pre-trained checkpoint f0 (never the teacher) trains on
// labeled + pseudo-labeled data.
inline DustIterationResult dust_iterate(const ModelCheckpoint& f0, const ModelCheckpoint& teacher,
                                        const std::vector<LabeledExample>& labeled_train,
                                        const std::vector<LabeledExample>& labeled_valid,
                                        const Corpus& unlabeled, const FilterConfig& filter_cfg,
                                        const TrainConfig& train_cfg, const std::string& stage) {
    DustIterationResult result;
    result.pseudo = build_pseudoset(teacher, unlabeled, filter_cfg);

    std::unordered_map<std::string, const Matrix*> frames_by_id;
    for (const auto& u : unlabeled.utterances) frames_by_id[u.id] = &u.frames;

    std::vector<LabeledExample> train = labeled_train;
    if (result.pseudo.entries.empty()) {
        std::cerr << "warning: pseudo-label set is empty for stage " << stage
                  << "; training on labeled data alone\n";
    }
    for (const auto& e : result.pseudo.entries) {
        auto it = frames_by_id.find(e.utterance_id);
        require(it != frames_by_id.end(),
                "dust_iterate: pseudo-label entry for unknown utterance " + e.utterance_id);
        train.push_back({e.utterance_id + "#" + e.source, *it->second, e.text});
    }

    result.student =
        finetune(f0, teacher.alphabet, train, labeled_valid, train_cfg, stage).checkpoint;
    return result;
}

// Deterministic beam-search evaluation of a checkpoint against reference
// transcripts.
inline EvalReport evaluate_model(const ModelCheckpoint& ckpt, const Corpus& corpus,
                                 std::size_t beam_width) {
    std::vector<std::string> hyps, refs;
    for (const auto& u : corpus.utterances) {
        require(u.text.has_value(), "evaluate_model: utterance " + u.id + " has no transcript");
        auto [logits, cache] = forward(ckpt.model, u.frames, ForwardMode::deterministic());
        auto ranked = beam_search(log_softmax(logits), beam_width);
        hyps.push_back(ckpt.alphabet.decode(ranked.front().tokens));
        refs.push_back(*u.text);
    }
    return wer_cer(hyps, refs, ckpt.alphabet.separator());
}

} // namespace dust
