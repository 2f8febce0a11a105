#pragma once

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dust/checkpoint.hpp"
#include "dust/corpus.hpp"
#include "dust/dustcore.hpp"
#include "dust/store.hpp"
#include "dust/synth.hpp"
#include "dust/textdist.hpp"
#include "dust/train.hpp"

#include "json.hpp"

namespace dust {

// ---- LanguageSpec (de)serialization ----

inline nlohmann::json language_to_json(const LanguageSpec& spec) {
    return {{"symbols", spec.alphabet.symbols()},
            {"separator", std::string(1, spec.alphabet.separator())},
            {"prototypes", spec.prototypes},
            {"frames_per_char", {spec.frames_per_char_min, spec.frames_per_char_max}},
            {"noise_sigma", spec.noise_sigma},
            {"channel_scale", spec.channel_scale},
            {"channel_offset", spec.channel_offset},
            {"text",
             {{"char_weights", spec.text.char_weights},
              {"separator_prob", spec.text.separator_prob},
              {"min_chars", spec.text.min_chars},
              {"max_chars", spec.text.max_chars}}}};
}

inline LanguageSpec language_from_json(const nlohmann::json& j) {
    LanguageSpec spec;
    spec.alphabet = Alphabet(j.at("symbols").get<std::string>(),
                             j.at("separator").get<std::string>().at(0));
    spec.prototypes = j.at("prototypes").get<std::vector<std::vector<double>>>();
    spec.frames_per_char_min = j.at("frames_per_char")[0].get<std::size_t>();
    spec.frames_per_char_max = j.at("frames_per_char")[1].get<std::size_t>();
    spec.noise_sigma = j.at("noise_sigma").get<double>();
    spec.channel_scale = j.at("channel_scale").get<std::vector<double>>();
    spec.channel_offset = j.at("channel_offset").get<std::vector<double>>();
    spec.text.char_weights = j.at("text").at("char_weights").get<std::vector<double>>();
    spec.text.separator_prob = j.at("text").at("separator_prob").get<double>();
    spec.text.min_chars = j.at("text").at("min_chars").get<std::size_t>();
    spec.text.max_chars = j.at("text").at("max_chars").get<std::size_t>();
    return spec;
}

// ---- full experiment configuration ----

struct DataConfig {
    std::size_t dim = 8;
    std::string symbols = "abcdefg_";
    char separator = '_';
    double min_separation = 0.7;
    double shared_fraction = 0.5;
    double source_noise_sigma = 0.5;
    double target_noise_sigma = 0.55;
    std::size_t frames_per_char_min = 2;
    std::size_t frames_per_char_max = 4;
    double target_channel_scale = 1.1;  // domain shift between languages
    double target_channel_offset = 0.15;
    double separator_prob = 0.18;
    std::size_t min_chars = 8;
    std::size_t max_chars = 24;
    // 1:10 labeled:unlabeled ratio, the shape of the 10h/100h setup.
    std::size_t source_unlabeled = 240;
    std::size_t source_labeled = 0; // only used by the source-supervised-first recipe
    std::size_t target_labeled_train = 12;
    std::size_t target_labeled_valid = 6;
    std::size_t target_unlabeled = 320;
    std::size_t target_dev = 48;

    nlohmann::json to_json() const {
        return {{"dim", dim},
                {"symbols", symbols},
                {"separator", std::string(1, separator)},
                {"min_separation", min_separation},
                {"shared_fraction", shared_fraction},
                {"source_noise_sigma", source_noise_sigma},
                {"target_noise_sigma", target_noise_sigma},
                {"frames_per_char", {frames_per_char_min, frames_per_char_max}},
                {"target_channel_scale", target_channel_scale},
                {"target_channel_offset", target_channel_offset},
                {"separator_prob", separator_prob},
                {"utterance_chars", {min_chars, max_chars}},
                {"source_unlabeled", source_unlabeled},
                {"source_labeled", source_labeled},
                {"target_labeled_train", target_labeled_train},
                {"target_labeled_valid", target_labeled_valid},
                {"target_unlabeled", target_unlabeled},
                {"target_dev", target_dev}};
    }

    static DataConfig from_json(const nlohmann::json& j) {
        DataConfig c;
        c.dim = j.value("dim", c.dim);
        c.symbols = j.value("symbols", c.symbols);
        c.separator = j.value("separator", std::string(1, c.separator)).at(0);
        c.min_separation = j.value("min_separation", c.min_separation);
        c.shared_fraction = j.value("shared_fraction", c.shared_fraction);
        c.source_noise_sigma = j.value("source_noise_sigma", c.source_noise_sigma);
        c.target_noise_sigma = j.value("target_noise_sigma", c.target_noise_sigma);
        if (j.contains("frames_per_char")) {
            c.frames_per_char_min = j["frames_per_char"][0].get<std::size_t>();
            c.frames_per_char_max = j["frames_per_char"][1].get<std::size_t>();
        }
        c.target_channel_scale = j.value("target_channel_scale", c.target_channel_scale);
        c.target_channel_offset = j.value("target_channel_offset", c.target_channel_offset);
        c.separator_prob = j.value("separator_prob", c.separator_prob);
        if (j.contains("utterance_chars")) {
            c.min_chars = j["utterance_chars"][0].get<std::size_t>();
            c.max_chars = j["utterance_chars"][1].get<std::size_t>();
        }
        c.source_unlabeled = j.value("source_unlabeled", c.source_unlabeled);
        c.source_labeled = j.value("source_labeled", c.source_labeled);
        c.target_labeled_train = j.value("target_labeled_train", c.target_labeled_train);
        c.target_labeled_valid = j.value("target_labeled_valid", c.target_labeled_valid);
        c.target_unlabeled = j.value("target_unlabeled", c.target_unlabeled);
        c.target_dev = j.value("target_dev", c.target_dev);
        return c;
    }
};

struct ModelConfig {
    // A 5-frame context window (5 * dim inputs) feeding a narrower hidden
    // layer makes the frozen feature extractor a real bottleneck: a random
    // extractor loses information that fine-tuning can never recover, which
    // is exactly what the masked-reconstruction pretraining stage repairs.
    std::size_t context = 5;
    std::size_t hidden = 24;
    std::size_t encoder_layers = 2;
    double dropout_p = 0.1;

    nlohmann::json to_json() const {
        return {{"context", context},
                {"hidden", hidden},
                {"encoder_layers", encoder_layers},
                {"dropout_p", dropout_p}};
    }
    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.context = j.value("context", c.context);
        c.hidden = j.value("hidden", c.hidden);
        c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
        c.dropout_p = j.value("dropout_p", c.dropout_p);
        return c;
    }
};

struct PipelineConfig {
    std::uint64_t seed = 42;
    DataConfig data;
    ModelConfig model;
    TrainConfig pretrain;
    TrainConfig finetune_cfg;
    TrainConfig dust_finetune;
    FilterConfig filter;
    std::size_t iterations = 3;
    std::size_t eval_beam_width = 10;
    std::optional<double> baseline_wer; // for the final WERR line
    std::optional<double> topline_wer;

    // Desk-scale counterpart of the published recipe: the schedule shape is
    // the same (warmup + inverse-sqrt, projection-only freeze phase, heavy
    // masking during pretraining) but step counts are sized for corpora of
    // hundreds of utterances rather than hundreds of hours.
    static PipelineConfig reference() {
        PipelineConfig c;
        c.pretrain.epochs = 12;
        c.pretrain.max_lr = 2e-3;
        c.pretrain.warmup_steps = 100;
        c.pretrain.freeze_steps = 0;
        c.finetune_cfg.epochs = 240;
        c.finetune_cfg.max_lr = 2e-3;
        c.finetune_cfg.warmup_steps = 40;
        c.finetune_cfg.freeze_steps = 10;
        c.finetune_cfg.frame_budget_per_batch = 400;
        c.finetune_cfg.grad_accumulation = 1;
        c.finetune_cfg.mask_span = 4;
        c.finetune_cfg.mask_target_fraction = 0.2;
        c.dust_finetune = c.finetune_cfg;
        c.dust_finetune.epochs = 60;
        c.dust_finetune.warmup_steps = 100;
        c.dust_finetune.mask_target_fraction = 0.25;
        return c;
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"seed", seed},
                         {"data", data.to_json()},
                         {"model", model.to_json()},
                         {"pretrain", pretrain.to_json()},
                         {"finetune", finetune_cfg.to_json()},
                         {"dust_finetune", dust_finetune.to_json()},
                         {"filter", filter.to_json()},
                         {"iterations", iterations},
                         {"eval_beam_width", eval_beam_width}};
        j["baseline_wer"] = baseline_wer ? nlohmann::json(*baseline_wer) : nullptr;
        j["topline_wer"] = topline_wer ? nlohmann::json(*topline_wer) : nullptr;
        return j;
    }

    static PipelineConfig from_json(const nlohmann::json& j) {
        PipelineConfig c = reference();
        c.seed = j.value("seed", c.seed);
        if (j.contains("data")) c.data = DataConfig::from_json(j["data"]);
        if (j.contains("model")) c.model = ModelConfig::from_json(j["model"]);
        if (j.contains("pretrain")) c.pretrain = TrainConfig::from_json(j["pretrain"]);
        if (j.contains("finetune")) c.finetune_cfg = TrainConfig::from_json(j["finetune"]);
        if (j.contains("dust_finetune"))
            c.dust_finetune = TrainConfig::from_json(j["dust_finetune"]);
        if (j.contains("filter")) c.filter = FilterConfig::from_json(j["filter"]);
        c.iterations = j.value("iterations", c.iterations);
        c.eval_beam_width = j.value("eval_beam_width", c.eval_beam_width);
        if (j.contains("baseline_wer") && !j["baseline_wer"].is_null())
            c.baseline_wer = j["baseline_wer"].get<double>();
        if (j.contains("topline_wer") && !j["topline_wer"].is_null())
            c.topline_wer = j["topline_wer"].get<double>();
        return c;
    }
};

// ---- data generation ----

// Writes exp/data/{source,target}/<split>/manifest.jsonl trees plus the
// two language specs. Idempotent via data/DONE.
inline void generate_data(const fs::path& exp_dir, const PipelineConfig& cfg) {
    fs::path data_dir = exp_dir / "data";
    if (stage_done(data_dir)) return;

    LanguageParams params;
    params.dim = cfg.data.dim;
    params.symbols = cfg.data.symbols;
    params.separator = cfg.data.separator;
    params.min_separation = cfg.data.min_separation;
    params.frames_per_char_min = cfg.data.frames_per_char_min;
    params.frames_per_char_max = cfg.data.frames_per_char_max;
    params.noise_sigma = cfg.data.source_noise_sigma;
    params.separator_prob = cfg.data.separator_prob;
    params.min_chars = cfg.data.min_chars;
    params.max_chars = cfg.data.max_chars;

    LanguageSpec source = generate_language(cfg.seed ^ fnv1a("source-language"), params);

    LanguageParams tparams = params;
    tparams.noise_sigma = cfg.data.target_noise_sigma;
    tparams.channel_scale = cfg.data.target_channel_scale;
    tparams.channel_offset = cfg.data.target_channel_offset;
    LanguageSpec target = derive_target_language(source, cfg.seed ^ fnv1a("target-language"),
                                                 tparams, cfg.data.shared_fraction);

    atomic_write_bytes(data_dir / "source_language.json", language_to_json(source).dump(2) + "\n");
    atomic_write_bytes(data_dir / "target_language.json", language_to_json(target).dump(2) + "\n");

    SplitBudgets src_budgets;
    src_budgets.unlabeled = cfg.data.source_unlabeled;
    src_budgets.labeled_train = cfg.data.source_labeled;
    for (const auto& corpus : synthesize_corpus(source, src_budgets, cfg.seed, "src"))
        if (!corpus.utterances.empty())
            write_corpus(data_dir / "source" / split_name(corpus.split), corpus);

    SplitBudgets tgt_budgets;
    tgt_budgets.labeled_train = cfg.data.target_labeled_train;
    tgt_budgets.labeled_valid = cfg.data.target_labeled_valid;
    tgt_budgets.unlabeled = cfg.data.target_unlabeled;
    tgt_budgets.dev = cfg.data.target_dev;
    for (const auto& corpus : synthesize_corpus(target, tgt_budgets, cfg.seed, "tgt"))
        write_corpus(data_dir / "target" / split_name(corpus.split), corpus);

    atomic_write_bytes(data_dir / "resolved_config.json", cfg.to_json().dump(2) + "\n");
    mark_stage_done(data_dir);
}

// ---- pipeline driver ----

struct StageReport {
    std::string stage;
    double dev_wer = 0.0;
    double dev_cer = 0.0;
    std::optional<std::size_t> pseudo_count;
    std::optional<double> pseudo_wer;
};

struct PipelineFlags {
    bool skip_pretrain = false;          // random init instead of pretraining
    bool source_supervised_first = false; // fine-tune on source labels before target
};

struct PipelineResult {
    std::vector<StageReport> reports;
    fs::path exp_dir;
};

namespace pipeline_detail {

inline std::vector<LabeledExample> to_examples(const Corpus& corpus) {
    std::vector<LabeledExample> out;
    for (const auto& u : corpus.utterances) {
        require(u.text.has_value(), "labeled corpus utterance without transcript: " + u.id);
        out.push_back({u.id, u.frames, *u.text});
    }
    return out;
}

inline void write_stage_report(const fs::path& dir, const StageReport& rep,
                               const EvalReport& eval) {
    nlohmann::json j = eval.to_json();
    j["stage"] = rep.stage;
    if (rep.pseudo_count) j["pseudo_count"] = *rep.pseudo_count;
    if (rep.pseudo_wer) j["pseudo_wer"] = *rep.pseudo_wer;
    atomic_write_bytes(dir / "report.json", j.dump(2) + "\n");
}

inline StageReport read_stage_report(const fs::path& dir) {
    nlohmann::json j = nlohmann::json::parse(read_bytes(dir / "report.json"));
    StageReport rep;
    rep.stage = j.at("stage").get<std::string>();
    rep.dev_wer = j.at("wer").get<double>();
    rep.dev_cer = j.at("cer").get<double>();
    if (j.contains("pseudo_count")) rep.pseudo_count = j["pseudo_count"].get<std::size_t>();
    if (j.contains("pseudo_wer")) rep.pseudo_wer = j["pseudo_wer"].get<double>();
    return rep;
}

} // namespace pipeline_detail

inline std::vector<std::string> stage_list(const PipelineConfig& cfg,
                                           const PipelineFlags& flags) {
    std::vector<std::string> stages = {"pretrain"};
    if (flags.source_supervised_first) stages.push_back("source-finetune");
    stages.push_back("finetune");
    for (std::size_t n = 1; n <= cfg.iterations; ++n)
        stages.push_back("dust-" + std::to_string(n));
    return stages;
}

// The CLI subcommand that produces a given stage, for error messages.
inline std::string producing_subcommand(const std::string& stage) {
    if (stage == "data") return "gen-corpus";
    if (stage == "pretrain") return "pretrain";
    if (stage == "finetune" || stage == "source-finetune") return "finetune";
    return "dust-run";
}

// Executes one pipeline stage. Prerequisite stages must already carry DONE
// markers; a stage that is itself DONE is skipped with a notice.
inline void run_stage(const fs::path& exp_dir, const PipelineConfig& cfg,
                      const PipelineFlags& flags, const std::string& stage) {
    const fs::path data_dir = exp_dir / "data";
    require(stage_done(data_dir),
            "stage " + stage +
                ": data directory missing or incomplete — run the gen-corpus subcommand first");
    if (stage_done(exp_dir / stage)) {
        std::cerr << "stage " << stage << " already complete, skipping\n";
        return;
    }

    auto stages = stage_list(cfg, flags);
    std::size_t index = 0;
    while (index < stages.size() && stages[index] != stage) ++index;
    require(index < stages.size(), "unknown stage: " + stage);
    for (std::size_t i = 0; i < index; ++i)
        require(stage_done(exp_dir / stages[i]),
                "stage " + stage + ": prerequisite stage " + stages[i] +
                    " is incomplete — run the " + producing_subcommand(stages[i]) +
                    " subcommand first");

    Alphabet alphabet(cfg.data.symbols, cfg.data.separator);
    Corpus tgt_dev = read_corpus(data_dir / "target" / "dev", Split::Dev);

    TrainConfig tc;
    auto stage_cfg = [&](TrainConfig base) {
        base.seed = cfg.seed ^ fnv1a(stage);
        return base;
    };

    auto finish_stage = [&](const ModelCheckpoint& ckpt, const PseudoLabelSet* pseudo) {
        fs::path dir = exp_dir / stage;
        write_checkpoint(dir / "checkpoint.bin", ckpt);
        nlohmann::json resolved = cfg.to_json();
        resolved["stage_train"] = tc.to_json();
        resolved["stage"] = stage;
        atomic_write_bytes(dir / "resolved_config.json", resolved.dump(2) + "\n");
        EvalReport eval = evaluate_model(ckpt, tgt_dev, cfg.eval_beam_width);
        StageReport rep;
        rep.stage = stage;
        rep.dev_wer = eval.wer;
        rep.dev_cer = eval.cer;
        if (pseudo) {
            rep.pseudo_count = pseudo->accepted;
            rep.pseudo_wer = pseudo->pseudo_wer;
            write_pseudoset(dir, *pseudo);
        }
        pipeline_detail::write_stage_report(dir, rep, eval);
        mark_stage_done(dir);
    };

    if (stage == "pretrain") {
        ModelDims dims;
        dims.frame_dim = cfg.data.dim;
        dims.context = cfg.model.context;
        dims.hidden = cfg.model.hidden;
        dims.encoder_layers = cfg.model.encoder_layers;
        dims.vocab = alphabet.vocab_size();
        EncoderModel fresh(dims, cfg.model.dropout_p, cfg.seed ^ fnv1a("model-init"));
        tc = stage_cfg(cfg.pretrain);
        if (flags.skip_pretrain) tc.epochs = 0;
        Corpus src = read_corpus(data_dir / "source" / "unlabeled", Split::Unlabeled);
        std::vector<Matrix> frames;
        for (const auto& u : src.training_view()) frames.push_back(u.frames);
        auto res = pretrain_masked_reconstruction(fresh, alphabet, frames, tc);
        if (res.diverged)
            std::cerr << "warning: pretraining diverged, keeping last finite state\n";
        finish_stage(res.checkpoint, nullptr);
    } else if (stage == "source-finetune") {
        auto f0 = read_checkpoint(exp_dir / "pretrain" / "checkpoint.bin");
        Corpus src_lab = read_corpus(data_dir / "source" / "labeled_train", Split::LabeledTrain);
        tc = stage_cfg(cfg.finetune_cfg);
        auto res = finetune(f0, alphabet, pipeline_detail::to_examples(src_lab), {}, tc, stage);
        finish_stage(res.checkpoint, nullptr);
    } else if (stage == "finetune") {
        std::string parent = flags.source_supervised_first ? "source-finetune" : "pretrain";
        auto f0 = read_checkpoint(exp_dir / parent / "checkpoint.bin");
        Corpus tgt_train = read_corpus(data_dir / "target" / "labeled_train", Split::LabeledTrain);
        Corpus tgt_valid = read_corpus(data_dir / "target" / "labeled_valid", Split::LabeledValid);
        tc = stage_cfg(cfg.finetune_cfg);
        auto res = finetune(f0, alphabet, pipeline_detail::to_examples(tgt_train),
                            pipeline_detail::to_examples(tgt_valid), tc, stage);
        if (res.diverged)
            std::cerr << "warning: fine-tuning diverged, keeping best checkpoint\n";
        finish_stage(res.checkpoint, nullptr);
    } else { // dust-n
        auto f0 = read_checkpoint(exp_dir / "pretrain" / "checkpoint.bin");
        auto teacher = read_checkpoint(exp_dir / stages[index - 1] / "checkpoint.bin");
        Corpus tgt_train = read_corpus(data_dir / "target" / "labeled_train", Split::LabeledTrain);
        Corpus tgt_valid = read_corpus(data_dir / "target" / "labeled_valid", Split::LabeledValid);
        Corpus tgt_unlab = read_corpus(data_dir / "target" / "unlabeled", Split::Unlabeled);
        tc = stage_cfg(cfg.dust_finetune);
        auto res = dust_iterate(f0, teacher, pipeline_detail::to_examples(tgt_train),
                                pipeline_detail::to_examples(tgt_valid), tgt_unlab, cfg.filter,
                                tc, stage);
        finish_stage(res.student, &res.pseudo);
    }
}

// Writes summary.csv (plot-ready, one row per stage, the Table-2 column
// shape) and summary.json, including the final WERR when baseline/topline
// WERs are configured.
inline PipelineResult collect_summary(const fs::path& exp_dir, const PipelineConfig& cfg,
                                      const PipelineFlags& flags) {
    PipelineResult result;
    result.exp_dir = exp_dir;
    for (const auto& stage : stage_list(cfg, flags))
        result.reports.push_back(pipeline_detail::read_stage_report(exp_dir / stage));

    std::string csv = "stage,pseudo_count,pseudo_wer,dev_wer,dev_cer\n";
    for (const auto& r : result.reports) {
        csv += r.stage + ",";
        csv += (r.pseudo_count ? std::to_string(*r.pseudo_count) : "") + ",";
        csv += (r.pseudo_wer ? std::to_string(*r.pseudo_wer) : "") + ",";
        csv += std::to_string(r.dev_wer) + "," + std::to_string(r.dev_cer) + "\n";
    }
    atomic_write_bytes(exp_dir / "summary.csv", csv);

    nlohmann::json summary = nlohmann::json::array();
    for (const auto& r : result.reports) {
        nlohmann::json j{{"stage", r.stage}, {"dev_wer", r.dev_wer}, {"dev_cer", r.dev_cer}};
        if (r.pseudo_count) j["pseudo_count"] = *r.pseudo_count;
        if (r.pseudo_wer) j["pseudo_wer"] = *r.pseudo_wer;
        summary.push_back(j);
    }
    nlohmann::json top{{"stages", summary}};
    if (cfg.baseline_wer && cfg.topline_wer && !result.reports.empty()) {
        top["werr_final"] =
            werr(*cfg.baseline_wer, result.reports.back().dev_wer, *cfg.topline_wer);
    }
    atomic_write_bytes(exp_dir / "summary.json", top.dump(2) + "\n");
    return result;
}

// Executes pretrain -> finetune -> N x dust iterations under exp_dir,
// resuming after the last DONE stage. Every stage persists its checkpoint,
// resolved config, and dev-set report before the DONE marker appears.
inline PipelineResult run_pipeline(const fs::path& exp_dir, const PipelineConfig& cfg,
                                   const PipelineFlags& flags = {}) {
    generate_data(exp_dir, cfg);
    auto stages = stage_list(cfg, flags);
    std::size_t next = resume_scan(exp_dir, stages);
    for (std::size_t i = next; i < stages.size(); ++i) run_stage(exp_dir, cfg, flags, stages[i]);
    return collect_summary(exp_dir, cfg, flags);
}

} // namespace dust
