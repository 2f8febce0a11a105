// Command-line front end for the DUST self-training pipeline.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dust/dustcore.hpp"
#include "dust/pipeline.hpp"
#include "dust/store.hpp"
#include "dust/textdist.hpp"

namespace {

using namespace dust;

struct CommonOpts {
    std::string config_path;
    std::string exp_dir = "exp";
    std::optional<std::uint64_t> seed;
    std::optional<double> tau;
    std::optional<std::size_t> passes;
    std::optional<std::size_t> beam;
    std::optional<std::size_t> iterations;
    bool skip_pretrain = false;
    bool source_supervised_first = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "Pipeline config JSON (defaults built in)");
    cmd->add_option("--exp-dir", o.exp_dir, "Experiment directory");
    cmd->add_option("--seed", o.seed, "Global seed (overrides config)");
    cmd->add_option("--tau", o.tau, "DUST filtering threshold");
    cmd->add_option("--passes", o.passes, "Stochastic decode passes R");
    cmd->add_option("--beam", o.beam, "Beam width");
    cmd->add_option("--iterations", o.iterations, "DUST iterations N");
    cmd->add_flag("--skip-pretrain", o.skip_pretrain, "Random init instead of pretraining");
    cmd->add_flag("--source-supervised-first", o.source_supervised_first,
                  "Fine-tune on source labels before target fine-tuning");
}

PipelineConfig resolve_config(const CommonOpts& o) {
    PipelineConfig cfg = PipelineConfig::reference();
    if (!o.config_path.empty())
        cfg = PipelineConfig::from_json(nlohmann::json::parse(read_bytes(o.config_path)));
    if (o.seed) cfg.seed = *o.seed;
    if (o.tau) cfg.filter.tau = *o.tau;
    if (o.passes) cfg.filter.passes = *o.passes;
    if (o.beam) {
        cfg.filter.beam_width = *o.beam;
        cfg.eval_beam_width = *o.beam;
    }
    if (o.iterations) cfg.iterations = *o.iterations;
    cfg.filter.validate();
    return cfg;
}

PipelineFlags resolve_flags(const CommonOpts& o) {
    return PipelineFlags{o.skip_pretrain, o.source_supervised_first};
}

void print_stage_table(const PipelineResult& result) {
    std::printf("%-16s %8s %12s %10s %10s\n", "stage", "|P|", "pseudo WER", "dev WER",
                "dev CER");
    for (const auto& r : result.reports) {
        std::string pc = r.pseudo_count ? std::to_string(*r.pseudo_count) : "-";
        char pw[32] = "-";
        if (r.pseudo_wer) std::snprintf(pw, sizeof(pw), "%.2f", *r.pseudo_wer);
        std::printf("%-16s %8s %12s %10.2f %10.2f\n", r.stage.c_str(), pc.c_str(), pw,
                    r.dev_wer, r.dev_cer);
    }
}

int cmd_gen_corpus(const CommonOpts& o) {
    PipelineConfig cfg = resolve_config(o);
    generate_data(o.exp_dir, cfg);
    std::cout << "data generated under " << o.exp_dir << "/data\n";
    return 0;
}

int cmd_stage(const CommonOpts& o, const std::string& stage) {
    PipelineConfig cfg = resolve_config(o);
    run_stage(o.exp_dir, cfg, resolve_flags(o), stage);
    StageReport rep = pipeline_detail::read_stage_report(fs::path(o.exp_dir) / stage);
    std::printf("%s: dev WER %.2f, dev CER %.2f\n", stage.c_str(), rep.dev_wer, rep.dev_cer);
    return 0;
}

int cmd_dust_run(const CommonOpts& o) {
    PipelineConfig cfg = resolve_config(o);
    PipelineResult result = run_pipeline(o.exp_dir, cfg, resolve_flags(o));
    print_stage_table(result);
    std::cout << "summary written to " << o.exp_dir << "/summary.csv\n";
    return 0;
}

int cmd_dust_filter(const CommonOpts& o, const std::string& teacher_path,
                    const std::string& out_dir) {
    PipelineConfig cfg = resolve_config(o);
    fs::path data_dir = fs::path(o.exp_dir) / "data";
    require(stage_done(data_dir), "dust-filter: no data — run the gen-corpus subcommand first");
    fs::path teacher_file = teacher_path.empty()
                                ? fs::path(o.exp_dir) / "finetune" / "checkpoint.bin"
                                : fs::path(teacher_path);
    require(fs::exists(teacher_file),
            "dust-filter: teacher checkpoint missing (" + teacher_file.string() +
                ") — run the finetune subcommand first or pass --teacher");
    ModelCheckpoint teacher = read_checkpoint(teacher_file);
    Corpus unlabeled = read_corpus(data_dir / "target" / "unlabeled", Split::Unlabeled);
    PseudoLabelSet set = build_pseudoset(teacher, unlabeled, cfg.filter);
    fs::path out = out_dir.empty() ? fs::path(o.exp_dir) / "dust-filter" : fs::path(out_dir);
    write_pseudoset(out, set);
    std::printf("accepted %zu of %zu utterances (%zu entries)", set.accepted, set.total,
                set.entries.size());
    if (set.pseudo_wer) std::printf(", pseudo-label WER %.2f", *set.pseudo_wer);
    std::printf("\nwritten to %s\n", out.string().c_str());
    return 0;
}

int cmd_evaluate(const CommonOpts& o, const std::string& ckpt_path, const std::string& split,
                 const std::string& out_path) {
    PipelineConfig cfg = resolve_config(o);
    fs::path data_dir = fs::path(o.exp_dir) / "data";
    require(stage_done(data_dir), "evaluate: no data — run the gen-corpus subcommand first");
    require(fs::exists(ckpt_path), "evaluate: checkpoint not found: " + ckpt_path);
    ModelCheckpoint ckpt = read_checkpoint(ckpt_path);
    Split sp = Split::Dev;
    if (split == "labeled_train") sp = Split::LabeledTrain;
    else if (split == "labeled_valid") sp = Split::LabeledValid;
    else if (split == "unlabeled") sp = Split::Unlabeled;
    else require(split == "dev", "evaluate: unknown split " + split);
    Corpus corpus = read_corpus(data_dir / "target" / split, sp);
    EvalReport rep = evaluate_model(ckpt, corpus, cfg.eval_beam_width);
    std::printf("WER %.2f  CER %.2f  (S=%zu I=%zu D=%zu over %zu utterances)\n", rep.wer,
                rep.cer, rep.substitutions, rep.insertions, rep.deletions, rep.utterance_count);
    if (!out_path.empty()) atomic_write_bytes(out_path, rep.to_json().dump(2) + "\n");
    return 0;
}

struct WerrRow {
    std::string name;
    double baseline, model, topline;
};

int cmd_werr_report(std::optional<double> baseline, std::optional<double> model,
                    std::optional<double> topline, const std::string& table_path) {
    std::vector<WerrRow> rows;
    if (!table_path.empty()) {
        // CSV: name,baseline,model,topline (header optional)
        std::string bytes = read_bytes(table_path);
        std::size_t start = 0;
        while (start < bytes.size()) {
            std::size_t end = bytes.find('\n', start);
            if (end == std::string::npos) end = bytes.size();
            std::string line = bytes.substr(start, end - start);
            start = end + 1;
            if (line.empty() || line.find("baseline") != std::string::npos) continue;
            WerrRow row;
            char name[128];
            if (std::sscanf(line.c_str(), "%127[^,],%lf,%lf,%lf", name, &row.baseline,
                            &row.model, &row.topline) == 4) {
                row.name = name;
                rows.push_back(row);
            }
        }
        require(!rows.empty(), "werr-report: no usable rows in " + table_path);
    } else {
        require(baseline && model && topline,
                "werr-report: pass --baseline/--model/--topline or --table");
        rows.push_back({"pointwise", *baseline, *model, *topline});
    }
    double sum = 0.0;
    std::printf("%-12s %10s %10s %10s %10s\n", "name", "baseline", "model", "topline", "WERR");
    for (const auto& r : rows) {
        double w = werr(r.baseline, r.model, r.topline);
        sum += w;
        std::printf("%-12s %10.2f %10.2f %10.2f %10.2f\n", r.name.c_str(), r.baseline, r.model,
                    r.topline, w);
    }
    if (rows.size() > 1) std::printf("%-12s %43.2f\n", "average", sum / double(rows.size()));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-lingual ASR transfer via dropout-uncertainty self-training"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string teacher_path, out_dir, ckpt_path, split = "dev", out_path, table_path;
    std::optional<double> baseline, model, topline;

    auto* gen = app.add_subcommand("gen-corpus", "Generate synthetic source/target corpora");
    add_common(gen, opts);
    auto* pre = app.add_subcommand("pretrain", "Masked-frame-reconstruction pretraining");
    add_common(pre, opts);
    auto* ft = app.add_subcommand("finetune", "CTC fine-tuning on target labeled data");
    add_common(ft, opts);
    auto* filt = app.add_subcommand("dust-filter", "Pseudo-label an unlabeled corpus");
    add_common(filt, opts);
    filt->add_option("--teacher", teacher_path, "Teacher checkpoint (default: finetune stage)");
    filt->add_option("--out", out_dir, "Output directory for the pseudo-label set");
    auto* run = app.add_subcommand("dust-run", "Run the full pipeline (resume-aware)");
    add_common(run, opts);
    auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on a corpus split");
    add_common(ev, opts);
    ev->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
    ev->add_option("--split", split, "Target split: dev (default) or labeled_*");
    ev->add_option("--out", out_path, "Write the JSON report here");
    auto* wr = app.add_subcommand("werr-report", "WER-recovery arithmetic");
    wr->add_option("--baseline", baseline, "Baseline WER");
    wr->add_option("--model", model, "Model WER");
    wr->add_option("--topline", topline, "Topline WER");
    wr->add_option("--table", table_path, "CSV of name,baseline,model,topline rows");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_corpus(opts);
        if (pre->parsed()) return cmd_stage(opts, "pretrain");
        if (ft->parsed())
            return cmd_stage(opts, opts.source_supervised_first ? "source-finetune" : "finetune");
        if (filt->parsed()) return cmd_dust_filter(opts, teacher_path, out_dir);
        if (run->parsed()) return cmd_dust_run(opts);
        if (ev->parsed()) return cmd_evaluate(opts, ckpt_path, split, out_path);
        if (wr->parsed()) return cmd_werr_report(baseline, model, topline, table_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
