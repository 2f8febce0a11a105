#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dust/adam.hpp"
#include "dust/alphabet.hpp"
#include "dust/checkpoint.hpp"
#include "dust/corpus.hpp"
#include "dust/ctc.hpp"
#include "dust/error.hpp"
#include "dust/matrix.hpp"
#include "dust/model.hpp"
#include "dust/rng.hpp"

#include "json.hpp"

namespace dust {

struct TrainConfig {
    double max_lr = 1e-4;
    std::size_t warmup_steps = 400;  // optimizer steps until max_lr
    std::size_t freeze_steps = 200;  // micro-iterations with projection-only updates
    std::size_t epochs = 60;
    std::size_t mask_span = 10;
    double mask_target_fraction = 0.65;
    std::size_t frame_budget_per_batch = 2000;
    std::size_t grad_accumulation = 4;
    std::uint64_t seed = 1;

    void validate() const {
        require(mask_target_fraction > 0.0 && mask_target_fraction < 1.0,
                "TrainConfig: mask_target_fraction in (0,1)");
        require(mask_span >= 1, "TrainConfig: mask_span >= 1");
        require(grad_accumulation >= 1, "TrainConfig: grad_accumulation >= 1");
        require(warmup_steps >= 1, "TrainConfig: warmup_steps >= 1");
        require(frame_budget_per_batch >= 1, "TrainConfig: frame_budget_per_batch >= 1");
    }

    nlohmann::json to_json() const {
        return {{"max_lr", max_lr},
                {"warmup_steps", warmup_steps},
                {"freeze_steps", freeze_steps},
                {"epochs", epochs},
                {"mask_span", mask_span},
                {"mask_target_fraction", mask_target_fraction},
                {"frame_budget_per_batch", frame_budget_per_batch},
                {"grad_accumulation", grad_accumulation},
                {"seed", seed}};
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.max_lr = j.value("max_lr", c.max_lr);
        c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
        c.freeze_steps = j.value("freeze_steps", c.freeze_steps);
        c.epochs = j.value("epochs", c.epochs);
        c.mask_span = j.value("mask_span", c.mask_span);
        c.mask_target_fraction = j.value("mask_target_fraction", c.mask_target_fraction);
        c.frame_budget_per_batch = j.value("frame_budget_per_batch", c.frame_budget_per_batch);
        c.grad_accumulation = j.value("grad_accumulation", c.grad_accumulation);
        c.seed = j.value("seed", c.seed);
        c.validate();
        return c;
    }
};

// lr = max_lr * warmup^0.5 * min(step^-0.5, step * warmup^-1.5)
// Linear ramp to max_lr at step == warmup_steps, then inverse-sqrt decay.
inline double lr_at(std::size_t step, double max_lr, std::size_t warmup_steps) {
    require(step >= 1, "lr_at: step must be >= 1 (formula is singular at 0)");
    require(warmup_steps >= 1, "lr_at: warmup_steps must be >= 1");
    const double s = double(step);
    const double w = double(warmup_steps);
    return max_lr * std::sqrt(w) * std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

struct TimeMask {
    Matrix frames;           // masked copy
    std::vector<bool> mask;  // true where replaced
    std::size_t masked_count = 0;
};

// Span starts are sampled independently at every frame with a start
// probability solved so expected coverage equals target_fraction
// (overlapping spans allowed, spans truncate at the end). Masked frames
// are replaced with `fill` (the model's learned mask vector).
inline TimeMask apply_time_mask(const Matrix& frames, std::size_t span, double target_fraction,
                                SeededRng& rng, const std::vector<double>& fill) {
    require(frames.rows >= span, "apply_time_mask: fewer frames than mask span");
    require(target_fraction > 0.0 && target_fraction < 1.0,
            "apply_time_mask: target_fraction in (0,1)");
    require(fill.size() == frames.cols, "apply_time_mask: fill vector dimension mismatch");

    // P(frame covered) = 1 - (1-q)^span for interior frames; solve for q.
    const double q = 1.0 - std::pow(1.0 - target_fraction, 1.0 / double(span));
    TimeMask out;
    out.frames = frames;
    out.mask.assign(frames.rows, false);
    for (std::size_t t = 0; t < frames.rows; ++t) {
        if (!rng.bernoulli(q)) continue;
        for (std::size_t s = t; s < std::min(t + span, frames.rows); ++s) out.mask[s] = true;
    }
    for (std::size_t t = 0; t < frames.rows; ++t) {
        if (!out.mask[t]) continue;
        ++out.masked_count;
        std::copy(fill.begin(), fill.end(), out.frames.row(t));
    }
    return out;
}

struct LabeledExample {
    std::string id;
    Matrix frames;
    std::string text;
};

// Greedy packing in the given order: never splits an utterance, never
// exceeds the budget except when a single utterance alone does.
inline std::vector<std::vector<std::size_t>> pack_batches(
    const std::vector<std::size_t>& order, const std::vector<LabeledExample>& examples,
    std::size_t frame_budget) {
    std::vector<std::vector<std::size_t>> batches;
    std::vector<std::size_t> cur;
    std::size_t cur_frames = 0;
    for (std::size_t idx : order) {
        std::size_t t = examples[idx].frames.rows;
        if (!cur.empty() && cur_frames + t > frame_budget) {
            batches.push_back(std::move(cur));
            cur.clear();
            cur_frames = 0;
        }
        cur.push_back(idx);
        cur_frames += t;
    }
    if (!cur.empty()) batches.push_back(std::move(cur));
    return batches;
}

namespace train_detail {

inline std::vector<double> mask_fill_vector(const EncoderModel& model) {
    const auto& b = model.block("mask_embed");
    return std::vector<double>(model.block_data(b), model.block_data(b) + b.size());
}

inline void add_mask_embed_grad(const EncoderModel& model, std::vector<double>& grad,
                                const Matrix& input_grad, const std::vector<bool>& mask) {
    const auto& b = model.block("mask_embed");
    for (std::size_t t = 0; t < input_grad.rows; ++t) {
        if (!mask[t]) continue;
        for (std::size_t k = 0; k < input_grad.cols; ++k)
            grad[b.offset + k] += input_grad(t, k);
    }
}

inline void add_scaled(std::vector<double>& acc, const std::vector<double>& g, double s) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s * g[i];
}

// Mean deterministic CTC loss over a held-out set; infeasible targets are
// skipped (they carry no usable training signal either).
inline double validation_loss(const EncoderModel& model, const Alphabet& alphabet,
                              const std::vector<LabeledExample>& valid) {
    double total = 0.0;
    std::size_t counted = 0;
    for (const auto& ex : valid) {
        auto target = alphabet.encode(ex.text);
        try {
            auto [logits, cache] = forward(model, ex.frames, ForwardMode::deterministic());
            auto lat = log_softmax(logits);
            auto [loss, grad] = ctc_loss_and_grad(lat, target);
            total += loss;
            ++counted;
        } catch (const Error&) {
            continue;
        }
    }
    return counted == 0 ? 0.0 : total / double(counted);
}

} // namespace train_detail

struct FinetuneResult {
    ModelCheckpoint checkpoint;
    std::vector<double> train_loss_per_epoch;
    std::vector<double> valid_loss_per_epoch;
    bool diverged = false;
};

// CTC fine-tuning: projection-only for the first freeze_steps
// micro-iterations, then joint encoder+projection training, feature
// extractor frozen throughout, inverse-sqrt warmup schedule, gradient
// accumulation, frame-budget batch packing, best-validation checkpoint
// selection. Fully deterministic given (init, data order, cfg).
inline FinetuneResult finetune(const ModelCheckpoint& init, const Alphabet& alphabet,
                               const std::vector<LabeledExample>& train,
                               const std::vector<LabeledExample>& valid,
                               const TrainConfig& cfg, const std::string& stage) {
    cfg.validate();
    require(!train.empty(), "finetune: empty training set");

    FinetuneResult result;
    EncoderModel model = init.model;
    if (!(init.alphabet == alphabet)) {
        model.reset_projection(alphabet.vocab_size(), cfg.seed ^ 0x9827ull);
    }

    result.checkpoint = ModelCheckpoint{model, alphabet, stage, init.id(), cfg.seed};
    if (cfg.epochs == 0) return result;

    AdamState opt(model.params().size());
    std::vector<double> acc(model.params().size(), 0.0);
    std::size_t micro_iter = 0;  // training iterations (micro-batches)
    std::size_t opt_step = 0;    // parameter updates
    std::size_t accumulated = 0;

    std::vector<double> best_params = model.params();
    double best_valid = train_detail::validation_loss(model, alphabet, valid);
    SeededRng drop_seeds(cfg.seed ^ 0xD40956EDull);
    SeededRng mask_rng(cfg.seed ^ 0x3A5C179Bull);

    auto do_step = [&]() {
        for (double& v : acc) v /= double(accumulated);
        ++opt_step;
        adam_step(opt, model.params(), acc, lr_at(opt_step, cfg.max_lr, cfg.warmup_steps),
                  &model);
        std::fill(acc.begin(), acc.end(), 0.0);
        accumulated = 0;
    };

    bool stop = false;
    for (std::size_t epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
        SeededRng shuffle_rng(cfg.seed ^ (0xE90C000ull + epoch));
        std::vector<std::size_t> order(train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

        auto batches = pack_batches(order, train, cfg.frame_budget_per_batch);
        double epoch_loss = 0.0;
        std::size_t epoch_counted = 0;

        for (const auto& batch : batches) {
            ++micro_iter;
            TrainableMask trainable = micro_iter <= cfg.freeze_steps
                                          ? TrainableMask::projection_only()
                                          : TrainableMask::joint();
            std::vector<double> micro(model.params().size(), 0.0);
            std::size_t used = 0;
            for (std::size_t idx : batch) {
                const auto& ex = train[idx];
                std::uint64_t dseed = drop_seeds.next_u64();
                std::vector<int> target;
                try {
                    target = alphabet.encode(ex.text);
                } catch (const Error&) {
                    continue;
                }
                if (ex.frames.rows < cfg.mask_span) continue;
                TimeMask tm = apply_time_mask(ex.frames, cfg.mask_span,
                                              cfg.mask_target_fraction, mask_rng,
                                              train_detail::mask_fill_vector(model));
                try {
                    auto [logits, cache] =
                        forward(model, tm.frames, ForwardMode::with_dropout(dseed));
                    auto lat = log_softmax(logits);
                    auto [loss, lgrad] = ctc_loss_and_grad(lat, target);
                    if (!std::isfinite(loss)) { stop = true; break; }
                    Matrix input_grad;
                    auto g = backward(model, cache, lgrad, trainable, &input_grad);
                    if (trainable.mask_embed)
                        train_detail::add_mask_embed_grad(model, g, input_grad, tm.mask);
                    train_detail::add_scaled(micro, g, 1.0);
                    epoch_loss += loss;
                    ++epoch_counted;
                    ++used;
                } catch (const Error&) {
                    continue; // infeasible target for this length, skip
                }
            }
            if (stop) break;
            if (used > 0) {
                train_detail::add_scaled(acc, micro, 1.0 / double(used));
                ++accumulated;
            }
            if (accumulated == cfg.grad_accumulation) do_step();
        }
        if (stop) {
            result.diverged = true;
            break;
        }
        if (accumulated > 0) do_step();

        result.train_loss_per_epoch.push_back(
            epoch_counted ? epoch_loss / double(epoch_counted) : 0.0);
        double vloss = train_detail::validation_loss(model, alphabet, valid);
        result.valid_loss_per_epoch.push_back(vloss);
        if (valid.empty()) {
            best_params = model.params(); // no held-out split: keep the latest
        } else if (vloss < best_valid) {
            best_valid = vloss;
            best_params = model.params();
        }
    }

    model.params() = best_params;
    result.checkpoint.model = std::move(model);
    return result;
}

struct PretrainResult {
    ModelCheckpoint checkpoint;
    std::vector<double> loss_per_epoch; // masked-frame reconstruction MSE
    bool diverged = false;
};

// Masked-frame reconstruction: mask spans of input frames, run the full
// network through the reconstruction head, and regress the masked
// positions onto the original frames. Loss has support only on masked
// frames.
inline PretrainResult pretrain_masked_reconstruction(const EncoderModel& init,
                                                     const Alphabet& alphabet,
                                                     const std::vector<Matrix>& frames_set,
                                                     const TrainConfig& cfg) {
    cfg.validate();
    require(!frames_set.empty(), "pretrain: empty unlabeled corpus");

    PretrainResult result;
    EncoderModel model = init;
    result.checkpoint = ModelCheckpoint{model, alphabet, "pretrain", "", cfg.seed};
    if (cfg.epochs == 0) return result;

    AdamState opt(model.params().size());
    std::vector<double> acc(model.params().size(), 0.0);
    std::size_t opt_step = 0;
    std::size_t accumulated = 0;
    SeededRng drop_seeds(cfg.seed ^ 0x77D40ull);
    SeededRng mask_rng(cfg.seed ^ 0x11BEEFull);
    TrainableMask trainable = TrainableMask::pretrain();

    auto do_step = [&]() {
        for (double& v : acc) v /= double(accumulated);
        ++opt_step;
        adam_step(opt, model.params(), acc, lr_at(opt_step, cfg.max_lr, cfg.warmup_steps),
                  &model);
        std::fill(acc.begin(), acc.end(), 0.0);
        accumulated = 0;
    };

    bool stop = false;
    for (std::size_t epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
        SeededRng shuffle_rng(cfg.seed ^ (0xAB000ull + epoch));
        std::vector<std::size_t> order(frames_set.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

        double epoch_loss = 0.0;
        std::size_t counted = 0;
        for (std::size_t idx : order) {
            const Matrix& orig = frames_set[idx];
            if (orig.rows < cfg.mask_span) continue;
            std::uint64_t dseed = drop_seeds.next_u64();
            TimeMask tm = apply_time_mask(orig, cfg.mask_span, cfg.mask_target_fraction,
                                          mask_rng, train_detail::mask_fill_vector(model));
            if (tm.masked_count == 0) continue;

            auto [recon, cache] = forward(model, tm.frames, ForwardMode::with_dropout(dseed),
                                          Head::Reconstruction);
            double loss = 0.0;
            Matrix dout(recon.rows, recon.cols);
            const double norm = double(tm.masked_count * orig.cols);
            for (std::size_t t = 0; t < recon.rows; ++t) {
                if (!tm.mask[t]) continue;
                for (std::size_t k = 0; k < recon.cols; ++k) {
                    double diff = recon(t, k) - orig(t, k);
                    loss += diff * diff / norm;
                    dout(t, k) = 2.0 * diff / norm;
                }
            }
            if (!std::isfinite(loss)) { stop = true; break; }
            Matrix input_grad;
            auto g = backward(model, cache, dout, trainable, &input_grad);
            train_detail::add_mask_embed_grad(model, g, input_grad, tm.mask);
            train_detail::add_scaled(acc, g, 1.0);
            ++accumulated;
            epoch_loss += loss;
            ++counted;
            if (accumulated == cfg.grad_accumulation) do_step();
        }
        if (stop) {
            result.diverged = true;
            break;
        }
        if (accumulated > 0) do_step();
        result.loss_per_epoch.push_back(counted ? epoch_loss / double(counted) : 0.0);
    }

    result.checkpoint.model = std::move(model);
    return result;
}

} // namespace dust
