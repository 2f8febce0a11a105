#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "dust/synth.hpp"
#include "dust/train.hpp"

using namespace dust;

TEST_CASE("lr schedule closed forms") {
    // linear ramp peaks at the warmup boundary, then inverse-sqrt decay
    CHECK(lr_at(8000, 1e-4, 8000) == Catch::Approx(1e-4).epsilon(1e-12));
    CHECK(lr_at(4000, 1e-4, 8000) == Catch::Approx(5e-5).epsilon(1e-12));
    CHECK(lr_at(32000, 1e-4, 8000) == Catch::Approx(5e-5).epsilon(1e-12));
    CHECK(lr_at(1, 1e-4, 8000) == Catch::Approx(1e-4 / 8000.0).epsilon(1e-12));
    CHECK_THROWS_AS(lr_at(0, 1e-4, 8000), Error);

    // monotone up before warmup, monotone down after
    for (std::size_t s = 2; s <= 400; ++s)
        CHECK(lr_at(s, 1e-3, 400) > lr_at(s - 1, 1e-3, 400));
    for (std::size_t s = 401; s <= 800; ++s)
        CHECK(lr_at(s, 1e-3, 400) < lr_at(s - 1, 1e-3, 400));
}

TEST_CASE("time mask coverage approaches the target fraction") {
    SeededRng rng(3);
    const std::size_t T = 400, span = 10;
    const double target = 0.65;
    std::vector<double> fill(4, 0.0);
    double covered = 0.0, total = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        Matrix frames(T, 4, 1.0);
        TimeMask tm = apply_time_mask(frames, span, target, rng, fill);
        covered += double(tm.masked_count);
        total += double(T);
        // masked rows were replaced by fill, others untouched
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t k = 0; k < 4; ++k)
                CHECK(tm.frames(t, k) == (tm.mask[t] ? 0.0 : 1.0));
    }
    CHECK(covered / total == Catch::Approx(target).margin(0.03));
}

TEST_CASE("time mask rejects bad inputs") {
    SeededRng rng(1);
    std::vector<double> fill(4, 0.0);
    Matrix small(5, 4, 0.0);
    CHECK_THROWS_AS(apply_time_mask(small, 10, 0.65, rng, fill), Error);
    Matrix ok(20, 4, 0.0);
    CHECK_THROWS_AS(apply_time_mask(ok, 10, 0.0, rng, fill), Error);
    std::vector<double> bad_fill(3, 0.0);
    CHECK_THROWS_AS(apply_time_mask(ok, 10, 0.65, rng, bad_fill), Error);
}

TEST_CASE("batch packing respects the frame budget") {
    std::vector<LabeledExample> ex;
    for (std::size_t t : {30, 50, 20, 90, 10, 40})
        ex.push_back({"u" + std::to_string(ex.size()), Matrix(t, 2), "a"});
    std::vector<std::size_t> order{0, 1, 2, 3, 4, 5};

    auto batches = pack_batches(order, ex, 100);
    std::vector<std::size_t> flat;
    for (const auto& b : batches) {
        std::size_t frames = 0;
        for (std::size_t i : b) frames += ex[i].frames.rows;
        CHECK((frames <= 100 || b.size() == 1));
        for (std::size_t i : b) flat.push_back(i);
    }
    CHECK(flat == order); // packing preserves order, loses nothing

    // an oversize utterance gets a batch of its own
    auto lone = pack_batches({3}, ex, 50);
    REQUIRE(lone.size() == 1);
    CHECK(lone[0] == std::vector<std::size_t>{3});
}

namespace {

struct TinyTask {
    Alphabet alphabet{"abc_", '_'};
    LanguageSpec lang;
    std::vector<LabeledExample> train, valid;
    ModelCheckpoint init;

    TinyTask() {
        LanguageParams lp;
        lp.dim = 4;
        lp.symbols = "abc_";
        lp.min_chars = 4;
        lp.max_chars = 8;
        lp.noise_sigma = 0.1;
        lang = generate_language(11, lp);
        SeededRng rng(5);
        for (int i = 0; i < 14; ++i) {
            std::string text = sample_text(lang, rng);
            Matrix frames = emit_frames(lang, text, rng);
            LabeledExample ex{"t" + std::to_string(i), frames, text};
            if (i < 10) train.push_back(ex);
            else valid.push_back(ex);
        }
        ModelDims dims;
        dims.frame_dim = 4;
        dims.context = 3;
        dims.hidden = 12;
        dims.encoder_layers = 1;
        dims.vocab = alphabet.vocab_size();
        init = ModelCheckpoint{EncoderModel(dims, 0.1, 99), alphabet, "init", "", 1};
    }

    TrainConfig config() const {
        TrainConfig tc;
        tc.epochs = 8;
        tc.max_lr = 2e-3;
        tc.warmup_steps = 10;
        tc.freeze_steps = 2;
        tc.mask_span = 4;
        tc.mask_target_fraction = 0.3;
        tc.frame_budget_per_batch = 200;
        tc.grad_accumulation = 2;
        tc.seed = 7;
        return tc;
    }
};

} // namespace

TEST_CASE("finetune with zero epochs returns the initial parameters") {
    TinyTask task;
    TrainConfig tc = task.config();
    tc.epochs = 0;
    auto res = finetune(task.init, task.alphabet, task.train, task.valid, tc, "ft");
    CHECK(res.checkpoint.model.param_checksum() == task.init.model.param_checksum());
    CHECK(res.checkpoint.stage == "ft");
    CHECK(res.checkpoint.parent_id == task.init.id());
}

TEST_CASE("finetune reduces training loss and is bit-exact reproducible") {
    TinyTask task;
    auto res1 = finetune(task.init, task.alphabet, task.train, task.valid, task.config(), "ft");
    auto res2 = finetune(task.init, task.alphabet, task.train, task.valid, task.config(), "ft");
    CHECK(res1.checkpoint.model.params() == res2.checkpoint.model.params());

    REQUIRE(res1.train_loss_per_epoch.size() >= 2);
    CHECK(res1.train_loss_per_epoch.back() < res1.train_loss_per_epoch.front());
    CHECK_FALSE(res1.diverged);

    // a different seed walks a different path
    TrainConfig other = task.config();
    other.seed = 8;
    auto res3 = finetune(task.init, task.alphabet, task.train, task.valid, other, "ft");
    CHECK(res1.checkpoint.model.params() != res3.checkpoint.model.params());
}

TEST_CASE("finetune keeps the best validation checkpoint") {
    TinyTask task;
    auto res = finetune(task.init, task.alphabet, task.train, task.valid, task.config(), "ft");
    double best = train_detail::validation_loss(task.init.model, task.alphabet, task.valid);
    for (double v : res.valid_loss_per_epoch) best = std::min(best, v);
    double kept = train_detail::validation_loss(res.checkpoint.model, task.alphabet, task.valid);
    CHECK(kept == Catch::Approx(best).margin(1e-9));
}

TEST_CASE("finetune resets the projection on an alphabet change") {
    TinyTask task;
    Alphabet bigger("abcd_", '_');
    // transcripts restricted to {a,b,c,_} are still valid under the superset
    auto res = finetune(task.init, bigger, task.train, task.valid, task.config(), "ft");
    CHECK(res.checkpoint.model.dims().vocab == bigger.vocab_size());
    CHECK(res.checkpoint.alphabet == bigger);
}

TEST_CASE("finetune refuses an empty training set") {
    TinyTask task;
    CHECK_THROWS_AS(finetune(task.init, task.alphabet, {}, task.valid, task.config(), "ft"),
                    Error);
}

TEST_CASE("masked reconstruction pretraining reduces loss deterministically") {
    TinyTask task;
    std::vector<Matrix> frames;
    for (const auto& ex : task.train) frames.push_back(ex.frames);

    TrainConfig tc = task.config();
    tc.epochs = 6;
    auto res1 = pretrain_masked_reconstruction(task.init.model, task.alphabet, frames, tc);
    auto res2 = pretrain_masked_reconstruction(task.init.model, task.alphabet, frames, tc);
    CHECK(res1.checkpoint.model.params() == res2.checkpoint.model.params());
    REQUIRE(res1.loss_per_epoch.size() == 6);
    CHECK(res1.loss_per_epoch.back() < res1.loss_per_epoch.front());
    CHECK(res1.checkpoint.stage == "pretrain");
    CHECK_FALSE(res1.diverged);

    tc.epochs = 0;
    auto none = pretrain_masked_reconstruction(task.init.model, task.alphabet, frames, tc);
    CHECK(none.checkpoint.model.param_checksum() == task.init.model.param_checksum());
}

TEST_CASE("train config json round trip and validation") {
    TrainConfig tc;
    tc.max_lr = 3e-3;
    tc.epochs = 17;
    tc.mask_span = 5;
    TrainConfig back = TrainConfig::from_json(tc.to_json());
    CHECK(back.max_lr == tc.max_lr);
    CHECK(back.epochs == tc.epochs);
    CHECK(back.mask_span == tc.mask_span);
    CHECK(back.warmup_steps == tc.warmup_steps);

    TrainConfig bad;
    bad.mask_target_fraction = 1.5;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = TrainConfig{};
    bad.grad_accumulation = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
}
