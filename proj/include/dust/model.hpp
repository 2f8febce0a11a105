#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "dust/error.hpp"
#include "dust/matrix.hpp"
#include "dust/rng.hpp"

namespace dust {

enum class ParamGroup { FeatureExtractor, Encoder, Projection, ReconHead, MaskEmbed };

struct ParamBlock {
    std::string name;
    ParamGroup group;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t offset = 0;
    std::size_t size() const { return rows * cols; }
};

// Which parameter groups receive gradient. The feature extractor stays
// frozen during every fine-tuning phase; pretraining flips it on.
struct TrainableMask {
    bool feature_extractor = false;
    bool encoder = true;
    bool projection = true;
    bool recon_head = false;
    bool mask_embed = true;

    bool allows(ParamGroup g) const {
        switch (g) {
            case ParamGroup::FeatureExtractor: return feature_extractor;
            case ParamGroup::Encoder: return encoder;
            case ParamGroup::Projection: return projection;
            case ParamGroup::ReconHead: return recon_head;
            case ParamGroup::MaskEmbed: return mask_embed;
        }
        return false;
    }

    static TrainableMask projection_only() {
        return TrainableMask{false, false, true, false, false};
    }
    static TrainableMask joint() {
        return TrainableMask{false, true, true, false, true};
    }
    static TrainableMask pretrain() {
        return TrainableMask{true, true, false, true, true};
    }
};

struct ModelDims {
    std::size_t frame_dim = 8;     // d
    std::size_t context = 3;       // frames concatenated by the extractor, odd
    std::size_t hidden = 32;       // h
    std::size_t encoder_layers = 2;
    std::size_t vocab = 10;        // |V| including blank
};

// Windowed-affine feature extractor + MLP encoder with dropout + two
// affine heads (character projection and frame reconstruction) + a
// learned mask-fill vector used by time masking.
class EncoderModel {
public:
    EncoderModel() = default;

    EncoderModel(const ModelDims& dims, double dropout_p, std::uint64_t init_seed)
        : dims_(dims), dropout_p_(dropout_p) {
        require(dims.context % 2 == 1, "EncoderModel: context must be odd");
        require(dims.encoder_layers >= 1, "EncoderModel: need at least one encoder layer");
        require(dropout_p >= 0.0 && dropout_p < 1.0, "EncoderModel: dropout_p in [0,1)");
        layout();
        init_params(init_seed);
    }

    const ModelDims& dims() const { return dims_; }
    double dropout_p() const { return dropout_p_; }
    void set_dropout_p(double p) {
        require(p >= 0.0 && p < 1.0, "EncoderModel: dropout_p in [0,1)");
        dropout_p_ = p;
    }

    const std::vector<double>& params() const { return params_; }
    std::vector<double>& params() { return params_; }
    const std::vector<ParamBlock>& blocks() const { return blocks_; }

    const ParamBlock& block(const std::string& name) const {
        for (const auto& b : blocks_)
            if (b.name == name) return b;
        throw Error("EncoderModel: no parameter block named " + name);
    }

    const double* block_data(const ParamBlock& b) const { return params_.data() + b.offset; }
    double* block_data(const ParamBlock& b) { return params_.data() + b.offset; }

    // Name of the block owning flat parameter index i, for error reports.
    std::string block_of_index(std::size_t i) const {
        for (const auto& b : blocks_)
            if (i >= b.offset && i < b.offset + b.size()) return b.name;
        return "<out of range>";
    }

    std::uint64_t param_checksum() const {
        const auto* bytes = reinterpret_cast<const unsigned char*>(params_.data());
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (std::size_t i = 0; i < params_.size() * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ull;
        }
        return h;
    }

    // Drops the trained projection and installs a freshly initialized one
    // sized for a new vocabulary. Everything else is carried over.
    void reset_projection(std::size_t new_vocab, std::uint64_t seed) {
        EncoderModel fresh;
        fresh.dims_ = dims_;
        fresh.dims_.vocab = new_vocab;
        fresh.dropout_p_ = dropout_p_;
        fresh.layout();
        fresh.params_.assign(fresh.total_params_, 0.0);
        for (const auto& b : blocks_) {
            if (b.group == ParamGroup::Projection) continue;
            const auto& nb = fresh.block(b.name);
            std::memcpy(fresh.block_data(nb), block_data(b), b.size() * sizeof(double));
        }
        SeededRng rng(seed);
        fresh.init_block(fresh.block("proj_w"), rng, 1.0 / std::sqrt(double(dims_.hidden)));
        *this = fresh;
    }

private:
    void layout() {
        blocks_.clear();
        std::size_t off = 0;
        auto add = [&](std::string name, ParamGroup g, std::size_t r, std::size_t c) {
            blocks_.push_back({std::move(name), g, r, c, off});
            off += r * c;
        };
        const std::size_t cd = dims_.context * dims_.frame_dim;
        add("fx_w", ParamGroup::FeatureExtractor, dims_.hidden, cd);
        add("fx_b", ParamGroup::FeatureExtractor, 1, dims_.hidden);
        for (std::size_t l = 0; l < dims_.encoder_layers; ++l) {
            add("enc" + std::to_string(l) + "_w", ParamGroup::Encoder, dims_.hidden, dims_.hidden);
            add("enc" + std::to_string(l) + "_b", ParamGroup::Encoder, 1, dims_.hidden);
        }
        add("proj_w", ParamGroup::Projection, dims_.vocab, dims_.hidden);
        add("proj_b", ParamGroup::Projection, 1, dims_.vocab);
        add("rec_w", ParamGroup::ReconHead, dims_.frame_dim, dims_.hidden);
        add("rec_b", ParamGroup::ReconHead, 1, dims_.frame_dim);
        add("mask_embed", ParamGroup::MaskEmbed, 1, dims_.frame_dim);
        total_params_ = off;
    }

    void init_block(const ParamBlock& b, SeededRng& rng, double scale) {
        double* p = block_data(b);
        for (std::size_t i = 0; i < b.size(); ++i) p[i] = rng.gaussian(0.0, scale);
    }

    void init_params(std::uint64_t seed) {
        params_.assign(total_params_, 0.0);
        SeededRng rng(seed);
        for (const auto& b : blocks_) {
            if (b.name.ends_with("_b") || b.name == "mask_embed") continue; // zeros
            init_block(b, rng, 1.0 / std::sqrt(double(b.cols)));
        }
    }

    ModelDims dims_;
    double dropout_p_ = 0.0;
    std::vector<double> params_;
    std::vector<ParamBlock> blocks_;
    std::size_t total_params_ = 0;
};

enum class Head { Projection, Reconstruction };

struct ForwardMode {
    bool stochastic = false;
    std::uint64_t seed = 0;
    static ForwardMode deterministic() { return {false, 0}; }
    static ForwardMode with_dropout(std::uint64_t seed) { return {true, seed}; }
};

struct ForwardCache {
    Head head = Head::Projection;
    Matrix windowed;             // T x (c*d)
    Matrix extractor_out;        // T x h
    std::vector<Matrix> act;     // per layer, tanh output, T x h
    std::vector<Matrix> dropped; // per layer, after inverted-dropout mask
    std::vector<Matrix> masks;   // per layer, 0 or 1/(1-p); empty cols when deterministic
    bool stochastic = false;
    std::uint64_t param_checksum = 0;
};

namespace detail {

// Y(t,:) = X(t,:) W^T + b, W is (m x n), X is (T x n).
inline Matrix affine(const Matrix& x, const double* w, const double* b,
                     std::size_t m, std::size_t n) {
    Matrix y(x.rows, m);
    for (std::size_t t = 0; t < x.rows; ++t) {
        const double* xr = x.row(t);
        double* yr = y.row(t);
        for (std::size_t j = 0; j < m; ++j) {
            const double* wr = w + j * n;
            double acc = b[j];
            for (std::size_t k = 0; k < n; ++k) acc += wr[k] * xr[k];
            yr[j] = acc;
        }
    }
    return y;
}

// Accumulates gW += dY^T X, gb += column sums of dY, and returns dX = dY W.
inline Matrix affine_backward(const Matrix& x, const Matrix& dy, const double* w,
                              double* gw, double* gb, std::size_t m, std::size_t n) {
    for (std::size_t t = 0; t < x.rows; ++t) {
        const double* xr = x.row(t);
        const double* dyr = dy.row(t);
        for (std::size_t j = 0; j < m; ++j) {
            double g = dyr[j];
            gb[j] += g;
            double* gwr = gw + j * n;
            for (std::size_t k = 0; k < n; ++k) gwr[k] += g * xr[k];
        }
    }
    Matrix dx(x.rows, n);
    for (std::size_t t = 0; t < x.rows; ++t) {
        const double* dyr = dy.row(t);
        double* dxr = dx.row(t);
        for (std::size_t j = 0; j < m; ++j) {
            const double* wr = w + j * n;
            double g = dyr[j];
            for (std::size_t k = 0; k < n; ++k) dxr[k] += g * wr[k];
        }
    }
    return dx;
}

} // namespace detail

// Runs the network on a T x d frame matrix. Deterministic mode applies no
// dropout mask (inverted dropout: the stochastic masks already carry the
// 1/(1-p) scaling, so expectations line up without inference rescaling).
inline std::pair<Matrix, ForwardCache> forward(const EncoderModel& model, const Matrix& frames,
                                               ForwardMode mode, Head head = Head::Projection) {
    const auto& d = model.dims();
    if (frames.cols != d.frame_dim) {
        throw Error("forward: frames have " + std::to_string(frames.cols) +
                    " columns, model expects " + std::to_string(d.frame_dim));
    }
    require(frames.rows >= 1, "forward: empty frame matrix");

    ForwardCache cache;
    cache.head = head;
    cache.stochastic = mode.stochastic && model.dropout_p() > 0.0;
    cache.param_checksum = model.param_checksum();

    const std::size_t T = frames.rows;
    const std::size_t half = d.context / 2;
    const std::size_t cd = d.context * d.frame_dim;

    // Zero-padded context windows.
    cache.windowed = Matrix(T, cd);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t c = 0; c < d.context; ++c) {
            long src = static_cast<long>(t) + static_cast<long>(c) - static_cast<long>(half);
            if (src < 0 || src >= static_cast<long>(T)) continue;
            std::memcpy(cache.windowed.row(t) + c * d.frame_dim,
                        frames.row(static_cast<std::size_t>(src)),
                        d.frame_dim * sizeof(double));
        }
    }

    const auto& fx_w = model.block("fx_w");
    const auto& fx_b = model.block("fx_b");
    cache.extractor_out = detail::affine(cache.windowed, model.block_data(fx_w),
                                         model.block_data(fx_b), d.hidden, cd);

    SeededRng drop_rng(mode.seed);
    const double p = model.dropout_p();
    const double keep_scale = p > 0.0 ? 1.0 / (1.0 - p) : 1.0;

    const Matrix* z = &cache.extractor_out;
    for (std::size_t l = 0; l < d.encoder_layers; ++l) {
        const auto& w = model.block("enc" + std::to_string(l) + "_w");
        const auto& b = model.block("enc" + std::to_string(l) + "_b");
        Matrix a = detail::affine(*z, model.block_data(w), model.block_data(b),
                                  d.hidden, d.hidden);
        Matrix act(T, d.hidden);
        for (std::size_t i = 0; i < a.data.size(); ++i) act.data[i] = std::tanh(a.data[i]);

        if (cache.stochastic) {
            Matrix mask(T, d.hidden);
            for (std::size_t i = 0; i < mask.data.size(); ++i)
                mask.data[i] = drop_rng.uniform() < p ? 0.0 : keep_scale;
            Matrix dropped(T, d.hidden);
            for (std::size_t i = 0; i < dropped.data.size(); ++i)
                dropped.data[i] = act.data[i] * mask.data[i];
            cache.masks.push_back(std::move(mask));
            cache.dropped.push_back(std::move(dropped));
        } else {
            cache.masks.emplace_back();
            cache.dropped.push_back(act);
        }
        cache.act.push_back(std::move(act));
        z = &cache.dropped.back();
    }

    Matrix out;
    if (head == Head::Projection) {
        const auto& pw = model.block("proj_w");
        const auto& pb = model.block("proj_b");
        out = detail::affine(*z, model.block_data(pw), model.block_data(pb),
                             d.vocab, d.hidden);
    } else {
        const auto& rw = model.block("rec_w");
        const auto& rb = model.block("rec_b");
        out = detail::affine(*z, model.block_data(rw), model.block_data(rb),
                             d.frame_dim, d.hidden);
    }
    return {std::move(out), std::move(cache)};
}

// Backpropagates an output gradient to a flat parameter gradient. Masked-out
// groups get exactly zero entries. If input_grad is non-null it receives
// dLoss/dFrames (T x d), which training uses to update the mask-fill vector.
inline std::vector<double> backward(const EncoderModel& model, const ForwardCache& cache,
                                    const Matrix& out_grad, const TrainableMask& trainable,
                                    Matrix* input_grad = nullptr) {
    const auto& d = model.dims();
    if (cache.param_checksum != model.param_checksum())
        throw Error("backward: stale cache (model parameters changed since forward)");
    const std::size_t out_dim = cache.head == Head::Projection ? d.vocab : d.frame_dim;
    check_shape(out_grad, cache.extractor_out.rows, out_dim, "backward: out_grad");

    std::vector<double> grad(model.params().size(), 0.0);
    const Matrix& last_z = cache.dropped.back();

    Matrix dz;
    if (cache.head == Head::Projection) {
        const auto& pw = model.block("proj_w");
        const auto& pb = model.block("proj_b");
        dz = detail::affine_backward(last_z, out_grad, model.block_data(pw),
                                     grad.data() + pw.offset, grad.data() + pb.offset,
                                     d.vocab, d.hidden);
    } else {
        const auto& rw = model.block("rec_w");
        const auto& rb = model.block("rec_b");
        dz = detail::affine_backward(last_z, out_grad, model.block_data(rw),
                                     grad.data() + rw.offset, grad.data() + rb.offset,
                                     d.frame_dim, d.hidden);
    }

    for (std::size_t li = d.encoder_layers; li-- > 0;) {
        const Matrix& act = cache.act[li];
        Matrix da(act.rows, act.cols);
        if (cache.stochastic) {
            const Matrix& mask = cache.masks[li];
            for (std::size_t i = 0; i < da.data.size(); ++i)
                da.data[i] = dz.data[i] * mask.data[i] * (1.0 - act.data[i] * act.data[i]);
        } else {
            for (std::size_t i = 0; i < da.data.size(); ++i)
                da.data[i] = dz.data[i] * (1.0 - act.data[i] * act.data[i]);
        }
        const Matrix& layer_in = li == 0 ? cache.extractor_out : cache.dropped[li - 1];
        const auto& w = model.block("enc" + std::to_string(li) + "_w");
        const auto& b = model.block("enc" + std::to_string(li) + "_b");
        dz = detail::affine_backward(layer_in, da, model.block_data(w),
                                     grad.data() + w.offset, grad.data() + b.offset,
                                     d.hidden, d.hidden);
    }

    const auto& fx_w = model.block("fx_w");
    const auto& fx_b = model.block("fx_b");
    Matrix du = detail::affine_backward(cache.windowed, dz, model.block_data(fx_w),
                                        grad.data() + fx_w.offset, grad.data() + fx_b.offset,
                                        d.hidden, d.context * d.frame_dim);

    if (input_grad) {
        const std::size_t T = cache.windowed.rows;
        const std::size_t half = d.context / 2;
        *input_grad = Matrix(T, d.frame_dim);
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t c = 0; c < d.context; ++c) {
                long src = static_cast<long>(t) + static_cast<long>(c) - static_cast<long>(half);
                if (src < 0 || src >= static_cast<long>(T)) continue;
                const double* dur = du.row(t) + c * d.frame_dim;
                double* igr = input_grad->row(static_cast<std::size_t>(src));
                for (std::size_t k = 0; k < d.frame_dim; ++k) igr[k] += dur[k];
            }
        }
    }

    for (const auto& blk : model.blocks()) {
        if (trainable.allows(blk.group)) continue;
        std::fill(grad.begin() + blk.offset, grad.begin() + blk.offset + blk.size(), 0.0);
    }
    return grad;
}

} // namespace dust
