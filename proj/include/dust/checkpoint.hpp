#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "dust/alphabet.hpp"
#include "dust/error.hpp"
#include "dust/model.hpp"
#include "dust/store.hpp"

#include "json.hpp"

namespace dust {

// A model frozen at a point in the pipeline, with provenance.
struct ModelCheckpoint {
    EncoderModel model;
    Alphabet alphabet;
    std::string stage;     // "pretrain", "finetune", "dust-3", ...
    std::string parent_id; // checkpoint this one was initialized from
    std::uint64_t seed = 0;

    // Content-derived identifier: stable across identical runs.
    std::string id() const {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(model.param_checksum()));
        return stage + "-" + buf;
    }
};

// "DUSTCKPT", u32 version, u32 meta length, meta JSON, then each parameter
// block as little-endian float64 in shape-table order.
inline std::string encode_checkpoint(const ModelCheckpoint& ckpt) {
    nlohmann::json shape = nlohmann::json::array();
    for (const auto& b : ckpt.model.blocks())
        shape.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
    const auto& dims = ckpt.model.dims();
    nlohmann::json meta{
        {"alphabet", ckpt.alphabet.symbols()},
        {"separator", std::string(1, ckpt.alphabet.separator())},
        {"dims",
         {{"frame_dim", dims.frame_dim},
          {"context", dims.context},
          {"hidden", dims.hidden},
          {"encoder_layers", dims.encoder_layers},
          {"vocab", dims.vocab}}},
        {"dropout_p", ckpt.model.dropout_p()},
        {"stage", ckpt.stage},
        {"parent_id", ckpt.parent_id},
        {"seed", ckpt.seed},
        {"shape_table", shape}};
    std::string meta_str = meta.dump();

    ByteWriter w;
    w.str("DUSTCKPT");
    w.u32(1);
    w.u32(std::uint32_t(meta_str.size()));
    w.str(meta_str);
    for (const auto& b : ckpt.model.blocks()) {
        const double* p = ckpt.model.block_data(b);
        for (std::size_t i = 0; i < b.size(); ++i) w.f64(p[i]);
    }
    return w.bytes;
}

inline ModelCheckpoint decode_checkpoint(const std::string& bytes, const std::string& origin) {
    ByteReader r(bytes, origin);
    r.expect_magic("DUSTCKPT");
    std::uint32_t version = r.u32();
    require(version == 1, "format error in " + origin + ": unsupported checkpoint version " +
                              std::to_string(version));
    std::uint32_t meta_len = r.u32();
    nlohmann::json meta = nlohmann::json::parse(r.str(meta_len));

    ModelDims dims;
    dims.frame_dim = meta.at("dims").at("frame_dim").get<std::size_t>();
    dims.context = meta.at("dims").at("context").get<std::size_t>();
    dims.hidden = meta.at("dims").at("hidden").get<std::size_t>();
    dims.encoder_layers = meta.at("dims").at("encoder_layers").get<std::size_t>();
    dims.vocab = meta.at("dims").at("vocab").get<std::size_t>();

    ModelCheckpoint ckpt;
    ckpt.model = EncoderModel(dims, meta.at("dropout_p").get<double>(), 0);
    ckpt.alphabet = Alphabet(meta.at("alphabet").get<std::string>(),
                             meta.at("separator").get<std::string>().at(0));
    ckpt.stage = meta.at("stage").get<std::string>();
    ckpt.parent_id = meta.at("parent_id").get<std::string>();
    ckpt.seed = meta.at("seed").get<std::uint64_t>();
    require(ckpt.alphabet.vocab_size() == dims.vocab,
            "format error in " + origin + ": alphabet/vocab mismatch");

    const auto& blocks = ckpt.model.blocks();
    const auto& shape = meta.at("shape_table");
    require(shape.size() == blocks.size(),
            "format error in " + origin + ": shape table length mismatch");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        require(shape[i].at("name").get<std::string>() == blocks[i].name &&
                    shape[i].at("rows").get<std::size_t>() == blocks[i].rows &&
                    shape[i].at("cols").get<std::size_t>() == blocks[i].cols,
                "format error in " + origin + ": shape table inconsistent with dims at block " +
                    blocks[i].name);
        double* p = ckpt.model.block_data(blocks[i]);
        for (std::size_t k = 0; k < blocks[i].size(); ++k) p[k] = r.f64();
    }
    r.expect_end();
    return ckpt;
}

inline void write_checkpoint(const fs::path& path, const ModelCheckpoint& ckpt) {
    atomic_write_bytes(path, encode_checkpoint(ckpt));
}

inline ModelCheckpoint read_checkpoint(const fs::path& path) {
    return decode_checkpoint(read_bytes(path), path.string());
}

} // namespace dust
