#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dust/error.hpp"
#include "dust/matrix.hpp"
#include "dust/store.hpp"

#include "json.hpp"

namespace dust {

struct Utterance {
    std::string id;
    Matrix frames; // T x d
    std::optional<std::string> text;
};

enum class Split { LabeledTrain, LabeledValid, Unlabeled, Dev };

inline std::string split_name(Split s) {
    switch (s) {
        case Split::LabeledTrain: return "labeled_train";
        case Split::LabeledValid: return "labeled_valid";
        case Split::Unlabeled: return "unlabeled";
        case Split::Dev: return "dev";
    }
    return "?";
}

// One split of a dataset. The unlabeled split keeps its hidden ground truth
// for scoring pseudo-labels, but training code must go through
// training_view(), which strips transcripts for unlabeled corpora.
struct Corpus {
    Split split = Split::LabeledTrain;
    std::vector<Utterance> utterances;

    // Training-facing reader: for the unlabeled split, transcripts are
    // structurally absent from what it yields.
    std::vector<Utterance> training_view() const {
        std::vector<Utterance> out;
        out.reserve(utterances.size());
        for (const auto& u : utterances) {
            Utterance v{u.id, u.frames, std::nullopt};
            if (split != Split::Unlabeled) v.text = u.text;
            out.push_back(std::move(v));
        }
        return out;
    }
};

// ---- .fea feature files: "DUSTFEA1", u32 T, u32 d, T*d float32 LE ----

inline std::string encode_fea(const Matrix& frames) {
    ByteWriter w;
    w.str("DUSTFEA1");
    w.u32(std::uint32_t(frames.rows));
    w.u32(std::uint32_t(frames.cols));
    for (double v : frames.data) w.f32(float(v));
    return w.bytes;
}

inline Matrix decode_fea(const std::string& bytes, const std::string& origin) {
    ByteReader r(bytes, origin);
    r.expect_magic("DUSTFEA1");
    std::uint32_t T = r.u32();
    std::uint32_t d = r.u32();
    require(T >= 1 && d >= 1, "format error in " + origin + ": zero dimension");
    Matrix m(T, d);
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = double(r.f32());
    r.expect_end();
    return m;
}

inline void write_fea(const fs::path& path, const Matrix& frames) {
    atomic_write_bytes(path, encode_fea(frames));
}

inline Matrix read_fea(const fs::path& path) {
    return decode_fea(read_bytes(path), path.string());
}

// ---- JSONL manifests: {"id", "frames": "<relpath>.fea", "text"?} ----

// Writes the split under dir: manifest.jsonl plus one .fea per utterance.
inline void write_corpus(const fs::path& dir, const Corpus& corpus) {
    std::string manifest;
    for (const auto& u : corpus.utterances) {
        std::string rel = u.id + ".fea";
        write_fea(dir / rel, u.frames);
        nlohmann::json line{{"id", u.id}, {"frames", rel}};
        if (u.text) line["text"] = *u.text;
        manifest += line.dump();
        manifest += "\n";
    }
    atomic_write_bytes(dir / "manifest.jsonl", manifest);
}

inline Corpus read_corpus(const fs::path& dir, Split split) {
    fs::path manifest = dir / "manifest.jsonl";
    std::string bytes = read_bytes(manifest);
    Corpus corpus;
    corpus.split = split;
    std::size_t start = 0;
    while (start < bytes.size()) {
        std::size_t end = bytes.find('\n', start);
        if (end == std::string::npos) end = bytes.size();
        std::string line = bytes.substr(start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        Utterance u;
        u.id = j.at("id").get<std::string>();
        u.frames = read_fea(dir / j.at("frames").get<std::string>());
        if (j.contains("text")) u.text = j.at("text").get<std::string>();
        corpus.utterances.push_back(std::move(u));
    }
    return corpus;
}

} // namespace dust
