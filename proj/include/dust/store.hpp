#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dust/error.hpp"

namespace dust {

namespace fs = std::filesystem;

// ---- atomic file writes: temp file in the same directory, then rename ----

inline void atomic_write_bytes(const fs::path& path, const std::string& bytes) {
    fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), "atomic_write: cannot open " + tmp.string());
        out.write(bytes.data(), std::streamsize(bytes.size()));
        require(out.good(), "atomic_write: short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "read_bytes: cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

// ---- little-endian binary (de)serialization on byte strings ----

struct ByteWriter {
    std::string bytes;

    void raw(const void* p, std::size_t n) {
        bytes.append(reinterpret_cast<const char*>(p), n);
    }
    void u32(std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
        raw(b, 4);
    }
    void f64(double v) {
        std::uint64_t u;
        std::memcpy(&u, &v, 8);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = (u >> (8 * i)) & 0xff;
        raw(b, 8);
    }
    void f32(float v) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        u32(u);
    }
    void str(const std::string& s) { bytes.append(s); }
};

class ByteReader {
public:
    ByteReader(const std::string& bytes, std::string origin)
        : bytes_(bytes), origin_(std::move(origin)) {}

    std::size_t offset() const { return pos_; }

    void raw(void* p, std::size_t n) {
        if (pos_ + n > bytes_.size())
            throw Error("format error in " + origin_ + ": truncated at offset " +
                        std::to_string(pos_) + " (need " + std::to_string(n) + " bytes, " +
                        std::to_string(bytes_.size() - pos_) + " left)");
        std::memcpy(p, bytes_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        unsigned char b[4];
        raw(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
        return v;
    }
    double f64() {
        unsigned char b[8];
        raw(b, 8);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= std::uint64_t(b[i]) << (8 * i);
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    float f32() {
        std::uint32_t u = u32();
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    std::string str(std::size_t n) {
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    void expect_magic(const std::string& magic) {
        std::string got = str(magic.size());
        if (got != magic)
            throw Error("format error in " + origin_ + ": bad magic at offset 0 (expected \"" +
                        magic + "\")");
    }
    void expect_end() {
        if (pos_ != bytes_.size())
            throw Error("format error in " + origin_ + ": " +
                        std::to_string(bytes_.size() - pos_) + " trailing bytes at offset " +
                        std::to_string(pos_));
    }
    const std::string& origin() const { return origin_; }

private:
    const std::string& bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

// ---- experiment directory stages ----

// A stage directory is complete iff its DONE marker exists. Markers are
// written last, after every artifact of the stage.
inline bool stage_done(const fs::path& stage_dir) {
    return fs::exists(stage_dir / "DONE");
}

inline void mark_stage_done(const fs::path& stage_dir) {
    atomic_write_bytes(stage_dir / "DONE", "done\n");
}

// Ordered stage names for an N-iteration pipeline run.
inline std::vector<std::string> pipeline_stages(std::size_t iterations) {
    std::vector<std::string> stages{"pretrain", "finetune"};
    for (std::size_t n = 1; n <= iterations; ++n)
        stages.push_back("dust-" + std::to_string(n));
    return stages;
}

// Returns the index of the first incomplete stage. A DONE marker without
// the stage checkpoint is corruption and is never repaired silently.
inline std::size_t resume_scan(const fs::path& root, const std::vector<std::string>& stages) {
    require(fs::exists(root), "resume_scan: experiment dir does not exist: " + root.string());
    std::size_t next = 0;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        fs::path dir = root / stages[i];
        if (!stage_done(dir)) break;
        if (!fs::exists(dir / "checkpoint.bin"))
            throw Error("resume_scan: stage " + stages[i] +
                        " has a DONE marker but no checkpoint.bin — inconsistent state");
        next = i + 1;
    }
    return next;
}

} // namespace dust
