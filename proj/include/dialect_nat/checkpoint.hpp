#pragma once

// Checkpoint byte layout (all integers little-endian):
//
//   magic        8 bytes  "DNATCKPT"
//   version      u32      = 1
//   config       u32 length + UTF-8 "key=value\n" block (ModelConfig::serialize)
//   vocab        u32 count, then per token: u32 length + UTF-8 bytes (index = id)
//   lexicon      u32 count, then per word:  u32 length + UTF-8 bytes
//   tensors      u32 count, then per tensor:
//                  u32 name length + name, u32 rank, rank x u64 dims,
//                  prod(dims) x f64 (IEEE-754 binary64, row-major)
//   end marker   4 bytes  "END!"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "model.hpp"
#include "text.hpp"

namespace dnat {

inline constexpr char kCheckpointMagic[8] = {'D', 'N', 'A', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct TranslationModel {
    ModelConfig config;
    ModelParams params;
    Vocab vocab;
    Lexicon lexicon;
};

namespace detail {

class Writer {
public:
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    const std::string& buffer() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}
    void bytes(void* p, std::size_t n) {
        if (pos_ + n > data_.size()) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
        std::memcpy(p, data_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, 8);
        return v;
    }
    std::string str() {
        const auto n = u32();
        if (pos_ + n > data_.size()) throw CheckpointError("checkpoint truncated inside a string");
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == data_.size(); }

private:
    std::string data_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const TranslationModel& m) {
    detail::Writer w;
    w.bytes(kCheckpointMagic, 8);
    w.u32(kCheckpointVersion);
    w.str(m.config.serialize());
    w.u32(static_cast<std::uint32_t>(m.vocab.size()));
    for (const auto& t : m.vocab.tokens()) w.str(t);
    const auto lex = m.lexicon.sorted_words();
    w.u32(static_cast<std::uint32_t>(lex.size()));
    for (const auto& word : lex) w.str(word);
    const auto named = m.params.named();
    w.u32(static_cast<std::uint32_t>(named.size()));
    for (const auto& [name, t] : named) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) w.u64(d);
        w.bytes(t.data(), t.size() * sizeof(double));
    }
    w.bytes("END!", 4);
    return w.buffer();
}

// Rebuilds the model. When `expected` is given the stored config must match
// it exactly (e.g. a 2-branch checkpoint only loads into a 2-branch config).
inline TranslationModel deserialize_checkpoint(std::string bytes, const std::optional<ModelConfig>& expected = {}) {
    detail::Reader r(std::move(bytes));
    char magic[8];
    r.bytes(magic, 8);
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw CheckpointError("bad checkpoint magic bytes");
    const auto version = r.u32();
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    TranslationModel m;
    try {
        m.config = ModelConfig::parse(r.str());
        m.config.validate();
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("invalid config block: ") + e.what());
    }
    if (expected && !(*expected == m.config))
        throw CheckpointError("checkpoint config does not match the requested config:\n" + m.config.serialize());
    std::vector<std::string> tokens(r.u32());
    for (auto& t : tokens) t = r.str();
    try {
        m.vocab = Vocab::from_tokens(tokens);
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("invalid vocab block: ") + e.what());
    }
    if (m.vocab.size() != m.config.vocab_size) throw CheckpointError("vocab size disagrees with config");
    const auto n_lex = r.u32();
    for (std::uint32_t i = 0; i < n_lex; ++i) m.lexicon.add(r.str());

    m.params = init_params(m.config, 0);
    auto named = m.params.named();
    const auto count = r.u32();
    if (count != named.size())
        throw CheckpointError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                              std::to_string(named.size()));
    for (auto& [name, t] : named) {
        const std::string stored = r.str();
        if (stored != name) throw CheckpointError("expected tensor '" + name + "', found '" + stored + "'");
        Shape shape(r.u32());
        for (auto& d : shape) d = r.u64();
        if (shape != t.shape())
            throw CheckpointError("tensor '" + name + "' has shape " + shape_str(shape) + ", expected " +
                                  shape_str(t.shape()));
        r.bytes(t.data(), t.size() * sizeof(double));
    }
    char end[4];
    r.bytes(end, 4);
    if (std::memcmp(end, "END!", 4) != 0 || !r.at_end()) throw CheckpointError("missing checkpoint end marker");
    return m;
}

inline void save_checkpoint(const TranslationModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    const auto bytes = serialize_checkpoint(m);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint " + path);
}

inline TranslationModel load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str(), expected);
}

}  // namespace dnat
