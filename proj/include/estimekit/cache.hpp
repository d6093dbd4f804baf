#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "estimekit/embeddings.hpp"
#include "estimekit/hashing.hpp"

namespace estimekit {

/// Per-document embedding archive (`.embar`):
///
///   8 bytes   magic "EMBAR\x01\0\0"
///   u64 LE    header length
///   header    JSON: fingerprint, model ids, plan fingerprint, entry table
///             (name, shape, byte offset, byte length), payload SHA-256
///   payload   IEEE half floats, little-endian, entries back to back
///
/// Entries are `layer_00` .. `layer_NN` (one per hidden-state layer) and
/// `raw` (the raw input-table rows).
namespace embar {

inline constexpr char kMagic[8] = {'E', 'M', 'B', 'A', 'R', 1, 0, 0};

inline float round_half(float v) { return static_cast<float>(Eigen::half(v)); }

inline void quantize_inplace(RowMatrix& m) { m = m.unaryExpr([](float v) { return round_half(v); }); }

inline void append_half(std::string& payload, const RowMatrix& m) {
    const std::size_t at = payload.size();
    payload.resize(at + static_cast<std::size_t>(m.size()) * 2);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const auto bits = Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(m.data()[i]));
        payload[at + 2 * static_cast<std::size_t>(i)] = static_cast<char>(bits & 0xff);
        payload[at + 2 * static_cast<std::size_t>(i) + 1] = static_cast<char>(bits >> 8);
    }
}

inline RowMatrix read_half(const std::string& payload, std::size_t offset, Eigen::Index rows, Eigen::Index cols) {
    RowMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const auto lo = static_cast<unsigned char>(payload[offset + 2 * static_cast<std::size_t>(i)]);
        const auto hi = static_cast<unsigned char>(payload[offset + 2 * static_cast<std::size_t>(i) + 1]);
        const auto bits = static_cast<std::uint16_t>(lo | (hi << 8));
        m.data()[i] = static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(bits));
    }
    return m;
}

inline std::string encode(const LayerEmbeddingSet& layers, const RawEmbeddingSet& raw, const std::string& fingerprint) {
    std::string payload;
    nlohmann::json entries = nlohmann::json::array();
    auto add = [&](const std::string& name, const RowMatrix& m) {
        const std::size_t off = payload.size();
        append_half(payload, m);
        entries.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"offset", off},
                           {"nbytes", payload.size() - off}});
    };
    for (std::size_t k = 0; k < layers.layers.size(); ++k) {
        char name[16];
        std::snprintf(name, sizeof name, "layer_%02zu", k);
        add(name, layers.layers[k]);
    }
    add("raw", raw.rows);

    const nlohmann::json header = {{"format", "embar/1"},
                                   {"dtype", "f16"},
                                   {"endianness", "little"},
                                   {"fingerprint", fingerprint},
                                   {"model_id", layers.model_id},
                                   {"raw_model_id", raw.model_id},
                                   {"mask_plan_fingerprint", layers.mask_plan_fingerprint},
                                   {"entries", entries},
                                   {"payload_sha256", sha256_hex(payload)}};
    const std::string h = header.dump();
    std::string out(kMagic, kMagic + 8);
    std::uint64_t len = h.size();
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
    out += h;
    out += payload;
    return out;
}

struct Decoded {
    LayerEmbeddingSet layers;
    RawEmbeddingSet raw;
    std::string fingerprint;
};

/// Throws std::runtime_error on any structural or checksum problem.
inline Decoded decode(const std::string& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw std::runtime_error("embar: bad magic");
    std::uint64_t len = 0;
    for (int i = 7; i >= 0; --i) len = (len << 8) | static_cast<unsigned char>(bytes[8 + static_cast<std::size_t>(i)]);
    if (16 + len > bytes.size()) throw std::runtime_error("embar: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(16, len));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("embar: bad header: ") + e.what());
    }
    const std::string payload = bytes.substr(16 + len);
    if (sha256_hex(payload) != header.at("payload_sha256").get<std::string>())
        throw std::runtime_error("embar: checksum mismatch");

    Decoded d;
    d.fingerprint = header.at("fingerprint").get<std::string>();
    d.layers.model_id = header.at("model_id").get<std::string>();
    d.layers.mask_plan_fingerprint = header.at("mask_plan_fingerprint").get<std::string>();
    d.raw.model_id = header.at("raw_model_id").get<std::string>();
    for (const auto& e : header.at("entries")) {
        const auto shape = e.at("shape").get<std::vector<Eigen::Index>>();
        const auto off = e.at("offset").get<std::size_t>();
        const auto nbytes = e.at("nbytes").get<std::size_t>();
        if (shape.size() != 2 || off + nbytes > payload.size() ||
            nbytes != static_cast<std::size_t>(shape[0] * shape[1]) * 2)
            throw std::runtime_error("embar: bad entry table");
        RowMatrix m = read_half(payload, off, shape[0], shape[1]);
        if (e.at("name").get<std::string>() == "raw") d.raw.rows = std::move(m);
        else d.layers.layers.push_back(std::move(m));
    }
    if (d.layers.layers.empty()) throw std::runtime_error("embar: no layers");
    return d;
}

} // namespace embar

/// Resolves the cache root: explicit value, then ESTIMEKIT_CACHE_DIR, then
/// ./cache.
inline std::filesystem::path resolve_cache_dir(const std::string& explicit_dir = {}) {
    if (!explicit_dir.empty()) return explicit_dir;
    if (const char* env = std::getenv("ESTIMEKIT_CACHE_DIR"); env && *env) return env;
    return "cache";
}

/// On-disk store laid out as <root>/<doc_key>/<fingerprint>.embar. Values
/// handed out are always half-precision rounded, whether freshly computed or
/// read back, so cold and warm runs see identical numbers.
class EmbeddingCache {
  public:
    using Entry = std::pair<LayerEmbeddingSet, RawEmbeddingSet>;
    using Compute = std::function<Entry()>;

    explicit EmbeddingCache(std::filesystem::path root) : root_(std::move(root)) {}

    const std::filesystem::path& root() const { return root_; }

    std::filesystem::path path_for(const std::string& doc_key, const std::string& fingerprint) const {
        return root_ / doc_key / (fingerprint + ".embar");
    }

    Entry get_or_compute(const std::string& doc_key, const std::string& fingerprint, const Compute& compute) {
        const auto path = path_for(doc_key, fingerprint);
        if (std::filesystem::exists(path)) {
            try {
                auto d = embar::decode(read_file(path));
                if (d.fingerprint == fingerprint) {
                    ++hits_;
                    return {std::move(d.layers), std::move(d.raw)};
                }
            } catch (const std::runtime_error&) {
                ++recovered_;
            }
        }
        ++misses_;
        Entry e = compute();
        for (auto& m : e.first.layers) embar::quantize_inplace(m);
        embar::quantize_inplace(e.second.rows);
        write_atomic(path, embar::encode(e.first, e.second, fingerprint));
        return e;
    }

    std::uint64_t hits() const { return hits_; }
    std::uint64_t misses() const { return misses_; }
    std::uint64_t recovered() const { return recovered_; }

  private:
    static std::string read_file(const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    static void write_atomic(const std::filesystem::path& p, const std::string& bytes) {
        std::filesystem::create_directories(p.parent_path());
        std::random_device rd;
        const auto tmp = p.parent_path() /
                         (p.filename().string() + ".tmp." + std::to_string(rd()) + std::to_string(rd()));
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out.write(bytes.data(), static_cast<std::streamsize>(bytes.size())))
                throw std::runtime_error("cannot write cache file " + tmp.string());
        }
        std::filesystem::rename(tmp, p);
    }

    std::filesystem::path root_;
    std::atomic<std::uint64_t> hits_{0}, misses_{0}, recovered_{0};
};

} // namespace estimekit
