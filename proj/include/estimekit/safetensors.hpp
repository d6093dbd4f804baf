#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace estimekit {

/// Reader for the safetensors container: u64 little-endian header length,
/// a JSON header mapping tensor names to {dtype, shape, data_offsets}, then
/// the raw tensor bytes. Tensors are read lazily and widened to float.
class SafetensorsFile {
  public:
    struct TensorInfo {
        std::string dtype;
        std::vector<std::int64_t> shape;
        std::uint64_t begin = 0;
        std::uint64_t end = 0;

        std::int64_t numel() const {
            std::int64_t n = 1;
            for (auto d : shape) n *= d;
            return n;
        }
    };

    explicit SafetensorsFile(std::filesystem::path path) : path_(std::move(path)) {
        std::ifstream in(path_, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open weights: " + path_.string());
        std::uint64_t header_len = 0;
        unsigned char len_bytes[8];
        if (!in.read(reinterpret_cast<char*>(len_bytes), 8)) throw std::runtime_error("truncated safetensors file");
        for (int i = 7; i >= 0; --i) header_len = (header_len << 8) | len_bytes[i];
        if (header_len > (1ull << 30)) throw std::runtime_error("implausible safetensors header size");
        std::string header(header_len, '\0');
        if (!in.read(header.data(), static_cast<std::streamsize>(header_len)))
            throw std::runtime_error("truncated safetensors header");
        data_start_ = 8 + header_len;

        const auto j = nlohmann::json::parse(header);
        for (const auto& [name, meta] : j.items()) {
            if (name == "__metadata__") continue;
            TensorInfo t;
            t.dtype = meta.at("dtype").get<std::string>();
            t.shape = meta.at("shape").get<std::vector<std::int64_t>>();
            const auto off = meta.at("data_offsets").get<std::vector<std::uint64_t>>();
            t.begin = off.at(0);
            t.end = off.at(1);
            tensors_.emplace(name, std::move(t));
        }
    }

    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
    const std::map<std::string, TensorInfo>& tensors() const { return tensors_; }

    const TensorInfo& info(const std::string& name) const {
        auto it = tensors_.find(name);
        if (it == tensors_.end()) throw std::runtime_error("tensor not found in " + path_.string() + ": " + name);
        return it->second;
    }

    std::vector<float> read_floats(const std::string& name) const {
        const auto& t = info(name);
        const std::size_t n = static_cast<std::size_t>(t.numel());
        const std::size_t bytes = t.end - t.begin;
        std::vector<char> raw(bytes);
        std::ifstream in(path_, std::ios::binary);
        in.seekg(static_cast<std::streamoff>(data_start_ + t.begin));
        if (!in.read(raw.data(), static_cast<std::streamsize>(bytes)))
            throw std::runtime_error("truncated tensor data: " + name);

        std::vector<float> out(n);
        if (t.dtype == "F32") {
            check_size(name, bytes, n * 4);
            std::memcpy(out.data(), raw.data(), bytes);
        } else if (t.dtype == "F16") {
            check_size(name, bytes, n * 2);
            for (std::size_t i = 0; i < n; ++i) {
                std::uint16_t bits;
                std::memcpy(&bits, raw.data() + 2 * i, 2);
                out[i] = static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(bits));
            }
        } else if (t.dtype == "BF16") {
            check_size(name, bytes, n * 2);
            for (std::size_t i = 0; i < n; ++i) {
                std::uint16_t bits;
                std::memcpy(&bits, raw.data() + 2 * i, 2);
                const std::uint32_t wide = static_cast<std::uint32_t>(bits) << 16;
                std::memcpy(&out[i], &wide, 4);
            }
        } else {
            throw std::runtime_error("unsupported tensor dtype " + t.dtype + " for " + name);
        }
        return out;
    }

  private:
    static void check_size(const std::string& name, std::size_t got, std::size_t want) {
        if (got != want) throw std::runtime_error("tensor byte size mismatch: " + name);
    }

    std::filesystem::path path_;
    std::uint64_t data_start_ = 0;
    std::map<std::string, TensorInfo> tensors_;
};

} // namespace estimekit
