#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "estimekit/safetensors.hpp"
#include "estimekit/tokenizer.hpp"

namespace estimekit {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct BertConfig {
    int vocab_size = 0;
    int hidden_size = 0;
    int num_layers = 0;
    int num_heads = 0;
    int intermediate_size = 0;
    int max_positions = 512;
    int type_vocab_size = 2;
    float layer_norm_eps = 1e-12f;
    std::string hidden_act = "gelu";

    static BertConfig from_json(const nlohmann::json& j) {
        BertConfig c;
        c.vocab_size = j.at("vocab_size").get<int>();
        c.hidden_size = j.at("hidden_size").get<int>();
        c.num_layers = j.at("num_hidden_layers").get<int>();
        c.num_heads = j.at("num_attention_heads").get<int>();
        c.intermediate_size = j.at("intermediate_size").get<int>();
        c.max_positions = j.value("max_position_embeddings", 512);
        c.type_vocab_size = j.value("type_vocab_size", 2);
        c.layer_norm_eps = j.value("layer_norm_eps", 1e-12f);
        c.hidden_act = j.value("hidden_act", std::string("gelu"));
        if (c.hidden_size % c.num_heads != 0) throw std::runtime_error("hidden_size not divisible by heads");
        return c;
    }

    static BertConfig load(const std::filesystem::path& model_dir) {
        std::ifstream in(model_dir / "config.json");
        if (!in) throw std::runtime_error("model config not found: " + (model_dir / "config.json").string());
        return from_json(nlohmann::json::parse(in));
    }
};

/// Interface for an encoder that returns every layer's hidden states for one
/// input sequence: element 0 is the embedding-layer output, element k the
/// output of block k. Each matrix is [sequence length x hidden size].
class MaskedEncoder {
  public:
    virtual ~MaskedEncoder() = default;
    virtual int num_layers() const = 0;
    virtual int hidden_size() const = 0;
    virtual int max_positions() const = 0;
    virtual std::vector<RowMatrix> forward(std::span<const TokenId> ids) const = 0;
};

namespace detail {

struct Linear {
    RowMatrix weight;  // [out x in]
    Eigen::RowVectorXf bias;

    RowMatrix apply(const RowMatrix& x) const {
        RowMatrix y = x * weight.transpose();
        y.rowwise() += bias;
        return y;
    }
};

struct LayerNorm {
    Eigen::RowVectorXf gamma;
    Eigen::RowVectorXf beta;
    float eps = 1e-12f;

    void apply_inplace(RowMatrix& x) const {
        const float inv_n = 1.0f / static_cast<float>(x.cols());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            auto row = x.row(r);
            const float mean = row.sum() * inv_n;
            row.array() -= mean;
            const float var = row.squaredNorm() * inv_n;
            row *= 1.0f / std::sqrt(var + eps);
            row = row.cwiseProduct(gamma) + beta;
        }
    }
};

struct EncoderBlock {
    Linear query, key, value, attn_out, intermediate, output;
    LayerNorm attn_norm, out_norm;
};

} // namespace detail

/// BERT encoder forward pass (post-LayerNorm blocks, single segment, no
/// padding) over weights stored in a Hugging Face style model directory.
class BertEncoder : public MaskedEncoder {
  public:
    /// Loads `config.json` and `model.safetensors` from `model_dir`. Tensor
    /// names may carry a `bert.` prefix (masked-LM checkpoints) or not.
    explicit BertEncoder(const std::filesystem::path& model_dir) : config_(BertConfig::load(model_dir)) {
        const SafetensorsFile st(model_dir / "model.safetensors");
        prefix_ = st.contains("bert.embeddings.word_embeddings.weight") ? "bert." : "";
        const int h = config_.hidden_size;
        word_ = matrix(st, "embeddings.word_embeddings.weight", config_.vocab_size, h);
        position_ = matrix(st, "embeddings.position_embeddings.weight", config_.max_positions, h);
        token_type_ = matrix(st, "embeddings.token_type_embeddings.weight", config_.type_vocab_size, h);
        embed_norm_ = norm(st, "embeddings.LayerNorm");
        for (int l = 0; l < config_.num_layers; ++l) {
            const std::string p = "encoder.layer." + std::to_string(l) + ".";
            detail::EncoderBlock b;
            b.query = linear(st, p + "attention.self.query", h, h);
            b.key = linear(st, p + "attention.self.key", h, h);
            b.value = linear(st, p + "attention.self.value", h, h);
            b.attn_out = linear(st, p + "attention.output.dense", h, h);
            b.attn_norm = norm(st, p + "attention.output.LayerNorm");
            b.intermediate = linear(st, p + "intermediate.dense", config_.intermediate_size, h);
            b.output = linear(st, p + "output.dense", h, config_.intermediate_size);
            b.out_norm = norm(st, p + "output.LayerNorm");
            blocks_.push_back(std::move(b));
        }
    }

    const BertConfig& config() const { return config_; }
    int num_layers() const override { return config_.num_layers; }
    int hidden_size() const override { return config_.hidden_size; }
    int max_positions() const override { return config_.max_positions; }
    const RowMatrix& word_embeddings() const { return word_; }

    std::vector<RowMatrix> forward(std::span<const TokenId> ids) const override {
        const auto n = static_cast<Eigen::Index>(ids.size());
        if (n == 0) throw std::invalid_argument("forward: empty input");
        if (n > config_.max_positions)
            throw std::invalid_argument("forward: context overflow (" + std::to_string(n) + " > " +
                                        std::to_string(config_.max_positions) + ")");
        RowMatrix x(n, config_.hidden_size);
        for (Eigen::Index i = 0; i < n; ++i) {
            const TokenId id = ids[static_cast<std::size_t>(i)];
            if (id < 0 || id >= config_.vocab_size) throw std::out_of_range("token id outside vocabulary");
            x.row(i) = word_.row(id) + position_.row(i) + token_type_.row(0);
        }
        embed_norm_.apply_inplace(x);

        std::vector<RowMatrix> states;
        states.reserve(blocks_.size() + 1);
        states.push_back(x);
        for (const auto& b : blocks_) {
            x = block_forward(b, x);
            states.push_back(x);
        }
        return states;
    }

  private:
    RowMatrix block_forward(const detail::EncoderBlock& b, const RowMatrix& x) const {
        const Eigen::Index n = x.rows();
        const int heads = config_.num_heads;
        const int dh = config_.hidden_size / heads;
        const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
        const RowMatrix q = b.query.apply(x);
        const RowMatrix k = b.key.apply(x);
        const RowMatrix v = b.value.apply(x);

        RowMatrix context(n, config_.hidden_size);
        RowMatrix scores(n, n);
        for (int hd = 0; hd < heads; ++hd) {
            const auto qh = q.middleCols(hd * dh, dh);
            const auto kh = k.middleCols(hd * dh, dh);
            scores.noalias() = (qh * kh.transpose()) * scale;
            for (Eigen::Index r = 0; r < n; ++r) {
                auto row = scores.row(r);
                row.array() -= row.maxCoeff();
                row = row.array().exp().matrix();
                row /= row.sum();
            }
            context.middleCols(hd * dh, dh).noalias() = scores * v.middleCols(hd * dh, dh);
        }

        RowMatrix attn = b.attn_out.apply(context);
        attn += x;
        b.attn_norm.apply_inplace(attn);

        RowMatrix inter = b.intermediate.apply(attn);
        activate(inter);
        RowMatrix out = b.output.apply(inter);
        out += attn;
        b.out_norm.apply_inplace(out);
        return out;
    }

    void activate(RowMatrix& m) const {
        const auto& act = config_.hidden_act;
        if (act == "gelu") {
            m = m.unaryExpr([](float v) { return 0.5f * v * (1.0f + std::erf(v * 0.70710678118654752f)); });
        } else if (act == "gelu_new" || act == "gelu_pytorch_tanh") {
            m = m.unaryExpr([](float v) {
                return 0.5f * v * (1.0f + std::tanh(0.7978845608028654f * (v + 0.044715f * v * v * v)));
            });
        } else if (act == "relu") {
            m = m.cwiseMax(0.0f);
        } else {
            throw std::runtime_error("unsupported activation: " + act);
        }
    }

    RowMatrix matrix(const SafetensorsFile& st, const std::string& name, Eigen::Index rows, Eigen::Index cols) const {
        const std::string full = prefix_ + name;
        const auto& info = st.info(full);
        if (info.shape.size() != 2 || info.shape[0] != rows || info.shape[1] != cols)
            throw std::runtime_error("unexpected shape for " + full);
        const auto data = st.read_floats(full);
        return Eigen::Map<const RowMatrix>(data.data(), rows, cols);
    }

    Eigen::RowVectorXf vector(const SafetensorsFile& st, const std::string& name, Eigen::Index size) const {
        const std::string full = prefix_ + name;
        const auto data = st.read_floats(full);
        if (static_cast<Eigen::Index>(data.size()) != size) throw std::runtime_error("unexpected shape for " + full);
        return Eigen::Map<const Eigen::RowVectorXf>(data.data(), size);
    }

    detail::Linear linear(const SafetensorsFile& st, const std::string& p, Eigen::Index out, Eigen::Index in) const {
        return {matrix(st, p + ".weight", out, in), vector(st, p + ".bias", out)};
    }

    detail::LayerNorm norm(const SafetensorsFile& st, const std::string& p) const {
        // older checkpoints name the LayerNorm parameters gamma/beta
        const bool legacy = !st.contains(prefix_ + p + ".weight") && st.contains(prefix_ + p + ".gamma");
        return {vector(st, p + (legacy ? ".gamma" : ".weight"), config_.hidden_size),
                vector(st, p + (legacy ? ".beta" : ".bias"), config_.hidden_size), config_.layer_norm_eps};
    }

    BertConfig config_;
    std::string prefix_;
    RowMatrix word_, position_, token_type_;
    detail::LayerNorm embed_norm_;
    std::vector<detail::EncoderBlock> blocks_;
};

/// Context-free input embedding table of a model. Only the word-embedding
/// tensor is read.
class EmbeddingTable {
  public:
    explicit EmbeddingTable(const std::filesystem::path& model_dir) {
        const auto cfg = BertConfig::load(model_dir);
        const SafetensorsFile st(model_dir / "model.safetensors");
        const std::string name = st.contains("bert.embeddings.word_embeddings.weight")
                                     ? "bert.embeddings.word_embeddings.weight"
                                     : "embeddings.word_embeddings.weight";
        const auto data = st.read_floats(name);
        table_ = Eigen::Map<const RowMatrix>(data.data(), cfg.vocab_size, cfg.hidden_size);
    }

    explicit EmbeddingTable(RowMatrix table) : table_(std::move(table)) {}

    const RowMatrix& table() const { return table_; }
    Eigen::Index vocab_size() const { return table_.rows(); }
    Eigen::Index dim() const { return table_.cols(); }

  private:
    RowMatrix table_;
};

} // namespace estimekit
