#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "estimekit/bert.hpp"
#include "estimekit/cache.hpp"
#include "estimekit/embeddings.hpp"
#include "estimekit/hashing.hpp"
#include "estimekit/masking.hpp"
#include "estimekit/tokenizer.hpp"

namespace estimekit {

inline constexpr const char* kDefaultModel = "bert-large-uncased-whole-word-masking";
inline constexpr const char* kDefaultRawModel = "bert-base-uncased";

class ModelNotFound : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Maps a model identifier to a directory holding config.json, vocab.txt and
/// model.safetensors. An identifier that is itself such a directory is used
/// as is; otherwise it is looked up under $ESTIMEKIT_MODEL_DIR.
inline std::filesystem::path resolve_model_dir(const std::string& model_id) {
    namespace fs = std::filesystem;
    if (fs::is_directory(model_id) && fs::exists(fs::path(model_id) / "config.json")) return model_id;
    if (const char* root = std::getenv("ESTIMEKIT_MODEL_DIR"); root && *root) {
        const fs::path p = fs::path(root) / model_id;
        if (fs::exists(p / "config.json")) return p;
    }
    throw ModelNotFound("model '" + model_id +
                        "' not found: pass a directory with config.json, vocab.txt and model.safetensors, "
                        "or place it under $ESTIMEKIT_MODEL_DIR/" + model_id);
}

struct ExtractionConfig {
    std::string model_id = kDefaultModel;
    std::string raw_model_id = kDefaultRawModel;
    int window_len = 512;
    int stride = 256;
    int min_gap = 8;
    std::string cache_dir;  // empty: $ESTIMEKIT_CACHE_DIR or ./cache
    bool use_cache = true;
    unsigned workers = 1;  // threads for masked passes; 0 = all cores
};

struct DocumentEmbeddings {
    TokenSequence tokens;
    LayerEmbeddingSet layers;
    RawEmbeddingSet raw;
};

/// Owns one similarity encoder, one raw embedding table, the shared tokenizer
/// and the on-disk cache. Not thread-safe; give each worker its own.
class EmbeddingProvider {
  public:
    explicit EmbeddingProvider(ExtractionConfig cfg) : cfg_(std::move(cfg)) {
        const auto sim_dir = resolve_model_dir(cfg_.model_id);
        const auto raw_dir = resolve_model_dir(cfg_.raw_model_id);
        Vocab sim_vocab = Vocab::load(sim_dir / "vocab.txt");
        if (!(Vocab::load(raw_dir / "vocab.txt") == sim_vocab))
            throw std::runtime_error("similarity model '" + cfg_.model_id + "' and raw model '" + cfg_.raw_model_id +
                                     "' do not share a tokenizer vocabulary");
        tokenizer_ = std::make_unique<WordPieceTokenizer>(std::move(sim_vocab));
        auto bert = std::make_shared<const BertEncoder>(sim_dir);
        if (cfg_.window_len > bert->max_positions())
            throw std::invalid_argument("window_len exceeds model context of " + std::to_string(bert->max_positions()));
        encoder_ = std::make_unique<CountingEncoder>(std::move(bert));
        raw_table_ = std::make_unique<EmbeddingTable>(raw_dir);
        if (raw_table_->vocab_size() != static_cast<Eigen::Index>(tokenizer_->vocab().size()))
            throw std::runtime_error("raw model embedding table does not match its vocabulary");
        fingerprint_ = fingerprint_of(std::string("extract|") + cfg_.model_id + "|" + model_identity(sim_dir) + "|" +
                                      cfg_.raw_model_id + "|" + model_identity(raw_dir) + "|" +
                                      std::to_string(cfg_.window_len) + "|" + std::to_string(cfg_.stride) + "|" +
                                      std::to_string(cfg_.min_gap) + "|" + std::string(WordPieceTokenizer::kVersion));
        if (cfg_.use_cache) cache_ = std::make_unique<EmbeddingCache>(resolve_cache_dir(cfg_.cache_dir));
    }

    const ExtractionConfig& config() const { return cfg_; }
    const WordPieceTokenizer& tokenizer() const { return *tokenizer_; }
    const MaskedEncoder& encoder() const { return *encoder_; }
    const EmbeddingTable& raw_table() const { return *raw_table_; }
    int num_layers() const { return encoder_->num_layers(); }
    const std::string& fingerprint() const { return fingerprint_; }
    std::uint64_t forward_calls() const { return encoder_->calls(); }
    const EmbeddingCache* cache() const { return cache_.get(); }

    TokenSequence tokenize(std::string_view text) const { return tokenizer_->tokenize(text); }

    MaskingPlan plan(const TokenSequence& seq) const {
        return plan_masked_passes(seq, cfg_.window_len, cfg_.stride, cfg_.min_gap);
    }

    LayerEmbeddingSet extract(const TokenSequence& seq) const {
        return extract_masked_embeddings(seq, plan(seq), *encoder_, tokenizer_->mask_id(), cfg_.model_id, cfg_.workers);
    }

    RawEmbeddingSet lookup_raw(const TokenSequence& seq) const {
        return lookup_raw_embeddings(seq, *raw_table_, cfg_.raw_model_id);
    }

    static std::string doc_key(std::string_view text) { return sha256_hex(text).substr(0, 24); }

    DocumentEmbeddings embed(std::string_view text) {
        DocumentEmbeddings d;
        d.tokens = tokenize(text);
        auto compute = [&] { return EmbeddingCache::Entry{extract(d.tokens), lookup_raw(d.tokens)}; };
        EmbeddingCache::Entry entry;
        if (cache_) {
            entry = cache_->get_or_compute(doc_key(text), fingerprint_, compute);
        } else {
            // same half-precision values a cached run would see
            entry = compute();
            for (auto& m : entry.first.layers) embar::quantize_inplace(m);
            embar::quantize_inplace(entry.second.rows);
        }
        if (entry.first.num_positions() != d.tokens.size())
            throw std::runtime_error("cached embeddings do not match the tokenized text");
        d.layers = std::move(entry.first);
        d.raw = std::move(entry.second);
        return d;
    }

  private:
    static std::string model_identity(const std::filesystem::path& dir) {
        auto slurp = [](const std::filesystem::path& p) {
            std::ifstream in(p, std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            return ss.str();
        };
        return sha256_hex(slurp(dir / "config.json") + "|" + slurp(dir / "vocab.txt") + "|" +
                          std::to_string(std::filesystem::file_size(dir / "model.safetensors")));
    }

    ExtractionConfig cfg_;
    std::unique_ptr<WordPieceTokenizer> tokenizer_;
    std::unique_ptr<CountingEncoder> encoder_;
    std::unique_ptr<EmbeddingTable> raw_table_;
    std::unique_ptr<EmbeddingCache> cache_;
    std::string fingerprint_;
};

} // namespace estimekit
