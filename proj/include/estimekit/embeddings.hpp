#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "estimekit/bert.hpp"
#include "estimekit/masking.hpp"
#include "estimekit/parallel.hpp"
#include "estimekit/tokenizer.hpp"

namespace estimekit {

/// Per-layer contextual embeddings of a token sequence. layers[k] is
/// [positions x dim]; k = 0 is the embedding-layer output, k >= 1 the output
/// of block k. Regular positions hold the state computed while that
/// position was masked.
struct LayerEmbeddingSet {
    std::vector<RowMatrix> layers;
    std::string model_id;
    std::string mask_plan_fingerprint;

    int num_layers() const { return static_cast<int>(layers.size()) - 1; }
    std::size_t num_positions() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers[0].rows()); }
    int dim() const { return layers.empty() ? 0 : static_cast<int>(layers[0].cols()); }

    const RowMatrix& layer(int k) const {
        if (k < 0 || k >= static_cast<int>(layers.size()))
            throw std::out_of_range("layer " + std::to_string(k) + " outside 0.." + std::to_string(num_layers()));
        return layers[static_cast<std::size_t>(k)];
    }

    bool all_finite() const {
        for (const auto& m : layers)
            if (!m.allFinite()) return false;
        return true;
    }
};

/// Context-free input-table rows, one per position of a token sequence.
struct RawEmbeddingSet {
    RowMatrix rows;
    std::string model_id;
};

/// Runs every pass of `plan` through `encoder` and gathers the hidden states
/// of the masked positions from all layers. CLS and SEP are never masked;
/// their states are averaged over the passes of the window that owns them.
/// Passes run on up to `workers` threads; the result does not depend on it.
inline LayerEmbeddingSet extract_masked_embeddings(const TokenSequence& seq, const MaskingPlan& plan,
                                                   const MaskedEncoder& encoder, TokenId mask_id,
                                                   std::string model_id, unsigned workers = 1) {
    const auto regular = seq.regular_positions();
    if (regular.size() != plan.num_regular) throw std::invalid_argument("masking plan does not match sequence");
    if (plan.window_len > encoder.max_positions())
        throw std::invalid_argument("masking window longer than the model context");
    if (seq.size() < 2 || !seq.special_mask.front() || !seq.special_mask.back())
        throw std::invalid_argument("sequence must be framed by CLS and SEP");

    const int n_states = encoder.num_layers() + 1;
    const auto n_pos = static_cast<Eigen::Index>(seq.size());
    LayerEmbeddingSet out;
    out.model_id = std::move(model_id);
    out.mask_plan_fingerprint = plan.fingerprint();
    out.layers.assign(static_cast<std::size_t>(n_states), RowMatrix::Zero(n_pos, encoder.hidden_size()));

    struct Job {
        const MaskingWindow* window;
        const std::vector<std::size_t>* pass;
    };
    std::vector<Job> jobs;
    for (const auto& w : plan.windows)
        for (const auto& pass : w.passes) jobs.push_back({&w, &pass});

    // Masked rows are disjoint across passes and written in place; the
    // CLS/SEP states are kept per pass and summed in plan order afterwards.
    std::vector<std::vector<Eigen::RowVectorXf>> cls_rows(jobs.size()), sep_rows(jobs.size());
    const TokenId cls = seq.token_ids.front();
    const TokenId sep = seq.token_ids.back();
    detail::parallel_for(jobs.size(), workers, [&](std::size_t j) {
        const auto& w = *jobs[j].window;
        const std::size_t width = w.end - w.begin;
        std::vector<TokenId> input;
        input.push_back(cls);
        for (std::size_t p = w.begin; p < w.end; ++p) input.push_back(seq.token_ids[regular[p]]);
        input.push_back(sep);
        for (auto p : *jobs[j].pass) input[p - w.begin + 1] = mask_id;

        const auto states = encoder.forward(input);
        for (int k = 0; k < n_states; ++k) {
            const auto& h = states[static_cast<std::size_t>(k)];
            auto& dst = out.layers[static_cast<std::size_t>(k)];
            for (auto p : *jobs[j].pass)
                dst.row(static_cast<Eigen::Index>(regular[p])) = h.row(static_cast<Eigen::Index>(p - w.begin + 1));
            if (w.owns_cls) cls_rows[j].push_back(h.row(0));
            if (w.owns_sep) sep_rows[j].push_back(h.row(static_cast<Eigen::Index>(width + 1)));
        }
    });
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        const auto share = static_cast<float>(1.0 / static_cast<double>(jobs[j].window->passes.size()));
        for (int k = 0; k < n_states; ++k) {
            auto& dst = out.layers[static_cast<std::size_t>(k)];
            if (!cls_rows[j].empty()) dst.row(0) += cls_rows[j][static_cast<std::size_t>(k)] * share;
            if (!sep_rows[j].empty()) dst.row(n_pos - 1) += sep_rows[j][static_cast<std::size_t>(k)] * share;
        }
    }
    return out;
}

/// Pure table lookup of each token id; no position/segment terms, no norm.
inline RawEmbeddingSet lookup_raw_embeddings(const TokenSequence& seq, const EmbeddingTable& table,
                                             std::string model_id) {
    RawEmbeddingSet out;
    out.model_id = std::move(model_id);
    out.rows.resize(static_cast<Eigen::Index>(seq.size()), table.dim());
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const TokenId id = seq.token_ids[i];
        if (id < 0 || id >= table.vocab_size())
            throw std::out_of_range("token id " + std::to_string(id) + " outside raw vocabulary");
        out.rows.row(static_cast<Eigen::Index>(i)) = table.table().row(id);
    }
    return out;
}

/// Wraps an encoder and counts forward runs; shared by the provider's
/// telemetry and by tests asserting cache hits.
class CountingEncoder : public MaskedEncoder {
  public:
    explicit CountingEncoder(std::shared_ptr<const MaskedEncoder> inner) : inner_(std::move(inner)) {}
    int num_layers() const override { return inner_->num_layers(); }
    int hidden_size() const override { return inner_->hidden_size(); }
    int max_positions() const override { return inner_->max_positions(); }
    std::vector<RowMatrix> forward(std::span<const TokenId> ids) const override {
        ++calls_;
        return inner_->forward(ids);
    }
    std::uint64_t calls() const { return calls_.load(); }

  private:
    std::shared_ptr<const MaskedEncoder> inner_;
    mutable std::atomic<std::uint64_t> calls_{0};
};

} // namespace estimekit
