#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "estimekit/embeddings.hpp"

namespace estimekit {

/// Points of contextual similarity: for each regular summary token i,
/// target_index[i] is the regular text token with the largest dot product.
/// Indices count regular tokens only (CLS/SEP excluded on both sides).
struct Alignment {
    std::vector<std::size_t> target_index;
    std::vector<double> similarity;
    int summary_layer = 0;
    int text_layer = 0;

    std::size_t size() const { return target_index.size(); }
};

/// Argmax of raw dot products between each query row and all candidate rows.
/// The similarity matrix is formed with one matrix product; rows whose best
/// candidates fall within a rounding margin are re-scored exactly in double
/// precision so that ties go to the lowest candidate index regardless of how
/// the product was blocked.
inline Alignment align_rows(const RowMatrix& queries, const RowMatrix& candidates) {
    if (queries.rows() == 0 || candidates.rows() == 0) throw std::invalid_argument("align: empty token set");
    if (queries.cols() != candidates.cols()) throw std::invalid_argument("align: dimension mismatch");

    const RowMatrix scores = queries * candidates.transpose();
    const Eigen::VectorXf cand_norms = candidates.rowwise().norm();
    Alignment out;
    out.target_index.resize(static_cast<std::size_t>(queries.rows()));
    out.similarity.resize(static_cast<std::size_t>(queries.rows()));
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
        const auto row = scores.row(i);
        float best = row(0);
        for (Eigen::Index a = 1; a < row.size(); ++a) best = std::max(best, row(a));
        // float GEMM error bound, generously widened
        const double qn = queries.row(i).norm();
        const double margin = 1e-4 * qn * cand_norms.maxCoeff() + 1e-30;
        const Eigen::RowVectorXd q = queries.row(i).cast<double>();
        double exact_best = -INFINITY;
        Eigen::Index arg = 0;
        for (Eigen::Index a = 0; a < row.size(); ++a) {
            if (static_cast<double>(row(a)) < static_cast<double>(best) - margin) continue;
            const double s = q.dot(candidates.row(a).cast<double>());
            if (s > exact_best) {
                exact_best = s;
                arg = a;
            }
        }
        out.target_index[static_cast<std::size_t>(i)] = static_cast<std::size_t>(arg);
        out.similarity[static_cast<std::size_t>(i)] = exact_best;
    }
    return out;
}

/// Rows of a layer restricted to the regular (non-CLS/SEP) positions of a
/// CLS ... SEP framed sequence.
inline RowMatrix regular_rows(const LayerEmbeddingSet& set, int layer) {
    const auto& m = set.layer(layer);
    if (m.rows() < 3) throw std::invalid_argument("align: no regular tokens");
    return m.middleRows(1, m.rows() - 2);
}

inline Alignment align(const LayerEmbeddingSet& summary_embs, const LayerEmbeddingSet& text_embs, int summary_layer,
                       int text_layer) {
    Alignment a = align_rows(regular_rows(summary_embs, summary_layer), regular_rows(text_embs, text_layer));
    a.summary_layer = summary_layer;
    a.text_layer = text_layer;
    return a;
}

/// The target positions in summary order, as reals for the rank statistics.
inline std::vector<double> similarity_profile(const Alignment& a) {
    if (a.target_index.empty()) throw std::invalid_argument("similarity_profile: empty alignment");
    return {a.target_index.begin(), a.target_index.end()};
}

} // namespace estimekit
