#pragma once

#include <algorithm>
#include <iterator>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "estimekit/embeddings.hpp"
#include "estimekit/parallel.hpp"

namespace estimekit {

enum class TokenClass { cls, regular };
enum class DocRole { text, summary };

inline std::string to_string(TokenClass c) { return c == TokenClass::cls ? "CLS" : "regular"; }
inline std::string to_string(DocRole r) { return r == DocRole::text ? "text" : "summary"; }

/// One value per layer (norms) or per layer transition (increments, neighbor
/// cosines). Averaged per token, then per document, then over documents.
struct LayerProfile {
    std::string statistic;
    std::vector<double> per_layer_value;
    TokenClass token_class = TokenClass::regular;
    DocRole doc_role = DocRole::text;
    std::size_t n_documents = 0;
};

inline constexpr int kHistogramBins = 200;
inline constexpr double kHistogramBinWidth = 0.01;

/// Row k holds the normalized distribution of within-document pairwise
/// cosines at layer k.
struct CosineHistogram {
    std::vector<std::vector<double>> frequencies;
    std::vector<std::uint64_t> pair_counts;
    std::size_t n_documents = 0;

    static int bin_of(double cosine) {
        const double c = std::clamp(cosine, -1.0, 1.0);
        return std::min(kHistogramBins - 1, static_cast<int>(std::floor((c + 1.0) * 100.0)));
    }
    static double bin_lower(int b) { return -1.0 + b * kHistogramBinWidth; }
};

namespace detail {

inline std::vector<Eigen::Index> class_rows(const LayerEmbeddingSet& s, TokenClass c) {
    const auto n = static_cast<Eigen::Index>(s.num_positions());
    if (c == TokenClass::cls) return n > 0 ? std::vector<Eigen::Index>{0} : std::vector<Eigen::Index>{};
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 1; i + 1 < n; ++i) rows.push_back(i);
    return rows;
}

// stat(set, row, k) gives the per-token value at output slot k.
template <class Stat>
LayerProfile two_stage_profile(const std::vector<LayerEmbeddingSet>& sets, TokenClass c, DocRole role,
                               std::string name, std::size_t slots, Stat stat) {
    if (sets.empty()) throw std::invalid_argument(name + ": no documents");
    std::vector<std::vector<double>> per_doc(sets.size());
    parallel_for(sets.size(), 0, [&](std::size_t d) {
        const auto rows = class_rows(sets[d], c);
        if (rows.empty())
            throw std::invalid_argument(name + ": document " + std::to_string(d) + " has no " + to_string(c) + " tokens");
        if (sets[d].layers.size() != sets.front().layers.size())
            throw std::invalid_argument(name + ": documents disagree on layer count");
        std::vector<double> v(slots, 0.0);
        for (std::size_t k = 0; k < slots; ++k) {
            for (auto r : rows) v[k] += stat(sets[d], r, static_cast<int>(k));
            v[k] /= static_cast<double>(rows.size());
        }
        per_doc[d] = std::move(v);
    });
    LayerProfile p;
    p.statistic = std::move(name);
    p.token_class = c;
    p.doc_role = role;
    p.n_documents = sets.size();
    p.per_layer_value.assign(slots, 0.0);
    for (const auto& v : per_doc)
        for (std::size_t k = 0; k < slots; ++k) p.per_layer_value[k] += v[k];
    for (auto& x : p.per_layer_value) x /= static_cast<double>(sets.size());
    return p;
}

inline Eigen::RowVectorXd row_d(const LayerEmbeddingSet& s, int k, Eigen::Index r) {
    return s.layers[static_cast<std::size_t>(k)].row(r).cast<double>();
}

} // namespace detail

inline LayerProfile norm_profile(const std::vector<LayerEmbeddingSet>& sets, TokenClass c, DocRole role) {
    const std::size_t slots = sets.empty() ? 0 : sets.front().layers.size();
    return detail::two_stage_profile(sets, c, role, "norm", slots, [](const LayerEmbeddingSet& s, Eigen::Index r, int k) {
        return detail::row_d(s, k, r).norm();
    });
}

inline LayerProfile increment_norm_profile(const std::vector<LayerEmbeddingSet>& sets, TokenClass c, DocRole role) {
    const std::size_t slots = sets.empty() ? 0 : sets.front().layers.size() - 1;
    return detail::two_stage_profile(sets, c, role, "increment_norm", slots,
                                     [](const LayerEmbeddingSet& s, Eigen::Index r, int k) {
                                         return (detail::row_d(s, k + 1, r) - detail::row_d(s, k, r)).norm();
                                     });
}

inline LayerProfile neighbor_cosine_profile(const std::vector<LayerEmbeddingSet>& sets, TokenClass c, DocRole role) {
    const std::size_t slots = sets.empty() ? 0 : sets.front().layers.size() - 1;
    return detail::two_stage_profile(sets, c, role, "neighbor_cosine", slots,
                                     [](const LayerEmbeddingSet& s, Eigen::Index r, int k) {
                                         const auto a = detail::row_d(s, k + 1, r), b = detail::row_d(s, k, r);
                                         const double den = a.norm() * b.norm();
                                         if (den == 0.0) throw std::domain_error("neighbor_cosine: zero-norm embedding");
                                         return std::clamp(a.dot(b) / den, -1.0, 1.0);
                                     });
}

struct HistogramOptions {
    std::size_t max_tokens_per_document = 512;
    std::uint64_t seed = 0;
    unsigned workers = 0;
};

/// Cosines over all pairs of regular tokens within each document, pooled over
/// documents. Longer documents contribute a seeded uniform sample of tokens.
inline CosineHistogram pairwise_cosine_histogram(const std::vector<LayerEmbeddingSet>& sets,
                                                 const HistogramOptions& opt = {}) {
    if (sets.empty()) throw std::invalid_argument("pairwise_cosine_histogram: no documents");
    const std::size_t layers = sets.front().layers.size();
    using Counts = std::vector<std::vector<std::uint64_t>>;
    std::vector<Counts> per_doc(sets.size());
    detail::parallel_for(sets.size(), opt.workers, [&](std::size_t d) {
        const auto& s = sets[d];
        if (s.layers.size() != layers) throw std::invalid_argument("pairwise_cosine_histogram: documents disagree on layer count");
        auto rows = detail::class_rows(s, TokenClass::regular);
        if (rows.size() < 2) return;
        if (rows.size() > opt.max_tokens_per_document) {
            std::mt19937_64 rng(opt.seed ^ (0x9e3779b97f4a7c15ULL * (d + 1)));
            std::vector<Eigen::Index> pick;
            std::sample(rows.begin(), rows.end(), std::back_inserter(pick), opt.max_tokens_per_document, rng);
            rows = std::move(pick);
        }
        Counts c(layers, std::vector<std::uint64_t>(kHistogramBins, 0));
        for (std::size_t k = 0; k < layers; ++k) {
            Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), s.layers[k].cols());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                m.row(static_cast<Eigen::Index>(i)) = s.layers[k].row(rows[i]).cast<double>();
                const double n = m.row(static_cast<Eigen::Index>(i)).norm();
                if (n == 0.0) throw std::domain_error("pairwise_cosine_histogram: zero-norm embedding");
                m.row(static_cast<Eigen::Index>(i)) /= n;
            }
            const Eigen::MatrixXd g = m * m.transpose();
            for (Eigen::Index i = 0; i < g.rows(); ++i)
                for (Eigen::Index j = i + 1; j < g.cols(); ++j) ++c[k][static_cast<std::size_t>(CosineHistogram::bin_of(g(i, j)))];
        }
        per_doc[d] = std::move(c);
    });

    CosineHistogram h;
    h.frequencies.assign(layers, std::vector<double>(kHistogramBins, 0.0));
    h.pair_counts.assign(layers, 0);
    Counts total(layers, std::vector<std::uint64_t>(kHistogramBins, 0));
    for (const auto& c : per_doc) {
        if (c.empty()) continue;
        ++h.n_documents;
        for (std::size_t k = 0; k < layers; ++k)
            for (int b = 0; b < kHistogramBins; ++b) total[k][static_cast<std::size_t>(b)] += c[k][static_cast<std::size_t>(b)];
    }
    if (h.n_documents == 0) throw std::invalid_argument("pairwise_cosine_histogram: no document has two regular tokens");
    for (std::size_t k = 0; k < layers; ++k) {
        h.pair_counts[k] = std::accumulate(total[k].begin(), total[k].end(), std::uint64_t{0});
        for (int b = 0; b < kHistogramBins; ++b)
            h.frequencies[k][static_cast<std::size_t>(b)] =
                static_cast<double>(total[k][static_cast<std::size_t>(b)]) / static_cast<double>(h.pair_counts[k]);
    }
    return h;
}

inline constexpr const char* kAveragingConvention = "token>document>corpus";

/// `# statistic=norm class=CLS role=text model=... averaging=...` then
/// `layer,value` rows. Increment and neighbor-cosine rows are labelled by the
/// lower layer of the transition.
inline void write_profile_csv(std::ostream& out, const LayerProfile& p, const std::string& model_id) {
    out << "# statistic=" << p.statistic << " class=" << to_string(p.token_class) << " role=" << to_string(p.doc_role)
        << " model=" << model_id << " averaging=" << kAveragingConvention << " documents=" << p.n_documents << "\n";
    out << "layer,value\n";
    out.precision(10);
    for (std::size_t k = 0; k < p.per_layer_value.size(); ++k) out << k << "," << p.per_layer_value[k] << "\n";
}

inline void write_histogram_csv(std::ostream& out, const CosineHistogram& h, const std::string& model_id,
                                DocRole role) {
    out << "# statistic=pairwise_cosine class=regular role=" << to_string(role) << " model=" << model_id
        << " averaging=pooled-within-document-pairs bin_width=0.01 documents=" << h.n_documents << "\n";
    out << "layer";
    out.precision(10);
    for (int b = 0; b < kHistogramBins; ++b) out << "," << CosineHistogram::bin_lower(b);
    out << "\n";
    for (std::size_t k = 0; k < h.frequencies.size(); ++k) {
        out << k;
        for (double f : h.frequencies[k]) out << "," << f;
        out << "\n";
    }
}

} // namespace estimekit
