#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "estimekit/provider.hpp"
#include "estimekit/rank_stats.hpp"
#include "estimekit/similarity.hpp"

namespace estimekit {

/// Alarm count: summary tokens that also occur somewhere in the text but
/// whose point of similarity holds a different token. Higher means less
/// consistent.
inline std::int64_t estime_alarms(const TokenSequence& summary, const TokenSequence& text, const Alignment& alignment) {
    const auto s_ids = summary.regular_ids();
    const auto t_ids = text.regular_ids();
    if (alignment.size() != s_ids.size()) throw std::invalid_argument("estime_alarms: alignment/summary mismatch");
    const std::unordered_set<TokenId> present(t_ids.begin(), t_ids.end());
    std::int64_t alarms = 0;
    for (std::size_t i = 0; i < s_ids.size(); ++i) {
        if (!present.count(s_ids[i])) continue;
        const auto beta = alignment.target_index[i];
        if (beta >= t_ids.size()) throw std::out_of_range("estime_alarms: alignment target outside text");
        if (t_ids[beta] != s_ids[i]) ++alarms;
    }
    return alarms;
}

/// Rows-only form used by the sweeps, where ids are already regular-only.
inline std::int64_t estime_alarms(std::span<const TokenId> summary_ids, std::span<const TokenId> text_ids,
                                  const Alignment& alignment) {
    const std::unordered_set<TokenId> present(text_ids.begin(), text_ids.end());
    std::int64_t alarms = 0;
    for (std::size_t i = 0; i < summary_ids.size(); ++i)
        if (present.count(summary_ids[i]) && text_ids[alignment.target_index.at(i)] != summary_ids[i]) ++alarms;
    return alarms;
}

/// Mean cosine between each summary token's raw embedding and the raw
/// embedding of the text token at its point of similarity, over all regular
/// summary tokens.
inline double estime_soft(const RowMatrix& raw_summary_regular, const RowMatrix& raw_text_regular,
                          const Alignment& alignment) {
    if (alignment.size() == 0) throw std::invalid_argument("estime_soft: empty alignment");
    if (static_cast<std::size_t>(raw_summary_regular.rows()) != alignment.size())
        throw std::invalid_argument("estime_soft: alignment/summary mismatch");
    double sum = 0;
    for (std::size_t i = 0; i < alignment.size(); ++i) {
        const auto a = raw_summary_regular.row(static_cast<Eigen::Index>(i)).cast<double>();
        const auto b = raw_text_regular.row(static_cast<Eigen::Index>(alignment.target_index[i])).cast<double>();
        const double na = a.norm(), nb = b.norm();
        if (na == 0.0 || nb == 0.0) throw std::domain_error("estime_soft: zero-norm raw embedding");
        sum += a.dot(b) / (na * nb);
    }
    return sum / static_cast<double>(alignment.size());
}

inline double estime_soft(const RawEmbeddingSet& raw_summary, const RawEmbeddingSet& raw_text,
                          const Alignment& alignment) {
    auto inner = [](const RowMatrix& m) -> RowMatrix { return m.middleRows(1, m.rows() - 2); };
    if (raw_summary.rows.rows() < 3 || raw_text.rows.rows() < 3)
        throw std::invalid_argument("estime_soft: no regular tokens");
    return estime_soft(inner(raw_summary.rows), inner(raw_text.rows), alignment);
}

namespace detail {
inline std::vector<double> summary_positions(std::size_t n) {
    std::vector<double> x(n);
    std::iota(x.begin(), x.end(), 1.0);
    return x;
}
} // namespace detail

/// Tau-c between summary order and the order of the points of similarity.
inline CorrelationValue order_coherence(const Alignment& alignment) {
    if (alignment.size() < 2) return CorrelationValue::undefined("order_coherence: fewer than 2 tokens");
    const auto y = similarity_profile(alignment);
    return kendall_tau_c(detail::summary_positions(y.size()), y);
}

/// Local Kendall statistic between summary order and similarity-point order,
/// counting only token pairs at most `d` positions apart in the summary.
inline CorrelationValue local_order(const Alignment& alignment, std::int64_t d) {
    if (alignment.size() < 2) return CorrelationValue::undefined("local_order: fewer than 2 tokens");
    const auto y = similarity_profile(alignment);
    return kendall_tau_local(detail::summary_positions(y.size()), y, d);
}

/// Scoring configuration. Serialized as `key = value` lines.
struct MeasureConfig {
    ExtractionConfig extraction;
    int summary_layer = 21;
    int text_layer = 21;
    std::vector<std::int64_t> distances = default_distances();

    static std::vector<std::int64_t> default_distances() {
        std::vector<std::int64_t> d(40);
        std::iota(d.begin(), d.end(), 1);
        return d;
    }

    std::string to_string() const {
        std::ostringstream o;
        o << "model = " << extraction.model_id << "\n"
          << "raw_model = " << extraction.raw_model_id << "\n"
          << "summary_layer = " << summary_layer << "\n"
          << "text_layer = " << text_layer << "\n"
          << "window_len = " << extraction.window_len << "\n"
          << "stride = " << extraction.stride << "\n"
          << "min_gap = " << extraction.min_gap << "\n"
          << "d_list = " << join_distances(distances) << "\n";
        return o.str();
    }

    static MeasureConfig parse(const std::string& doc) {
        MeasureConfig c;
        std::istringstream in(doc);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto eq = line.find('=');
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
            const auto key = trim(line.substr(0, eq));
            const auto val = trim(line.substr(eq + 1));
            try {
                if (key == "model") c.extraction.model_id = val;
                else if (key == "raw_model") c.extraction.raw_model_id = val;
                else if (key == "summary_layer") c.summary_layer = std::stoi(val);
                else if (key == "text_layer") c.text_layer = std::stoi(val);
                else if (key == "window_len") c.extraction.window_len = std::stoi(val);
                else if (key == "stride") c.extraction.stride = std::stoi(val);
                else if (key == "min_gap") c.extraction.min_gap = std::stoi(val);
                else if (key == "d_list") c.distances = parse_distances(val);
                else throw std::invalid_argument("unknown key '" + key + "'");
            } catch (const std::logic_error& e) {
                throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
            }
        }
        return c;
    }

    /// Identity of everything that affects a MeasureResult.
    std::string fingerprint() const { return fingerprint_of(to_string()); }

    static std::string join_distances(const std::vector<std::int64_t>& d) {
        std::string s;
        for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "," : "") + std::to_string(d[i]);
        return s;
    }

    /// Accepts comma-separated values and inclusive ranges, e.g. "1..15,20".
    static std::vector<std::int64_t> parse_distances(const std::string& s) {
        std::vector<std::int64_t> out;
        std::istringstream in(s);
        std::string item;
        while (std::getline(in, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            const auto dots = item.find("..");
            if (dots != std::string::npos) {
                const auto a = std::stoll(item.substr(0, dots)), b = std::stoll(item.substr(dots + 2));
                if (b < a) throw std::invalid_argument("empty distance range " + item);
                for (auto v = a; v <= b; ++v) out.push_back(v);
            } else {
                out.push_back(std::stoll(item));
            }
        }
        for (auto v : out)
            if (v < 1) throw std::invalid_argument("distances must be positive");
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        if (out.empty()) throw std::invalid_argument("empty distance list");
        return out;
    }

  private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    }
};

struct MeasureResult {
    std::int64_t estime_alarms = 0;
    double estime_soft = 0;
    std::optional<double> order_coherence;
    std::map<std::int64_t, std::optional<double>> local_order;
    std::size_t n_summary_tokens = 0;
    std::size_t n_summary_tokens_in_text = 0;
    std::string config_fingerprint;
};

/// Everything the four measures need from one text/summary pair, in
/// regular-token form.
inline MeasureResult compute_measures(const DocumentEmbeddings& text, const DocumentEmbeddings& summary,
                                      const MeasureConfig& cfg) {
    const Alignment a = align(summary.layers, text.layers, cfg.summary_layer, cfg.text_layer);
    MeasureResult r;
    r.estime_alarms = estime_alarms(summary.tokens, text.tokens, a);
    r.estime_soft = estime_soft(summary.raw, text.raw, a);
    r.order_coherence = order_coherence(a).value;
    for (auto d : cfg.distances) r.local_order[d] = local_order(a, d).value;
    const auto t_ids = text.tokens.regular_ids();
    const std::unordered_set<TokenId> present(t_ids.begin(), t_ids.end());
    for (auto id : summary.tokens.regular_ids()) r.n_summary_tokens_in_text += present.count(id);
    r.n_summary_tokens = a.size();
    r.config_fingerprint = cfg.fingerprint();
    return r;
}

class PairError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Scores text/summary pairs with one provider (models + cache).
class PairScorer {
  public:
    explicit PairScorer(MeasureConfig cfg) : cfg_(std::move(cfg)), provider_(cfg_.extraction) {
        const int L = provider_.num_layers();
        if (cfg_.summary_layer < 0 || cfg_.summary_layer > L || cfg_.text_layer < 0 || cfg_.text_layer > L)
            throw std::invalid_argument("layers must be within 0.." + std::to_string(L));
    }

    const MeasureConfig& config() const { return cfg_; }
    EmbeddingProvider& provider() { return provider_; }

    MeasureResult score_pair(const std::string& text, const std::string& summary, const std::string& pair_id = {}) {
        try {
            const auto t = provider_.embed(text);
            const auto s = provider_.embed(summary);
            return compute_measures(t, s, cfg_);
        } catch (const std::exception& e) {
            throw PairError((pair_id.empty() ? std::string("pair") : "pair " + pair_id) + ": " + e.what());
        }
    }

  private:
    MeasureConfig cfg_;
    EmbeddingProvider provider_;
};

} // namespace estimekit
