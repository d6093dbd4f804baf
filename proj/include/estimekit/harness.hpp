#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "estimekit/layer_probe.hpp"
#include "estimekit/measures.hpp"

namespace estimekit {

inline const std::array<std::string, 4> kQualities{"consistency", "relevance", "coherence", "fluency"};

class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct AnnotatedPair {
    std::string doc_id;
    std::string system_id;
    std::string text;
    std::string summary;
    std::map<std::string, std::vector<double>> expert_scores;

    std::string key() const { return doc_id + "/" + system_id; }
};

inline void check_quality(const std::string& q) {
    if (std::find(kQualities.begin(), kQualities.end(), q) == kQualities.end())
        throw std::invalid_argument("unknown quality '" + q + "' (expected consistency, relevance, coherence or fluency)");
}

inline double average_expert_scores(const AnnotatedPair& pair, const std::string& quality) {
    check_quality(quality);
    const auto it = pair.expert_scores.find(quality);
    if (it == pair.expert_scores.end() || it->second.empty())
        throw std::invalid_argument("pair " + pair.key() + " has no " + quality + " grades");
    double s = 0;
    for (double g : it->second) s += g;
    return s / static_cast<double>(it->second.size());
}

namespace detail {

inline std::string located(const std::string& path, std::size_t line, const std::string& msg) {
    return path + ":" + std::to_string(line) + ": " + msg;
}

inline void validate_pair(const AnnotatedPair& p) {
    for (const auto& q : kQualities) {
        const auto it = p.expert_scores.find(q);
        if (it == p.expert_scores.end() || it->second.empty()) throw std::invalid_argument("no " + q + " grades");
        for (double g : it->second)
            if (!(g >= 1.0 && g <= 5.0)) throw std::invalid_argument(q + " grade outside [1, 5]");
    }
    if (p.doc_id.empty() || p.system_id.empty()) throw std::invalid_argument("empty doc_id or system_id");
    if (p.summary.empty()) throw std::invalid_argument("empty summary");
}

inline AnnotatedPair parse_native(const nlohmann::json& r) {
    AnnotatedPair p;
    p.doc_id = r.at("doc_id").get<std::string>();
    p.system_id = r.at("system_id").get<std::string>();
    if (r.contains("text")) p.text = r["text"].get<std::string>();
    p.summary = r.at("summary").get<std::string>();
    for (const auto& [q, grades] : r.at("scores").items()) {
        check_quality(q);
        p.expert_scores[q] = grades.get<std::vector<double>>();
    }
    return p;
}

inline AnnotatedPair parse_summeval(const nlohmann::json& r) {
    AnnotatedPair p;
    p.doc_id = r.at("id").get<std::string>();
    p.system_id = r.at("model_id").get<std::string>();
    if (r.contains("text")) p.text = r["text"].get<std::string>();
    p.summary = r.at("decoded").get<std::string>();
    for (const auto& ann : r.at("expert_annotations"))
        for (const auto& q : kQualities) p.expert_scores[q].push_back(ann.at(q).get<double>());
    return p;
}

} // namespace detail

/// Reads "summeval" (paired annotation records: id, model_id, decoded, text,
/// expert_annotations) or "native" (doc_id, system_id, text, summary,
/// scores.{quality}) line-delimited JSON. Records without a text are joined
/// to `texts_path`, a line-delimited file of {"id", "text"} records.
inline std::vector<AnnotatedPair> load_dataset(const std::filesystem::path& path, const std::string& format,
                                               const std::filesystem::path& texts_path = {}) {
    if (format != "summeval" && format != "native")
        throw std::invalid_argument("unknown dataset format '" + format + "' (expected summeval or native)");
    std::ifstream in(path);
    if (!in) throw DataError("cannot read dataset " + path.string());

    std::map<std::string, std::string> texts;
    if (!texts_path.empty()) {
        std::ifstream tin(texts_path);
        if (!tin) throw DataError("cannot read texts file " + texts_path.string());
        std::string line;
        std::size_t n = 0;
        while (std::getline(tin, line)) {
            ++n;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                const auto r = nlohmann::json::parse(line);
                texts[r.at("id").get<std::string>()] = r.at("text").get<std::string>();
            } catch (const std::exception& e) {
                throw DataError(detail::located(texts_path.string(), n, e.what()));
            }
        }
    }

    std::vector<AnnotatedPair> pairs;
    std::set<std::string> seen;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        AnnotatedPair p;
        try {
            const auto r = nlohmann::json::parse(line);
            p = format == "native" ? detail::parse_native(r) : detail::parse_summeval(r);
            if (p.text.empty()) {
                const auto it = texts.find(p.doc_id);
                if (it == texts.end()) throw std::invalid_argument("missing text for document " + p.doc_id);
                p.text = it->second;
            }
            detail::validate_pair(p);
        } catch (const std::exception& e) {
            throw DataError(detail::located(path.string(), n, e.what()));
        }
        if (!seen.insert(p.key()).second) throw DataError(detail::located(path.string(), n, "duplicate pair " + p.key()));
        pairs.push_back(std::move(p));
    }
    if (pairs.empty()) throw DataError("dataset " + path.string() + " has no records");
    return pairs;
}

inline void write_native(std::ostream& out, const std::vector<AnnotatedPair>& pairs) {
    for (const auto& p : pairs) {
        nlohmann::json r{{"doc_id", p.doc_id}, {"system_id", p.system_id}, {"text", p.text}, {"summary", p.summary}};
        r["scores"] = nlohmann::json::object();
        for (const auto& [q, g] : p.expert_scores) r["scores"][q] = g;
        out << r.dump() << "\n";
    }
}

/// Keeps every pair of `n_docs` documents chosen by a seeded shuffle; the
/// original pair order is preserved.
inline std::vector<AnnotatedPair> subsample_documents(const std::vector<AnnotatedPair>& pairs, std::size_t n_docs,
                                                      std::uint64_t seed) {
    std::vector<std::string> docs;
    for (const auto& p : pairs)
        if (std::find(docs.begin(), docs.end(), p.doc_id) == docs.end()) docs.push_back(p.doc_id);
    if (n_docs >= docs.size()) return pairs;
    std::mt19937_64 rng(seed);
    std::shuffle(docs.begin(), docs.end(), rng);
    const std::set<std::string> keep(docs.begin(), docs.begin() + static_cast<std::ptrdiff_t>(n_docs));
    std::vector<AnnotatedPair> out;
    for (const auto& p : pairs)
        if (keep.count(p.doc_id)) out.push_back(p);
    return out;
}

enum class Pooling { pooled, per_document };

inline std::string to_string(Pooling p) { return p == Pooling::pooled ? "pooled" : "per_document"; }

/// Rank correlation between a measure and averaged expert grades. NaN scores
/// mark pairs where the measure is undefined; those pairs are left out.
/// Per-document pooling averages the defined per-document correlations.
inline CorrelationValue correlate_measure(const std::vector<double>& measure_scores,
                                          const std::vector<AnnotatedPair>& pairs, const std::string& quality,
                                          CorrelationKind kind, Pooling pooling = Pooling::pooled,
                                          bool negate = false) {
    check_quality(quality);
    if (measure_scores.size() != pairs.size())
        throw std::invalid_argument("correlate_measure: " + std::to_string(measure_scores.size()) + " scores for " +
                                    std::to_string(pairs.size()) + " pairs");
    auto collect = [&](auto&& include) {
        std::vector<double> x, y;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (!include(i) || std::isnan(measure_scores[i])) continue;
            x.push_back(negate ? -measure_scores[i] : measure_scores[i]);
            y.push_back(average_expert_scores(pairs[i], quality));
        }
        return std::pair{x, y};
    };
    if (pooling == Pooling::pooled) {
        auto [x, y] = collect([](std::size_t) { return true; });
        if (x.size() < 2) return CorrelationValue::undefined("fewer than 2 pairs with a defined score");
        return correlate(kind, x, y);
    }
    std::vector<std::string> docs;
    for (const auto& p : pairs)
        if (std::find(docs.begin(), docs.end(), p.doc_id) == docs.end()) docs.push_back(p.doc_id);
    double sum = 0;
    std::int64_t used = 0;
    for (const auto& d : docs) {
        auto [x, y] = collect([&](std::size_t i) { return pairs[i].doc_id == d; });
        if (x.size() < 2) continue;
        const auto c = correlate(kind, x, y);
        if (!c.defined()) continue;
        sum += *c;
        ++used;
    }
    if (used == 0) return CorrelationValue::undefined("no document has a defined correlation");
    CorrelationValue out;
    out.value = sum / static_cast<double>(used);
    out.n_pairs_used = used;
    return out;
}

enum class MeasureId { estime, estime_soft, order_coherence, local_order };

inline std::string to_string(MeasureId m) {
    switch (m) {
    case MeasureId::estime: return "estime";
    case MeasureId::estime_soft: return "estime-soft";
    case MeasureId::order_coherence: return "order";
    case MeasureId::local_order: return "local-order";
    }
    return "?";
}

inline MeasureId parse_measure_id(const std::string& s) {
    for (auto m : {MeasureId::estime, MeasureId::estime_soft, MeasureId::order_coherence, MeasureId::local_order})
        if (s == to_string(m)) return m;
    throw std::invalid_argument("unknown measure '" + s + "' (expected estime, estime-soft, order or local-order)");
}

/// Alarm counts grow with inconsistency, so they are negated before correlating.
inline bool is_alarm_type(MeasureId m) { return m == MeasureId::estime; }

inline double measure_value(const MeasureResult& r, MeasureId m, std::int64_t d = 0) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    switch (m) {
    case MeasureId::estime: return static_cast<double>(r.estime_alarms);
    case MeasureId::estime_soft: return r.estime_soft;
    case MeasureId::order_coherence: return r.order_coherence.value_or(nan);
    case MeasureId::local_order: {
        const auto it = r.local_order.find(d);
        if (it == r.local_order.end()) throw std::invalid_argument("local_order not computed for d=" + std::to_string(d));
        return it->second.value_or(nan);
    }
    }
    return nan;
}

struct CorrelationGrid {
    std::string measure;
    std::string quality;
    std::string row_axis = "summary_layer";
    std::string col_axis = "text_layer";
    CorrelationKind kind = CorrelationKind::tau_c;
    Pooling pooling = Pooling::pooled;
    std::vector<std::int64_t> rows;
    std::vector<std::int64_t> cols;
    std::vector<std::vector<CorrelationValue>> cells;

    const CorrelationValue& at(std::int64_t r, std::int64_t c) const {
        const auto i = std::find(rows.begin(), rows.end(), r) - rows.begin();
        const auto j = std::find(cols.begin(), cols.end(), c) - cols.begin();
        if (i == static_cast<std::ptrdiff_t>(rows.size()) || j == static_cast<std::ptrdiff_t>(cols.size()))
            throw std::out_of_range("grid cell (" + std::to_string(r) + ", " + std::to_string(c) + ") not present");
        return cells[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
};

/// A distance sweep is a grid with layers on rows and d on columns.
using DistanceGrid = CorrelationGrid;

/// Per-pair measure values for every requested cell, scores[row][col][pair].
struct ScoreTable {
    std::vector<std::int64_t> rows;
    std::vector<std::int64_t> cols;
    std::vector<std::vector<std::vector<double>>> scores;
};

struct SweepOptions {
    unsigned workers = 0;
    // called after each document with (documents done, documents total)
    std::function<void(std::size_t, std::size_t)> progress;
};

namespace detail {

inline void check_layers(const std::vector<int>& layers, int num_layers) {
    if (layers.empty()) throw std::invalid_argument("empty layer list");
    for (int l : layers)
        if (l < 0 || l > num_layers)
            throw std::invalid_argument("layer " + std::to_string(l) + " outside 0.." + std::to_string(num_layers));
}

// Pairs grouped by document in order of first appearance.
inline std::vector<std::vector<std::size_t>> group_by_document(const std::vector<AnnotatedPair>& pairs) {
    std::vector<std::string> docs;
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto it = std::find(docs.begin(), docs.end(), pairs[i].doc_id);
        if (it == docs.end()) {
            docs.push_back(pairs[i].doc_id);
            groups.push_back({i});
        } else {
            groups[static_cast<std::size_t>(it - docs.begin())].push_back(i);
            if (pairs[i].text != pairs[groups[static_cast<std::size_t>(it - docs.begin())].front()].text)
                throw std::invalid_argument("document " + pairs[i].doc_id + " has differing texts");
        }
    }
    return groups;
}

inline double cell_value(MeasureId m, const DocumentEmbeddings& s, const DocumentEmbeddings& t, const Alignment& a,
                         std::int64_t d) {
    switch (m) {
    case MeasureId::estime: return static_cast<double>(estime_alarms(s.tokens, t.tokens, a));
    case MeasureId::estime_soft: return estime_soft(s.raw, t.raw, a);
    case MeasureId::order_coherence: return order_coherence(a).value.value_or(std::numeric_limits<double>::quiet_NaN());
    case MeasureId::local_order: return local_order(a, d).value.value_or(std::numeric_limits<double>::quiet_NaN());
    }
    return 0;
}

} // namespace detail

/// Scores every pair under every (summary layer, text layer) combination.
/// Each text is embedded once and its layer rows are shared by all of its
/// summaries and all summary layers.
inline ScoreTable layer_sweep_scores(EmbeddingProvider& provider, const std::vector<AnnotatedPair>& pairs,
                                     MeasureId measure, const std::vector<int>& summary_layers,
                                     const std::vector<int>& text_layers, std::int64_t d = 0,
                                     const SweepOptions& opt = {}) {
    detail::check_layers(summary_layers, provider.num_layers());
    detail::check_layers(text_layers, provider.num_layers());
    if (measure == MeasureId::local_order && d < 1) throw std::invalid_argument("local-order needs a distance d >= 1");
    ScoreTable t;
    t.rows.assign(summary_layers.begin(), summary_layers.end());
    t.cols.assign(text_layers.begin(), text_layers.end());
    t.scores.assign(summary_layers.size(),
                    std::vector<std::vector<double>>(text_layers.size(), std::vector<double>(pairs.size(), 0.0)));
    const auto groups = detail::group_by_document(pairs);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto text = provider.embed(pairs[groups[g].front()].text);
        std::vector<RowMatrix> text_rows;
        for (int lt : text_layers) text_rows.push_back(regular_rows(text.layers, lt));
        for (auto pi : groups[g]) {
            const auto summary = provider.embed(pairs[pi].summary);
            const std::size_t cells = summary_layers.size() * text_layers.size();
            detail::parallel_for(cells, opt.workers, [&](std::size_t c) {
                const std::size_t i = c / text_layers.size(), j = c % text_layers.size();
                Alignment a = align_rows(regular_rows(summary.layers, summary_layers[i]), text_rows[j]);
                a.summary_layer = summary_layers[i];
                a.text_layer = text_layers[j];
                t.scores[i][j][pi] = detail::cell_value(measure, summary, text, a, d);
            });
        }
        if (opt.progress) opt.progress(g + 1, groups.size());
    }
    return t;
}

/// local_order for every (layer, d), with the same layer on both sides.
inline ScoreTable distance_sweep_scores(EmbeddingProvider& provider, const std::vector<AnnotatedPair>& pairs,
                                        const std::vector<int>& layers, const std::vector<std::int64_t>& distances,
                                        const SweepOptions& opt = {}) {
    detail::check_layers(layers, provider.num_layers());
    if (distances.empty() || !std::is_sorted(distances.begin(), distances.end()) || distances.front() < 1 ||
        std::adjacent_find(distances.begin(), distances.end()) != distances.end())
        throw std::invalid_argument("distances must be positive and strictly ascending");
    ScoreTable t;
    t.rows.assign(layers.begin(), layers.end());
    t.cols = distances;
    t.scores.assign(layers.size(),
                    std::vector<std::vector<double>>(distances.size(), std::vector<double>(pairs.size(), 0.0)));
    const auto groups = detail::group_by_document(pairs);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto text = provider.embed(pairs[groups[g].front()].text);
        for (auto pi : groups[g]) {
            const auto summary = provider.embed(pairs[pi].summary);
            detail::parallel_for(layers.size(), opt.workers, [&](std::size_t i) {
                const Alignment a = align(summary.layers, text.layers, layers[i], layers[i]);
                for (std::size_t j = 0; j < distances.size(); ++j)
                    t.scores[i][j][pi] =
                        local_order(a, distances[j]).value.value_or(std::numeric_limits<double>::quiet_NaN());
            });
        }
        if (opt.progress) opt.progress(g + 1, groups.size());
    }
    return t;
}

inline CorrelationGrid correlate_table(const ScoreTable& t, const std::vector<AnnotatedPair>& pairs,
                                       const std::string& quality, CorrelationKind kind, Pooling pooling,
                                       bool negate) {
    CorrelationGrid g;
    g.quality = quality;
    g.kind = kind;
    g.pooling = pooling;
    g.rows = t.rows;
    g.cols = t.cols;
    for (const auto& row : t.scores) {
        g.cells.emplace_back();
        for (const auto& col : row) g.cells.back().push_back(correlate_measure(col, pairs, quality, kind, pooling, negate));
    }
    return g;
}

inline CorrelationGrid layer_sweep(EmbeddingProvider& provider, const std::vector<AnnotatedPair>& pairs,
                                   const std::string& quality, MeasureId measure, const std::vector<int>& summary_layers,
                                   const std::vector<int>& text_layers, CorrelationKind kind,
                                   Pooling pooling = Pooling::pooled, std::int64_t d = 0, const SweepOptions& opt = {}) {
    check_quality(quality);
    auto g = correlate_table(layer_sweep_scores(provider, pairs, measure, summary_layers, text_layers, d, opt), pairs,
                             quality, kind, pooling, is_alarm_type(measure));
    g.measure = to_string(measure);
    return g;
}

inline DistanceGrid distance_sweep(EmbeddingProvider& provider, const std::vector<AnnotatedPair>& pairs,
                                   const std::string& quality, const std::vector<int>& layers,
                                   const std::vector<std::int64_t>& distances, CorrelationKind kind,
                                   Pooling pooling = Pooling::pooled, const SweepOptions& opt = {}) {
    check_quality(quality);
    auto g = correlate_table(distance_sweep_scores(provider, pairs, layers, distances, opt), pairs, quality, kind,
                             pooling, false);
    g.measure = to_string(MeasureId::local_order);
    g.row_axis = "layer";
    g.col_axis = "d";
    return g;
}

/// `# measure=... quality=... kind=... pooling=...`, then a header row of
/// column axis values and one row per row-axis value. Undefined cells are empty.
inline void write_grid_csv(std::ostream& out, const CorrelationGrid& g) {
    out << "# measure=" << g.measure << " quality=" << g.quality << " kind=" << to_string(g.kind)
        << " pooling=" << to_string(g.pooling) << "\n";
    out << g.row_axis << "\\" << g.col_axis;
    for (auto c : g.cols) out << "," << c;
    out << "\n";
    out.precision(10);
    for (std::size_t i = 0; i < g.rows.size(); ++i) {
        out << g.rows[i];
        for (const auto& cell : g.cells[i]) {
            out << ",";
            if (cell.defined()) out << *cell;
        }
        out << "\n";
    }
}

inline CorrelationGrid read_grid_csv(std::istream& in) {
    CorrelationGrid g;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> f;
        std::string item;
        std::istringstream ss(s);
        while (std::getline(ss, item, ',')) f.push_back(item);
        if (!s.empty() && s.back() == ',') f.emplace_back();
        return f;
    };
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw DataError("grid csv: missing header comment");
    std::istringstream meta(line.substr(2));
    for (std::string kv; meta >> kv;) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const auto k = kv.substr(0, eq), v = kv.substr(eq + 1);
        if (k == "measure") g.measure = v;
        else if (k == "quality") g.quality = v;
        else if (k == "kind") g.kind = parse_correlation_kind(v);
        else if (k == "pooling") g.pooling = v == "pooled" ? Pooling::pooled : Pooling::per_document;
    }
    if (!std::getline(in, line)) throw DataError("grid csv: missing axis row");
    auto head = split(line);
    const auto slash = head[0].find('\\');
    if (slash != std::string::npos) {
        g.row_axis = head[0].substr(0, slash);
        g.col_axis = head[0].substr(slash + 1);
    }
    for (std::size_t j = 1; j < head.size(); ++j) g.cols.push_back(std::stoll(head[j]));
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split(line);
        if (f.size() != g.cols.size() + 1) throw DataError("grid csv: ragged row '" + line + "'");
        g.rows.push_back(std::stoll(f[0]));
        g.cells.emplace_back();
        for (std::size_t j = 1; j < f.size(); ++j) {
            if (f[j].empty()) g.cells.back().push_back(CorrelationValue::undefined("empty cell"));
            else {
                CorrelationValue c;
                c.value = std::stod(f[j]);
                g.cells.back().push_back(c);
            }
        }
    }
    return g;
}

/// A per-pair score column from another system, keyed by (doc_id, system_id).
struct ExternalScores {
    std::string name;
    std::map<std::string, double> by_key;

    /// Scores in pair order; throws listing every pair without a score.
    std::vector<double> for_pairs(const std::vector<AnnotatedPair>& pairs) const {
        std::vector<double> out;
        std::vector<std::string> missing;
        for (const auto& p : pairs) {
            const auto it = by_key.find(p.key());
            if (it == by_key.end()) missing.push_back(p.key());
            else out.push_back(it->second);
        }
        if (!missing.empty()) {
            std::string msg = "external scores '" + name + "' lack " + std::to_string(missing.size()) + " pair(s):";
            for (const auto& m : missing) msg += " " + m;
            throw DataError(msg);
        }
        return out;
    }
};

/// CSV with header `doc_id,system_id,<name>`.
inline ExternalScores import_external_scores(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read scores " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos || line.substr(0, c1) != "doc_id" ||
        line.substr(c1 + 1, c2 - c1 - 1) != "system_id")
        throw DataError(path.string() + ":1: expected header doc_id,system_id,<name>");
    ExternalScores s;
    s.name = line.substr(c2 + 1);
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto a = line.find(','), b = line.find(',', a + 1);
        if (a == std::string::npos || b == std::string::npos) throw DataError(detail::located(path.string(), n, "expected 3 fields"));
        const auto key = line.substr(0, a) + "/" + line.substr(a + 1, b - a - 1);
        try {
            std::size_t used = 0;
            const auto field = line.substr(b + 1);
            const double v = std::stod(field, &used);
            if (used != field.size()) throw std::invalid_argument("trailing characters");
            if (!s.by_key.emplace(key, v).second) throw std::invalid_argument("duplicate key " + key);
        } catch (const std::exception& e) {
            throw DataError(detail::located(path.string(), n, e.what()));
        }
    }
    return s;
}

} // namespace estimekit
