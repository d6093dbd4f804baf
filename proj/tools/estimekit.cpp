#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "estimekit/harness.hpp"
#include "estimekit/layer_probe.hpp"
#include "estimekit/measures.hpp"
#include "heatmap.hpp"

namespace fs = std::filesystem;
using namespace estimekit;
using ojson = nlohmann::ordered_json;

namespace {

enum Exit { ok = 0, config_error = 1, data_error = 2, compute_error = 3 };

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config_file;
    std::string model = kDefaultModel;
    std::string raw_model = kDefaultRawModel;
    int summary_layer = 21;
    int text_layer = 21;
    std::string layers;
    std::string summary_layers;
    std::string text_layers;
    std::string d_list = "1..40";
    int window_len = 512;
    int stride = 256;
    int min_gap = 8;
    std::string dataset;
    std::string format = "native";
    std::string texts;
    std::size_t docs = 0;
    std::uint64_t seed = 0;
    std::string cache_dir;
    bool no_cache = false;
    std::string out;
    bool emit_images = false;
    std::vector<std::string> negate{"estime"};
    unsigned workers = 0;
    bool keep_going = false;
    // score
    std::string text_file;
    std::string summary_file;
    // sweep / correlate
    std::vector<std::string> measures;
    std::vector<std::string> qualities{kQualities.begin(), kQualities.end()};
    std::vector<std::string> kinds{"tau_c", "spearman"};
    std::string pooling = "pooled";
    std::vector<std::string> results;
    std::vector<std::string> external;
    // probe
    std::vector<std::string> inputs;
    std::string role = "both";
    std::size_t max_tokens = 512;
};

std::vector<int> parse_layers(const std::string& s) {
    std::vector<int> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        const auto dots = item.find("..");
        try {
            if (dots == std::string::npos) {
                out.push_back(std::stoi(item));
            } else {
                const int a = std::stoi(item.substr(0, dots)), b = std::stoi(item.substr(dots + 2));
                if (b < a) throw ConfigError("empty layer range " + item);
                for (int v = a; v <= b; ++v) out.push_back(v);
            }
        } catch (const std::logic_error&) {
            throw ConfigError("bad layer list '" + s + "'");
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    if (out.empty()) throw ConfigError("empty layer list");
    return out;
}

// Builds the scoring configuration from flags, optionally starting from a
// key = value config file. Flags given explicitly win over the file.
MeasureConfig measure_config(const Options& o, const CLI::App& sub) {
    MeasureConfig c;
    if (!o.config_file.empty()) {
        std::ifstream in(o.config_file);
        if (!in) throw ConfigError("cannot read config " + o.config_file);
        std::stringstream ss;
        ss << in.rdbuf();
        try {
            c = MeasureConfig::parse(ss.str());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(o.config_file + ": " + e.what());
        }
    }
    auto given = [&](const char* flag) {
        const auto* opt = sub.get_option_no_throw(flag);
        return o.config_file.empty() || (opt && opt->count() > 0);
    };
    if (given("--model")) c.extraction.model_id = o.model;
    if (given("--raw-model")) c.extraction.raw_model_id = o.raw_model;
    if (given("--summary-layer")) c.summary_layer = o.summary_layer;
    if (given("--text-layer")) c.text_layer = o.text_layer;
    if (given("--window-len")) c.extraction.window_len = o.window_len;
    if (given("--stride")) c.extraction.stride = o.stride;
    if (given("--min-gap")) c.extraction.min_gap = o.min_gap;
    if (given("--d-list")) {
        try {
            c.distances = MeasureConfig::parse_distances(o.d_list);
        } catch (const std::logic_error& e) {
            throw ConfigError(std::string("--d-list: ") + e.what());
        }
    }
    c.extraction.cache_dir = o.cache_dir;
    c.extraction.use_cache = !o.no_cache;
    c.extraction.workers = o.workers;
    return c;
}

// Checks everything that can be checked from config.json alone.
// Layer checks use `layers` when given, else the configured pair layers.
int validate_models(const MeasureConfig& c, std::optional<std::vector<int>> layers = std::nullopt) {
    const auto& e = c.extraction;
    if (e.window_len < 3) throw ConfigError("--window-len must be at least 3");
    if (e.stride < 1 || e.stride > e.window_len - 2) throw ConfigError("--stride must be in [1, window_len - 2]");
    if (e.min_gap < 1 || e.min_gap > e.window_len) throw ConfigError("--min-gap must be in [1, window_len]");
    fs::path sim, raw;
    try {
        sim = resolve_model_dir(e.model_id);
        raw = resolve_model_dir(e.raw_model_id);
    } catch (const ModelNotFound& err) {
        throw ConfigError(err.what());
    }
    BertConfig cfg;
    try {
        cfg = BertConfig::load(sim);
        BertConfig::load(raw);
    } catch (const std::exception& err) {
        throw ConfigError(std::string("model config: ") + err.what());
    }
    if (e.window_len > cfg.max_positions)
        throw ConfigError("--window-len exceeds the model context of " + std::to_string(cfg.max_positions));
    const int L = cfg.num_layers;
    auto check = [&](int l, const std::string& what) {
        if (l < 0 || l > L) throw ConfigError(what + " " + std::to_string(l) + " outside 0.." + std::to_string(L));
    };
    if (layers) {
        for (int l : *layers) check(l, "layer");
    } else {
        check(c.summary_layer, "--summary-layer");
        check(c.text_layer, "--text-layer");
    }
    return L;
}

std::vector<AnnotatedPair> load_pairs(const Options& o) {
    auto pairs = load_dataset(o.dataset, o.format, o.texts);
    if (o.docs > 0) pairs = subsample_documents(pairs, o.docs, o.seed);
    return pairs;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path out_dir(const Options& o) {
    fs::path d = o.out.empty() ? fs::path("out") : fs::path(o.out);
    fs::create_directories(d);
    return d;
}

void telemetry(const EmbeddingProvider& p, const std::string& extra = {}) {
    std::cerr << "forward_passes=" << p.forward_calls();
    if (const auto* c = p.cache()) std::cerr << " cache_hits=" << c->hits() << " cache_misses=" << c->misses();
    if (!extra.empty()) std::cerr << " " << extra;
    std::cerr << "\n";
}

ojson optional_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

ojson result_record(const std::string& doc_id, const std::string& system_id, const MeasureResult& r) {
    ojson j;
    j["doc_id"] = doc_id;
    j["system_id"] = system_id;
    j["estime_alarms"] = r.estime_alarms;
    j["estime_soft"] = r.estime_soft;
    j["order_coherence"] = optional_json(r.order_coherence);
    ojson lo = ojson::object();
    for (const auto& [d, v] : r.local_order) lo[std::to_string(d)] = optional_json(v);
    j["local_order"] = lo;
    j["n_summary_tokens"] = r.n_summary_tokens;
    j["n_summary_tokens_in_text"] = r.n_summary_tokens_in_text;
    j["config_fingerprint"] = r.config_fingerprint;
    return j;
}

int cmd_score(const Options& o, const CLI::App& sub) {
    const auto cfg = measure_config(o, sub);
    const bool from_files = !o.text_file.empty() || !o.summary_file.empty();
    if (from_files == !o.dataset.empty())
        throw ConfigError("score needs either --text and --summary, or --dataset");
    if (from_files && (o.text_file.empty() || o.summary_file.empty()))
        throw ConfigError("--text and --summary must be given together");
    validate_models(cfg);

    std::vector<AnnotatedPair> pairs;
    if (from_files) {
        AnnotatedPair p;
        p.doc_id = fs::path(o.text_file).filename().string();
        p.system_id = fs::path(o.summary_file).filename().string();
        p.text = read_file(o.text_file);
        p.summary = read_file(o.summary_file);
        pairs.push_back(std::move(p));
    } else {
        pairs = load_pairs(o);
    }

    std::ofstream file;
    if (!o.out.empty()) {
        if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
        file.open(o.out);
        if (!file) throw DataError("cannot write " + o.out);
    }
    std::ostream& out = o.out.empty() ? std::cout : file;

    PairScorer scorer(cfg);
    std::size_t failed = 0;
    for (const auto& p : pairs) {
        try {
            out << result_record(p.doc_id, p.system_id, scorer.score_pair(p.text, p.summary, p.key())).dump() << "\n";
        } catch (const PairError& e) {
            ++failed;
            if (!o.keep_going) throw;
            ojson j;
            j["doc_id"] = p.doc_id;
            j["system_id"] = p.system_id;
            j["error"] = e.what();
            out << j.dump() << "\n";
            std::cerr << "error: " << e.what() << "\n";
        }
    }
    telemetry(scorer.provider(), "pairs=" + std::to_string(pairs.size()) + " failed=" + std::to_string(failed));
    return ok;
}

std::vector<CorrelationKind> parse_kinds(const std::vector<std::string>& ks) {
    std::vector<CorrelationKind> out;
    for (const auto& k : ks) {
        try {
            out.push_back(parse_correlation_kind(k));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    return out;
}

Pooling parse_pooling(const std::string& s) {
    if (s == "pooled") return Pooling::pooled;
    if (s == "per_document") return Pooling::per_document;
    throw ConfigError("--pooling must be pooled or per_document");
}

void check_qualities(const std::vector<std::string>& qs) {
    for (const auto& q : qs) {
        try {
            check_quality(q);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
}

bool negated(const Options& o, const std::string& name) {
    return std::find(o.negate.begin(), o.negate.end(), name) != o.negate.end();
}

int cmd_sweep(const Options& o, const CLI::App& sub) {
    auto cfg = measure_config(o, sub);
    if (o.dataset.empty()) throw ConfigError("sweep needs --dataset");
    std::vector<MeasureId> measures;
    try {
        for (const auto& m : o.measures.empty() ? std::vector<std::string>{"estime-soft"} : o.measures)
            measures.push_back(parse_measure_id(m));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    check_qualities(o.qualities);
    const auto kinds = parse_kinds(o.kinds);
    const auto pooling = parse_pooling(o.pooling);
    const std::string both = o.layers.empty() ? std::to_string(cfg.summary_layer) : o.layers;
    const auto s_layers = parse_layers(o.summary_layers.empty() ? both : o.summary_layers);
    const auto t_layers = parse_layers(o.text_layers.empty() ? both : o.text_layers);
    std::vector<int> all = s_layers;
    all.insert(all.end(), t_layers.begin(), t_layers.end());
    validate_models(cfg, all);

    const auto pairs = load_pairs(o);
    const auto dir = out_dir(o);
    EmbeddingProvider provider(cfg.extraction);
    SweepOptions opt;
    opt.workers = o.workers;
    if (::isatty(STDERR_FILENO))
        opt.progress = [](std::size_t done, std::size_t total) {
            std::cerr << "documents " << done << "/" << total << (done == total ? "\n" : "\r");
        };

    for (auto m : measures) {
        ScoreTable table;
        try {
            table = m == MeasureId::local_order
                        ? distance_sweep_scores(provider, pairs, s_layers, cfg.distances, opt)
                        : layer_sweep_scores(provider, pairs, m, s_layers, t_layers, 0, opt);
        } catch (const std::exception& e) {
            throw std::runtime_error(to_string(m) + ": " + e.what());
        }
        for (const auto& q : o.qualities)
            for (auto k : kinds) {
                auto grid = correlate_table(table, pairs, q, k, pooling, negated(o, to_string(m)));
                grid.measure = to_string(m);
                if (m == MeasureId::local_order) {
                    grid.row_axis = "layer";
                    grid.col_axis = "d";
                }
                const auto path = dir / ("sweep_" + to_string(m) + "_" + q + "_" + to_string(k) + ".csv");
                {
                    std::ofstream f(path);
                    write_grid_csv(f, grid);
                }
                if (o.emit_images) heatmap::render(path);
                std::cout << path.string() << "\n";
            }
    }
    telemetry(provider, "pairs=" + std::to_string(pairs.size()));
    return ok;
}

int cmd_probe(const Options& o, const CLI::App& sub) {
    const auto cfg = measure_config(o, sub);
    if (o.dataset.empty() == o.inputs.empty()) throw ConfigError("probe needs either --dataset or --input files");
    if (o.role != "text" && o.role != "summary" && o.role != "both") throw ConfigError("--role must be text, summary or both");
    if (o.max_tokens < 2) throw ConfigError("--max-tokens must be at least 2");
    validate_models(cfg, std::vector<int>{});

    std::vector<std::string> texts, summaries;
    if (!o.inputs.empty()) {
        for (const auto& f : o.inputs) texts.push_back(read_file(f));
    } else {
        std::set<std::string> seen;
        for (const auto& p : load_pairs(o)) {
            if (seen.insert(p.doc_id).second) texts.push_back(p.text);
            summaries.push_back(p.summary);
        }
    }
    const auto dir = out_dir(o);
    EmbeddingProvider provider(cfg.extraction);
    std::vector<std::pair<DocRole, const std::vector<std::string>*>> roles;
    if (o.role != "summary") roles.push_back({DocRole::text, &texts});
    if (o.role != "text" && !summaries.empty()) roles.push_back({DocRole::summary, &summaries});
    if (roles.empty()) throw ConfigError("--role summary needs a dataset");

    std::vector<fs::path> written;
    for (const auto& [role, docs] : roles) {
        std::vector<LayerEmbeddingSet> sets;
        for (const auto& d : *docs) sets.push_back(provider.embed(d).layers);
        for (auto cls : {TokenClass::cls, TokenClass::regular}) {
            for (const auto& p : {norm_profile(sets, cls, role), increment_norm_profile(sets, cls, role),
                                  neighbor_cosine_profile(sets, cls, role)}) {
                const auto path = dir / ("probe_" + p.statistic + "_" + to_string(cls) + "_" + to_string(role) + ".csv");
                std::ofstream f(path);
                write_profile_csv(f, p, cfg.extraction.model_id);
                written.push_back(path);
            }
        }
        HistogramOptions h;
        h.seed = o.seed;
        h.max_tokens_per_document = o.max_tokens;
        h.workers = o.workers;
        const auto path = dir / ("probe_pairwise_cosine_" + to_string(role) + ".csv");
        std::ofstream f(path);
        write_histogram_csv(f, pairwise_cosine_histogram(sets, h), cfg.extraction.model_id, role);
        written.push_back(path);
    }
    for (const auto& p : written) {
        if (o.emit_images) heatmap::render(p);
        std::cout << p.string() << "\n";
    }
    telemetry(provider);
    return ok;
}

// Reads `score` output records into named per-pair columns.
std::map<std::string, std::map<std::string, double>> read_result_columns(const std::string& path) {
    std::map<std::string, std::map<std::string, double>> cols;
    std::ifstream in(path);
    if (!in) throw DataError("cannot read results " + path);
    std::string line;
    std::size_t n = 0;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            const auto r = nlohmann::json::parse(line);
            const auto key = r.at("doc_id").get<std::string>() + "/" + r.at("system_id").get<std::string>();
            if (r.contains("error")) continue;
            cols["estime"][key] = r.at("estime_alarms").get<double>();
            cols["estime-soft"][key] = r.at("estime_soft").get<double>();
            cols["order"][key] = r.at("order_coherence").is_null() ? nan : r["order_coherence"].get<double>();
            for (const auto& [d, v] : r.at("local_order").items())
                cols["local-order@" + d][key] = v.is_null() ? nan : v.get<double>();
        } catch (const std::exception& e) {
            throw DataError(path + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return cols;
}

int cmd_correlate(const Options& o, const CLI::App& sub) {
    auto cfg = measure_config(o, sub);
    if (o.dataset.empty()) throw ConfigError("correlate needs --dataset");
    check_qualities(o.qualities);
    const auto kinds = parse_kinds(o.kinds);
    const auto pooling = parse_pooling(o.pooling);
    std::vector<MeasureId> computed;
    try {
        const bool have_inputs = !o.results.empty() || !o.external.empty();
        const auto names = o.measures.empty() && !have_inputs ? std::vector<std::string>{"estime", "estime-soft", "order"}
                                                              : o.measures;
        for (const auto& m : names) computed.push_back(parse_measure_id(m));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (!computed.empty()) validate_models(cfg);

    const auto pairs = load_pairs(o);
    std::vector<std::pair<std::string, std::vector<double>>> columns;
    auto column_from = [&](const std::string& name, const std::map<std::string, double>& by_key) {
        ExternalScores s{name, by_key};
        columns.emplace_back(name, s.for_pairs(pairs));
    };
    for (const auto& r : o.results)
        for (const auto& [name, by_key] : read_result_columns(r)) column_from(name, by_key);
    for (const auto& e : o.external) {
        const auto s = import_external_scores(e);
        columns.emplace_back(s.name, s.for_pairs(pairs));
    }
    std::optional<PairScorer> scorer;
    if (!computed.empty()) {
        scorer.emplace(cfg);
        std::vector<std::vector<double>> cols(computed.size());
        for (const auto& p : pairs) {
            const auto r = scorer->score_pair(p.text, p.summary, p.key());
            for (std::size_t m = 0; m < computed.size(); ++m)
                cols[m].push_back(computed[m] == MeasureId::local_order
                                      ? measure_value(r, computed[m], cfg.distances.front())
                                      : measure_value(r, computed[m]));
        }
        for (std::size_t m = 0; m < computed.size(); ++m) {
            auto name = to_string(computed[m]);
            if (computed[m] == MeasureId::local_order) name += "@" + std::to_string(cfg.distances.front());
            columns.emplace_back(name, std::move(cols[m]));
        }
    }
    if (columns.empty()) throw ConfigError("nothing to correlate");

    const auto dir = out_dir(o);
    std::ofstream csv(dir / "correlations.csv");
    csv << "measure,quality,kind,pooling,negated,value,n_pairs\n";
    csv.precision(10);
    ojson report;
    report["dataset"] = o.dataset;
    report["pairs"] = pairs.size();
    report["pooling"] = to_string(pooling);
    report["config"] = cfg.to_string();
    report["results"] = ojson::array();
    for (const auto& [name, col] : columns) {
        const std::string base = name.substr(0, name.find('@'));
        const bool neg = negated(o, base) || negated(o, name);
        for (const auto& q : o.qualities)
            for (auto k : kinds) {
                const auto c = correlate_measure(col, pairs, q, k, pooling, neg);
                std::size_t n = 0;
                for (double v : col) n += !std::isnan(v);
                csv << name << "," << q << "," << to_string(k) << "," << to_string(pooling) << "," << (neg ? 1 : 0)
                    << ",";
                if (c.defined()) csv << *c;
                csv << "," << n << "\n";
                ojson r;
                r["measure"] = name;
                r["quality"] = q;
                r["kind"] = to_string(k);
                r["negated"] = neg;
                r["value"] = optional_json(c.value);
                if (!c.defined()) r["undefined_reason"] = c.undefined_reason;
                r["n_pairs"] = n;
                report["results"].push_back(r);
            }
    }
    std::ofstream(dir / "report.json") << report.dump(1) << "\n";
    std::cout << (dir / "correlations.csv").string() << "\n" << (dir / "report.json").string() << "\n";
    if (scorer) telemetry(scorer->provider(), "pairs=" + std::to_string(pairs.size()));
    return ok;
}

void add_model_flags(CLI::App& app, Options& o) {
    app.add_option("--config", o.config_file, "key = value configuration file");
    app.add_option("--model", o.model, "similarity model id or directory");
    app.add_option("--raw-model", o.raw_model, "raw-embedding model id or directory");
    app.add_option("--window-len", o.window_len, "tokens per masked window");
    app.add_option("--stride", o.stride, "window stride");
    app.add_option("--min-gap", o.min_gap, "minimum distance between simultaneously masked tokens");
    app.add_option("--cache-dir", o.cache_dir, "embedding cache root (default $ESTIMEKIT_CACHE_DIR or ./cache)");
    app.add_flag("--no-cache", o.no_cache, "do not read or write the embedding cache");
    app.add_option("--workers", o.workers, "worker threads (0 = all cores)");
    app.add_option("--out", o.out, "output file (score) or directory");
}

void add_dataset_flags(CLI::App& app, Options& o) {
    app.add_option("--dataset", o.dataset, "annotated dataset (line-delimited JSON)");
    app.add_option("--format", o.format, "dataset format: native or summeval");
    app.add_option("--texts", o.texts, "line-delimited {id, text} records joined to the dataset");
    app.add_option("--docs", o.docs, "use a seeded subsample of N documents");
    app.add_option("--seed", o.seed, "seed for subsampling and histogram sampling");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Summary consistency and order measures from masked contextual embeddings"};
    app.require_subcommand(1);
    Options o;

    auto* score = app.add_subcommand("score", "score text/summary pairs");
    add_model_flags(*score, o);
    add_dataset_flags(*score, o);
    score->add_option("--text", o.text_file, "text file");
    score->add_option("--summary", o.summary_file, "summary file");
    score->add_option("--summary-layer", o.summary_layer, "layer of summary embeddings");
    score->add_option("--text-layer", o.text_layer, "layer of text embeddings");
    score->add_option("--d-list", o.d_list, "local-order distances, e.g. 1..15,20");
    score->add_flag("--keep-going", o.keep_going, "record failing pairs and continue");

    auto* sweep = app.add_subcommand("sweep", "correlation grids over layers or distances");
    add_model_flags(*sweep, o);
    add_dataset_flags(*sweep, o);
    sweep->add_option("--layers", o.layers, "layers for both axes, e.g. 0..24");
    sweep->add_option("--summary-layers", o.summary_layers, "summary-side layers (rows)");
    sweep->add_option("--text-layers", o.text_layers, "text-side layers (columns)");
    sweep->add_option("--summary-layer", o.summary_layer, "single layer when --layers is absent");
    sweep->add_option("--d-list", o.d_list, "distances for local-order");
    sweep->add_option("--measure", o.measures, "estime, estime-soft, order, local-order")->delimiter(',');
    sweep->add_option("--quality", o.qualities, "qualities to correlate with")->delimiter(',');
    sweep->add_option("--kind", o.kinds, "tau_c and/or spearman")->delimiter(',');
    sweep->add_option("--pooling", o.pooling, "pooled or per_document");
    sweep->add_option("--negate", o.negate, "measures negated before correlating")->delimiter(',');
    sweep->add_flag("--emit-images", o.emit_images, "render each CSV as a PPM heatmap");

    auto* probe = app.add_subcommand("probe", "layer-wise norms, increments, cosines and histograms");
    add_model_flags(*probe, o);
    add_dataset_flags(*probe, o);
    probe->add_option("--input", o.inputs, "plain-text documents (text role)");
    probe->add_option("--role", o.role, "text, summary or both");
    probe->add_option("--max-tokens", o.max_tokens, "histogram token sample cap per document");
    probe->add_flag("--emit-images", o.emit_images, "render each CSV as a PPM image");

    auto* corr = app.add_subcommand("correlate", "correlation table of measures against expert scores");
    add_model_flags(*corr, o);
    add_dataset_flags(*corr, o);
    corr->add_option("--summary-layer", o.summary_layer, "layer of summary embeddings");
    corr->add_option("--text-layer", o.text_layer, "layer of text embeddings");
    corr->add_option("--d-list", o.d_list, "local-order distance (first value used)");
    corr->add_option("--measure", o.measures, "measures to compute")->delimiter(',');
    corr->add_option("--results", o.results, "score output records to correlate");
    corr->add_option("--external", o.external, "CSV columns doc_id,system_id,<name>");
    corr->add_option("--quality", o.qualities, "qualities")->delimiter(',');
    corr->add_option("--kind", o.kinds, "tau_c and/or spearman")->delimiter(',');
    corr->add_option("--pooling", o.pooling, "pooled or per_document");
    corr->add_option("--negate", o.negate, "measures negated before correlating")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return config_error;
    }

    try {
        if (*score) return cmd_score(o, *score);
        if (*sweep) return cmd_sweep(o, *sweep);
        if (*probe) return cmd_probe(o, *probe);
        if (*corr) return cmd_correlate(o, *corr);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return config_error;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return data_error;
    } catch (const std::exception& e) {
        std::cerr << "compute error: " << e.what() << "\n";
        return compute_error;
    }
    return ok;
}
