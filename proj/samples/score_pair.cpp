// Scores one summary against its source text and prints the four measures.
//
//   score_pair <text-file> <summary-file> [similarity-model] [raw-model] [layer]
//
// Models are directories (config.json, vocab.txt, model.safetensors) or
// names under $ESTIMEKIT_MODEL_DIR.

#include <fstream>
#include <iostream>
#include <sstream>

#include "estimekit/measures.hpp"

namespace {

std::string slurp(const char* path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(std::string("cannot read ") + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::cerr << "usage: score_pair <text-file> <summary-file> [similarity-model] [raw-model] [layer]\n";
        return 1;
    }
    estimekit::MeasureConfig cfg;
    if (argc > 3) cfg.extraction.model_id = argv[3];
    if (argc > 4) cfg.extraction.raw_model_id = argv[4];
    if (argc > 5) cfg.summary_layer = cfg.text_layer = std::stoi(argv[5]);
    cfg.distances = {1, 5, 10};
    try {
        estimekit::PairScorer scorer(cfg);
        const auto r = scorer.score_pair(slurp(argv[1]), slurp(argv[2]));
        std::cout << "layers          " << cfg.summary_layer << "/" << cfg.text_layer << "\n"
                  << "summary tokens  " << r.n_summary_tokens << " (" << r.n_summary_tokens_in_text << " in text)\n"
                  << "estime alarms   " << r.estime_alarms << "\n"
                  << "estime-soft     " << r.estime_soft << "\n"
                  << "order           " << (r.order_coherence ? std::to_string(*r.order_coherence) : "undefined") << "\n";
        for (const auto& [d, v] : r.local_order)
            std::cout << "local-order@" << d << (d < 10 ? "   " : "  ") << (v ? std::to_string(*v) : "undefined") << "\n";
    } catch (const std::exception& e) {
        std::cerr << "score_pair: " << e.what() << "\n";
        return 2;
    }
}
