#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "estimekit/hashing.hpp"
#include "estimekit/tokenizer.hpp"

namespace estimekit {

/// One model window over the regular tokens [begin, end). The model input is
/// CLS + those tokens + SEP. `owned` lists the regular indices whose
/// embeddings are taken from this window; `passes` partitions them into
/// sets masked together in one forward run.
struct MaskingWindow {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::vector<std::size_t> owned;
    std::vector<std::vector<std::size_t>> passes;
    bool owns_cls = false;
    bool owns_sep = false;
};

struct MaskingPlan {
    std::vector<MaskingWindow> windows;
    std::size_t num_regular = 0;
    int window_len = 512;
    int stride = 256;
    int min_gap = 8;

    std::string fingerprint() const {
        return fingerprint_of("mask-plan:" + std::to_string(window_len) + ":" + std::to_string(stride) + ":" +
                              std::to_string(min_gap));
    }

    std::size_t num_passes() const {
        std::size_t n = 0;
        for (const auto& w : windows) n += w.passes.size();
        return n;
    }
};

/// Splits the regular tokens of `seq` into overlapping windows of at most
/// window_len - 2 tokens (room for CLS/SEP) starting every `stride` tokens,
/// assigns each token to the window where it is most central (earlier window
/// on ties), and groups every window's owned tokens into masking passes.
///
/// Pass r masks owned tokens whose offset is congruent to r modulo min_gap,
/// so simultaneous masks are at least min_gap apart. min_gap == 1 masks one
/// token per pass.
inline MaskingPlan plan_masked_passes(const TokenSequence& seq, int window_len, int stride, int min_gap) {
    if (window_len < 3) throw std::invalid_argument("window_len must leave room for CLS, SEP and a token");
    const int span = window_len - 2;
    if (min_gap < 1 || min_gap > window_len) throw std::invalid_argument("min_gap must be in [1, window_len]");
    if (stride < 1 || stride > span) throw std::invalid_argument("stride must be in [1, window_len - 2]");

    MaskingPlan plan;
    plan.window_len = window_len;
    plan.stride = stride;
    plan.min_gap = min_gap;
    const std::size_t n = seq.regular_positions().size();
    plan.num_regular = n;
    const auto s = static_cast<std::size_t>(span);

    std::vector<std::size_t> starts;
    if (n <= s) {
        starts.push_back(0);
    } else {
        for (std::size_t b = 0; b + s < n; b += static_cast<std::size_t>(stride)) starts.push_back(b);
        if (starts.back() + s < n) starts.push_back(n - s);
    }
    for (auto b : starts) {
        MaskingWindow w;
        w.begin = b;
        w.end = std::min(n, b + s);
        plan.windows.push_back(std::move(w));
    }

    for (std::size_t p = 0; p < n; ++p) {
        std::size_t best = 0;
        long best_c = -1;
        for (std::size_t k = 0; k < plan.windows.size(); ++k) {
            const auto& w = plan.windows[k];
            if (p < w.begin || p >= w.end) continue;
            const long c = static_cast<long>(std::min(p - w.begin, w.end - 1 - p));
            if (c > best_c) {
                best_c = c;
                best = k;
            }
        }
        plan.windows[best].owned.push_back(p);
    }
    plan.windows.front().owns_cls = true;
    plan.windows.back().owns_sep = true;

    for (auto& w : plan.windows) {
        if (w.owned.empty()) continue;
        if (min_gap == 1) {
            for (auto p : w.owned) w.passes.push_back({p});
            continue;
        }
        const auto g = static_cast<std::size_t>(min_gap);
        const std::size_t first = w.owned.front();
        w.passes.resize(std::min(g, w.owned.size()));
        for (auto p : w.owned) w.passes[(p - first) % g].push_back(p);
    }
    return plan;
}

} // namespace estimekit
