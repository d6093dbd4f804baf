// The model-free building blocks: rank statistics on a toy grading and an
// alignment of two small embedding sets.

#include <iostream>
#include <vector>

#include "estimekit/measures.hpp"

int main() {
    using namespace estimekit;

    const std::vector<double> metric{0.1, 0.4, 0.35, 0.8, 0.8, 0.6};
    const std::vector<double> grade{1.0, 2.0, 2.0, 4.0, 5.0, 3.0};
    std::cout << "tau_c    " << *kendall_tau_c(metric, grade) << "\n"
              << "spearman " << *spearman_rho(metric, grade) << "\n"
              << "local@1  " << *kendall_tau_local(metric, grade, 1) << "\n";

    // three summary tokens against four text tokens in 2-d
    RowMatrix summary(3, 2), text(4, 2);
    summary << 1, 0, 0, 1, 1, 1;
    text << 0.9, 0.1, 0.2, 0.2, 0.1, 1.2, 0.7, 0.7;
    const Alignment a = align_rows(summary, text);
    std::cout << "points of similarity";
    for (auto t : a.target_index) std::cout << " " << t;
    std::cout << "\norder    " << *order_coherence(a) << "\n";
}
