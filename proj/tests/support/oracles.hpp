#pragma once

// Brute-force reference implementations used to cross-check the library.

#include <span>
#include <vector>

namespace odca::testing {

/// Fraction of (positive, negative) pairs ranked correctly, ties one half.
inline double pairwise_auroc(std::span<const double> scores, const std::vector<bool>& labels) {
    double good = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            pairs += 1.0;
            if (scores[i] > scores[j]) good += 1.0;
            else if (scores[i] == scores[j]) good += 0.5;
        }
    }
    return good / pairs;
}

}  // namespace odca::testing
