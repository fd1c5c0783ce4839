#pragma once

#include <cstdint>
#include <vector>

namespace gramnet::eval {

// Confusion rows are true classes, columns predictions. Macro metrics are
// unweighted means over per-class values; a class with zero predicted
// positives contributes precision 0, and 0/0 in F1 resolves to 0.
struct Metrics {
    std::vector<std::vector<std::int64_t>> confusion;
    double accuracy = 0;
    double macro_recall = 0;
    double macro_precision = 0;
    double macro_f1 = 0;
};

// Pure; throws EmptyConfusionError when the matrix sums to zero and
// ConfigError on negative entries or a ragged matrix.
Metrics compute_metrics(const std::vector<std::vector<std::int64_t>>& confusion);

} // namespace gramnet::eval
