#include "gramnet/metrics.hpp"

#include "gramnet/error.hpp"

namespace gramnet::eval {

Metrics compute_metrics(const std::vector<std::vector<std::int64_t>>& confusion) {
    const std::size_t k = confusion.size();
    if (k == 0) throw EmptyConfusionError();

    std::int64_t total = 0, trace = 0;
    std::vector<std::int64_t> row_sum(k, 0), col_sum(k, 0);
    for (std::size_t i = 0; i < k; ++i) {
        if (confusion[i].size() != k) throw ConfigError("confusion matrix must be square");
        for (std::size_t j = 0; j < k; ++j) {
            const std::int64_t v = confusion[i][j];
            if (v < 0) throw ConfigError("confusion matrix entries must be non-negative");
            total += v;
            row_sum[i] += v;
            col_sum[j] += v;
            if (i == j) trace += v;
        }
    }
    if (total == 0) throw EmptyConfusionError();

    Metrics m;
    m.confusion = confusion;
    m.accuracy = static_cast<double>(trace) / static_cast<double>(total);

    double recall_sum = 0, precision_sum = 0, f1_sum = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double tp = static_cast<double>(confusion[i][i]);
        // 0/0 resolves to 0 for a class never seen or never predicted.
        const double recall = row_sum[i] > 0 ? tp / static_cast<double>(row_sum[i]) : 0.0;
        const double precision = col_sum[i] > 0 ? tp / static_cast<double>(col_sum[i]) : 0.0;
        const double f1 =
            (precision + recall) > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        recall_sum += recall;
        precision_sum += precision;
        f1_sum += f1;
    }
    m.macro_recall = recall_sum / static_cast<double>(k);
    m.macro_precision = precision_sum / static_cast<double>(k);
    m.macro_f1 = f1_sum / static_cast<double>(k);
    return m;
}

} // namespace gramnet::eval
