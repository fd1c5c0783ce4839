#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gramnet/dataset.hpp"
#include "gramnet/error.hpp"
#include "gramnet/metrics.hpp"
#include "gramnet/nn.hpp"

namespace gramnet::train {

enum class Optimizer { sgd, sgd_momentum, adam };
enum class Variant { full, no_gaf, no_cot, no_ru };

Optimizer optimizer_from_name(const std::string& name); // throws ConfigError
std::string optimizer_name(Optimizer o);
Variant variant_from_name(const std::string& name);     // throws ConfigError
std::string variant_name(Variant v);

struct TrainConfig {
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 1e-3;
    Optimizer optimizer = Optimizer::adam;
    double momentum = 0.9;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    std::uint64_t seed = 1;
    Variant variant = Variant::full;

    void validate() const; // throws ConfigError
};

struct EpochRecord {
    int epoch = 0; // 1-based
    double train_loss = 0;
    double train_accuracy = 0;
    double test_accuracy = 0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    double wall_seconds = 0;
};

// In-memory training set: n x n float images with class indices.
struct Sample {
    std::vector<float> image; // n*n row-major
    int label = 0;
};

struct Dataset {
    int n = 0;
    std::vector<Sample> samples;
    bool empty() const { return samples.empty(); }
};

// Train loss went NaN/Inf; carries the history up to the aborted epoch.
struct DivergenceError : Error {
    explicit DivergenceError(TrainHistory partial_history)
        : Error(ErrorFamily::divergence, "training loss is not finite"),
          partial(std::move(partial_history)) {}
    TrainHistory partial;
};

struct TrainResult {
    nn::ModelT<float> model;
    TrainHistory history;
};

// Applies the variant's topology edits to a base configuration. no_cot
// removes the attention path and widens the residual path to the integer
// width whose parameter count lands closest to the full model's.
nn::ModelConfig resolve_variant(const nn::ModelConfig& base, Variant variant);

// Seeded shuffle each epoch, mini-batch steps, test evaluation per epoch.
// Deterministic for a fixed seed; OpenMP kernels partition work so the
// thread count does not change results.
TrainResult train(const nn::ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const Dataset& train_set, const Dataset& test_set);

eval::Metrics evaluate(const nn::ModelT<float>& model, const Dataset& test_set);

// Builds Datasets from windowed instances: PAA -> scale -> GASF (or the
// variant's row-tiled rendering for no_gaf).
Dataset encode_dataset(const std::vector<data::SignalInstance>& instances, int paa_target,
                       Variant variant = Variant::full, std::size_t* skipped = nullptr);

struct AblationRow {
    Variant variant = Variant::full;
    eval::Metrics metrics;
    TrainHistory history;
};

struct AblationReport {
    std::vector<AblationRow> rows; // full, no_gaf, no_cot, no_ru
};

// Runs all four variants with the same seed and budget.
AblationReport ablate(const nn::ModelConfig& base_model_cfg, const TrainConfig& base_train_cfg,
                      const std::vector<data::SignalInstance>& train_instances,
                      const std::vector<data::SignalInstance>& test_instances, int paa_target);

} // namespace gramnet::train
