#include "gramnet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <random>

#include "gramnet/gaf.hpp"

namespace gramnet::train {

Optimizer optimizer_from_name(const std::string& name) {
    if (name == "sgd") return Optimizer::sgd;
    if (name == "sgd_momentum") return Optimizer::sgd_momentum;
    if (name == "adam") return Optimizer::adam;
    throw ConfigError("unknown optimizer '" + name + "'");
}

std::string optimizer_name(Optimizer o) {
    switch (o) {
        case Optimizer::sgd: return "sgd";
        case Optimizer::sgd_momentum: return "sgd_momentum";
        case Optimizer::adam: return "adam";
    }
    return "adam";
}

Variant variant_from_name(const std::string& name) {
    if (name == "full") return Variant::full;
    if (name == "no_gaf") return Variant::no_gaf;
    if (name == "no_cot") return Variant::no_cot;
    if (name == "no_ru") return Variant::no_ru;
    throw ConfigError("unknown variant '" + name + "'");
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_gaf: return "no_gaf";
        case Variant::no_cot: return "no_cot";
        case Variant::no_ru: return "no_ru";
    }
    return "full";
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
}

// ---------------------------------------------------------------------------
// Variant topology
// ---------------------------------------------------------------------------

nn::ModelConfig resolve_variant(const nn::ModelConfig& base, Variant variant) {
    switch (variant) {
        case Variant::full:
        case Variant::no_gaf:
            return base; // no_gaf changes the encoding, not the network
        case Variant::no_ru: {
            nn::ModelConfig cfg = base;
            cfg.num_res_units = 0;
            return cfg;
        }
        case Variant::no_cot: {
            // Drop the attention path and widen the residual path so the
            // parameter count stays close to the full model's.
            const std::size_t target = nn::ModelT<float>(base).parameter_count();
            nn::ModelConfig best;
            long long best_gap = std::numeric_limits<long long>::max();
            for (int w = base.stem_channels; w <= 4 * base.stem_channels; ++w) {
                nn::ModelConfig cfg = base;
                cfg.num_cot_layers = 0;
                cfg.local_width = w;
                if (cfg.num_res_units == 0) return cfg;
                const auto count = nn::ModelT<float>(cfg).parameter_count();
                const long long gap = std::llabs(static_cast<long long>(count) -
                                                 static_cast<long long>(target));
                if (gap < best_gap) {
                    best_gap = gap;
                    best = cfg;
                }
            }
            return best;
        }
    }
    return base;
}

// ---------------------------------------------------------------------------
// Optimizer state
// ---------------------------------------------------------------------------

namespace {

struct OptimizerState {
    std::vector<std::vector<float>> m1; // momentum / first moment
    std::vector<std::vector<float>> m2; // second moment (adam)
    long long step = 0;
};

void apply_update(nn::ModelT<float>& model, nn::ModelT<float>& grads, double batch_scale,
                  const TrainConfig& cfg, OptimizerState& state) {
    auto params = model.named_params();
    auto gparams = grads.named_params();
    if (state.m1.empty()) {
        state.m1.resize(params.size());
        state.m2.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m1[i].assign(params[i].second->size(), 0.0f);
            state.m2[i].assign(params[i].second->size(), 0.0f);
        }
    }
    ++state.step;
    const float lr = static_cast<float>(cfg.learning_rate);
    const float scale = static_cast<float>(batch_scale);

    switch (cfg.optimizer) {
        case Optimizer::sgd: {
            for (std::size_t i = 0; i < params.size(); ++i) {
                auto& p = params[i].second->v;
                const auto& g = gparams[i].second->v;
                for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j] * scale;
            }
            break;
        }
        case Optimizer::sgd_momentum: {
            const float mu = static_cast<float>(cfg.momentum);
            for (std::size_t i = 0; i < params.size(); ++i) {
                auto& p = params[i].second->v;
                const auto& g = gparams[i].second->v;
                auto& m = state.m1[i];
                for (std::size_t j = 0; j < p.size(); ++j) {
                    m[j] = mu * m[j] + g[j] * scale;
                    p[j] -= lr * m[j];
                }
            }
            break;
        }
        case Optimizer::adam: {
            const float b1 = static_cast<float>(cfg.beta1);
            const float b2 = static_cast<float>(cfg.beta2);
            const float eps = static_cast<float>(cfg.adam_eps);
            const float corr1 = 1.0f - std::pow(b1, static_cast<float>(state.step));
            const float corr2 = 1.0f - std::pow(b2, static_cast<float>(state.step));
            for (std::size_t i = 0; i < params.size(); ++i) {
                auto& p = params[i].second->v;
                const auto& g = gparams[i].second->v;
                auto& m = state.m1[i];
                auto& v = state.m2[i];
                for (std::size_t j = 0; j < p.size(); ++j) {
                    const float gj = g[j] * scale;
                    m[j] = b1 * m[j] + (1.0f - b1) * gj;
                    v[j] = b2 * v[j] + (1.0f - b2) * gj * gj;
                    const float mhat = m[j] / corr1;
                    const float vhat = v[j] / corr2;
                    p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
                }
            }
            break;
        }
    }
}

nn::TensorT<float> assemble_batch(const Dataset& set, const std::vector<std::size_t>& order,
                                  std::size_t begin, std::size_t end, std::vector<int>& labels) {
    const int n = set.n;
    nn::TensorT<float> batch(static_cast<int>(end - begin), n, n, 1);
    labels.resize(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        const Sample& s = set.samples[order[i]];
        std::copy(s.image.begin(), s.image.end(),
                  batch.v.begin() + (i - begin) * s.image.size());
        labels[i - begin] = s.label;
    }
    return batch;
}

} // namespace

// ---------------------------------------------------------------------------
// Train / evaluate
// ---------------------------------------------------------------------------

eval::Metrics evaluate(const nn::ModelT<float>& model, const Dataset& test_set) {
    if (test_set.empty()) throw ConfigError("evaluation set is empty");
    const int k = model.cfg.num_classes;
    std::vector<std::vector<std::int64_t>> confusion(k, std::vector<std::int64_t>(k, 0));

    constexpr std::size_t kChunk = 64;
    std::vector<int> labels;
    std::vector<std::size_t> order(test_set.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t begin = 0; begin < order.size(); begin += kChunk) {
        const std::size_t end = std::min(begin + kChunk, order.size());
        const auto batch = assemble_batch(test_set, order, begin, end, labels);
        const auto logits = nn::forward(model, batch);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const float* row = logits.data() + i * k;
            const int pred = static_cast<int>(std::max_element(row, row + k) - row);
            confusion[labels[i]][pred] += 1;
        }
    }
    return eval::compute_metrics(confusion);
}

TrainResult train(const nn::ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const Dataset& train_set, const Dataset& test_set) {
    train_cfg.validate();
    if (train_set.empty()) throw ConfigError("training set is empty");

    nn::ModelConfig cfg = model_cfg;
    cfg.height = train_set.n;
    cfg.width = train_set.n;
    nn::ModelT<float> model(cfg);
    nn::ModelT<float> grads = model.like_zeros();
    OptimizerState opt;
    TrainHistory history;

    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(train_cfg.seed);
    std::vector<std::size_t> order(train_set.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<int> labels;

    for (int epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        long long correct = 0, seen = 0;

        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(train_cfg.batch_size)) {
            const std::size_t end =
                std::min(begin + static_cast<std::size_t>(train_cfg.batch_size), order.size());
            const auto batch = assemble_batch(train_set, order, begin, end, labels);
            const auto stats = nn::forward_backward(model, batch, labels, grads);
            loss_sum += stats.loss_sum;
            correct += stats.correct;
            seen += stats.count;
            if (!std::isfinite(stats.loss_sum)) {
                history.wall_seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                throw DivergenceError(history);
            }
            apply_update(model, grads, 1.0 / static_cast<double>(stats.count), train_cfg, opt);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(seen);
        rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
        rec.test_accuracy =
            test_set.empty() ? 0.0 : evaluate(model, test_set).accuracy;
        history.epochs.push_back(rec);
    }
    history.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return TrainResult{std::move(model), std::move(history)};
}

// ---------------------------------------------------------------------------
// Encoding instances into datasets
// ---------------------------------------------------------------------------

Dataset encode_dataset(const std::vector<data::SignalInstance>& instances, int paa_target,
                       Variant variant, std::size_t* skipped) {
    const auto mode =
        (variant == Variant::no_gaf) ? gaf::EncodeMode::row_tile : gaf::EncodeMode::gasf;
    auto encoded = gaf::encode_batch(instances, paa_target, mode);
    if (skipped) *skipped = encoded.skipped;

    Dataset out;
    out.n = paa_target;
    out.samples.resize(encoded.images.size());
    for (std::size_t i = 0; i < encoded.images.size(); ++i) {
        Sample& s = out.samples[i];
        s.label = encoded.labels[i];
        s.image.resize(encoded.images[i].data.size());
        for (std::size_t j = 0; j < s.image.size(); ++j) {
            s.image[j] = static_cast<float>(encoded.images[i].data[j]);
        }
    }
    return out;
}

AblationReport ablate(const nn::ModelConfig& base_model_cfg, const TrainConfig& base_train_cfg,
                      const std::vector<data::SignalInstance>& train_instances,
                      const std::vector<data::SignalInstance>& test_instances, int paa_target) {
    constexpr Variant kOrder[4] = {Variant::full, Variant::no_gaf, Variant::no_cot,
                                   Variant::no_ru};
    AblationReport report;
    for (Variant v : kOrder) {
        TrainConfig tc = base_train_cfg;
        tc.variant = v;
        const Dataset train_set = encode_dataset(train_instances, paa_target, v);
        const Dataset test_set = encode_dataset(test_instances, paa_target, v);
        const nn::ModelConfig cfg = resolve_variant(base_model_cfg, v);
        TrainResult result = train(cfg, tc, train_set, test_set);
        AblationRow row;
        row.variant = v;
        row.metrics = evaluate(result.model, test_set);
        row.history = std::move(result.history);
        report.rows.push_back(std::move(row));
    }
    return report;
}

} // namespace gramnet::train
