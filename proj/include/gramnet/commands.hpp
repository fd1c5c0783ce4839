#pragma once

#include <filesystem>
#include <string>

#include "gramnet/config.hpp"
#include "gramnet/metrics.hpp"
#include "gramnet/train.hpp"

namespace gramnet::cmd {

struct EncodeSummary {
    // [partition][class] instance counts; 0 = train, 1 = test
    std::array<std::array<std::size_t, data::kNumClasses>, 2> counts{};
    std::size_t skipped = 0;
    std::filesystem::path train_archive, test_archive;
};

// Loads (or synthesizes) records, splits, windows, encodes GASF images and
// writes train.gaf/test.gaf plus a summary under cfg.output_dir.
EncodeSummary cmd_encode(const RunConfig& cfg);

struct TrainOutput {
    std::filesystem::path checkpoint, history;
    train::TrainHistory train_history;
    eval::Metrics final_metrics;
};

// Trains per config; builds archives on demand when a data source is
// configured. Writes checkpoint.bin and history.json.
TrainOutput cmd_train(const RunConfig& cfg);

// Evaluates a checkpoint against an archive; writes metrics.json and prints
// the metric table. Throws IncompatibleCheckpointError on size mismatch.
eval::Metrics cmd_eval(const std::filesystem::path& checkpoint,
                       const std::filesystem::path& archive,
                       const std::filesystem::path& output_dir);

// Runs the four-variant comparison; writes ablation.json and ablation.txt.
train::AblationReport cmd_ablate(const RunConfig& cfg);

struct RenderOptions {
    std::filesystem::path archive;      // either archive ...
    std::filesystem::path record;       // ... or a raw record file
    char record_label = 'Z';
    int limit = 16;                     // archive images to render; 0 = all
    bool diverging = false;             // diverging palette instead of grayscale
    int window_len = 512, stride = 64, paa_target = 64; // record mode
    std::filesystem::path output_dir = "render";
};

// One PNG per image, 1:1 pixels, filename carrying provenance and label.
// Returns the number of files written.
std::size_t cmd_render(const RenderOptions& opts);

// Shared helper: writes the resolved config listing next to the outputs.
void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& output_dir);

} // namespace gramnet::cmd
