#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "gramnet/nn.hpp"
#include "gramnet/train.hpp"

namespace gramnet {

// Flat key = value configuration with '#' comments. Command-line flags
// override file values; the fully resolved config (defaults included) is
// echoed beside every command's outputs.
struct RunConfig {
    // data
    std::string dataset_root;      // directory with Z/O/N/F/S subdirectories
    int synthetic_per_class = 0;   // records per class; > 0 replaces dataset_root
    int synthetic_len = 512;       // samples per synthetic record
    int window_len = 512;          // samples
    int stride = 64;               // samples
    int paa_target = 64;           // samples per window after PAA = image side
    int n_regularizer = 0;         // polar radii denominator; 0 = window length
    double train_fraction = 0.9;
    std::uint64_t seed = 1;

    // model
    int stem_channels = 16;
    int num_res_units = 2;
    int num_cot_layers = 1;
    int local_width = 0;
    std::vector<int> inception_widths{8, 8, 8, 8};
    int mlp_hidden = 64;
    int cot_kernel = 3;
    int cot_reduction = 4;

    // training
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 1e-3;
    std::string optimizer = "adam"; // sgd | sgd_momentum | adam
    double momentum = 0.9;
    double beta1 = 0.9, beta2 = 0.999;
    std::string variant = "full";   // full | no_gaf | no_cot | no_ru

    // execution
    int threads = 0;                // 0 = library default
    std::string output_dir = "out";

    void validate() const;          // throws ConfigError
    nn::ModelConfig model_config() const;
    train::TrainConfig train_config() const;

    std::string to_text() const;    // resolved key = value listing
    static RunConfig from_file(const std::filesystem::path& path);
    void apply(const std::map<std::string, std::string>& overrides); // throws ConfigError
};

} // namespace gramnet
