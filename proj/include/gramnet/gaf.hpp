#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gramnet/dataset.hpp"

namespace gramnet::gaf {

// A window scaled into [-1, 1]. min maps to -1 and max to +1 exactly;
// round-off overshoot up to 1e-12 is clamped.
struct ScaledSeries {
    std::vector<double> values;
};

// Polar encoding of a scaled window: angles arccos(s') in [0, pi], radii
// t_i / N with 1-based timestamps. The radii are kept for visualization;
// the summation-field transform itself only consumes the angles.
struct PolarSeries {
    std::vector<double> angles;
    std::vector<double> radii;
    int n_regularizer = 0;
};

// Symmetric n x n matrix of pairwise penalized inner products, entries
// in [-1, 1], diagonal 2*s'^2 - 1.
struct GafImage {
    int n = 0;
    std::vector<double> data; // row-major n*n

    GafImage() = default;
    explicit GafImage(int size) : n(size), data(static_cast<std::size_t>(size) * size, 0.0) {}

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * n + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * n + j]; }
};

// s' = ((s - max) + (s - min)) / (max - min). Throws DegenerateRangeError
// when the window is constant; callers decide whether to skip the window.
ScaledSeries min_max_scale(std::span<const double> values);

// n_regularizer must be >= series length; 0 selects the series length.
PolarSeries to_polar(const ScaledSeries& series, int n_regularizer = 0);

// <x, y> = x*y - sqrt(1 - x^2) * sqrt(1 - y^2) = cos(arccos x + arccos y).
// Throws DomainError beyond |x| > 1 + 1e-12; inputs inside the tolerance
// band are clamped to +-1 before the square roots.
double penalized_inner(double x, double y);

// Gramian angular summation field. Production path is the algebraic inner
// product above (no transcendental calls); the arccos/cos construction
// lives in ref.hpp as the test oracle.
GafImage gasf(const ScaledSeries& series);

// Block-mean downsampling (piecewise aggregate approximation). Applied
// before scaling so a 512-sample window can become a 64 x 64 image.
// Series length must divide evenly; throws IndivisibleLengthError.
std::vector<double> paa_downsample(std::span<const double> values, int target_len);

// sqrt((G[i][i] + 1) / 2) per i, which recovers |s'_i|.
std::vector<double> diag_reconstruct(const GafImage& image);

// Renders the scaled window as an image of identical rows. Ablation input
// for the variant that bypasses the Gram transform.
GafImage row_tile(const ScaledSeries& series);

enum class EncodeMode { gasf, row_tile };

struct EncodeResult {
    std::vector<GafImage> images;
    std::vector<int> labels;             // class index per image
    std::vector<std::size_t> source;     // index into the input instance list
    std::size_t skipped = 0;             // constant windows dropped
};

// PAA -> scale -> transform for a batch of instances, parallel over
// instances. Output order follows input order regardless of thread count.
EncodeResult encode_batch(const std::vector<data::SignalInstance>& instances,
                          int paa_target, EncodeMode mode = EncodeMode::gasf);

} // namespace gramnet::gaf
