#include "gramnet/gaf.hpp"

#include <algorithm>
#include <cmath>

#include "gramnet/error.hpp"

namespace gramnet::gaf {

namespace {
constexpr double kDomainSlack = 1e-12;

double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }
} // namespace

ScaledSeries min_max_scale(std::span<const double> values) {
    if (values.empty()) throw ConfigError("cannot scale an empty window");
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi == lo) throw DegenerateRangeError();

    ScaledSeries out;
    out.values.resize(values.size());
    const double inv = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double s = ((values[i] - hi) + (values[i] - lo)) * inv;
        out.values[i] = clamp_unit(s);
    }
    return out;
}

PolarSeries to_polar(const ScaledSeries& series, int n_regularizer) {
    const int n = static_cast<int>(series.values.size());
    if (n_regularizer == 0) n_regularizer = n;
    if (n_regularizer < n) {
        throw ConfigError("n_regularizer must be >= series length");
    }
    PolarSeries out;
    out.n_regularizer = n_regularizer;
    out.angles.resize(n);
    out.radii.resize(n);
    for (int i = 0; i < n; ++i) {
        out.angles[i] = std::acos(clamp_unit(series.values[i]));
        out.radii[i] = static_cast<double>(i + 1) / n_regularizer; // 1-based timestamps
    }
    return out;
}

double penalized_inner(double x, double y) {
    if (std::abs(x) > 1.0 + kDomainSlack) throw DomainError(x);
    if (std::abs(y) > 1.0 + kDomainSlack) throw DomainError(y);
    x = clamp_unit(x);
    y = clamp_unit(y);
    return x * y - std::sqrt(1.0 - x * x) * std::sqrt(1.0 - y * y);
}

GafImage gasf(const ScaledSeries& series) {
    const int n = static_cast<int>(series.values.size());
    if (n == 0) throw ConfigError("cannot encode an empty series");
    GafImage img(n);
    // One evaluation per unordered pair; both triangles written from it.
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            const double g = clamp_unit(penalized_inner(series.values[i], series.values[j]));
            img.at(i, j) = g;
            img.at(j, i) = g;
        }
    }
    return img;
}

std::vector<double> paa_downsample(std::span<const double> values, int target_len) {
    const std::size_t len = values.size();
    if (target_len < 1 || static_cast<std::size_t>(target_len) > len) {
        throw ConfigError("paa target must be in [1, series length]");
    }
    if (len % static_cast<std::size_t>(target_len) != 0) {
        throw IndivisibleLengthError(len, target_len);
    }
    const std::size_t block = len / target_len;
    std::vector<double> out(target_len);
    for (int k = 0; k < target_len; ++k) {
        double sum = 0.0;
        for (std::size_t j = 0; j < block; ++j) sum += values[k * block + j];
        out[k] = sum / static_cast<double>(block);
    }
    return out;
}

std::vector<double> diag_reconstruct(const GafImage& image) {
    std::vector<double> out(image.n);
    for (int i = 0; i < image.n; ++i) {
        const double half = std::clamp((image.at(i, i) + 1.0) * 0.5, 0.0, 1.0);
        out[i] = std::sqrt(half);
    }
    return out;
}

GafImage row_tile(const ScaledSeries& series) {
    const int n = static_cast<int>(series.values.size());
    GafImage img(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) img.at(i, j) = series.values[j];
    }
    return img;
}

EncodeResult encode_batch(const std::vector<data::SignalInstance>& instances, int paa_target,
                          EncodeMode mode) {
    const auto count = instances.size();
    std::vector<GafImage> slots(count);
    std::vector<char> ok(count, 0);

#pragma omp parallel for schedule(dynamic)
    for (long long idx = 0; idx < static_cast<long long>(count); ++idx) {
        const auto& inst = instances[idx];
        try {
            std::vector<double> series = paa_downsample(inst.values, paa_target);
            ScaledSeries scaled = min_max_scale(series);
            slots[idx] = (mode == EncodeMode::gasf) ? gasf(scaled) : row_tile(scaled);
            ok[idx] = 1;
        } catch (const DegenerateRangeError&) {
            ok[idx] = 0; // constant window, skipped
        }
    }

    EncodeResult result;
    result.images.reserve(count);
    for (std::size_t idx = 0; idx < count; ++idx) {
        if (!ok[idx]) {
            ++result.skipped;
            continue;
        }
        result.images.push_back(std::move(slots[idx]));
        result.labels.push_back(static_cast<int>(instances[idx].label));
        result.source.push_back(idx);
    }
    return result;
}

} // namespace gramnet::gaf
