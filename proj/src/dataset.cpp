#include "gramnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>

#include "gramnet/error.hpp"

namespace fs = std::filesystem;

namespace gramnet::data {

namespace {
constexpr char kTags[kNumClasses] = {'Z', 'O', 'N', 'F', 'S'};
}

char label_tag(ClassLabel label) { return kTags[static_cast<int>(label)]; }

ClassLabel label_from_tag(char tag) {
    for (int i = 0; i < kNumClasses; ++i) {
        if (kTags[i] == tag || kTags[i] == std::toupper(static_cast<unsigned char>(tag))) {
            return static_cast<ClassLabel>(i);
        }
    }
    throw ConfigError(std::string("unknown class tag '") + tag + "' (expected Z, O, N, F or S)");
}

ClassLabel label_from_index(int index) {
    if (index < 0 || index >= kNumClasses) {
        throw ConfigError("class index " + std::to_string(index) + " outside 0..4");
    }
    return static_cast<ClassLabel>(index);
}

SignalRecord load_record(const fs::path& path, ClassLabel label) {
    std::ifstream in(path);
    if (!in) throw MissingFileError(path.string());

    SignalRecord rec;
    rec.id = path.stem().string();
    rec.label = label;

    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        // tolerate CRLF and surrounding whitespace
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
            line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue; // blank line carries no sample
        const char* begin = line.c_str() + start;
        char* end = nullptr;
        double value = std::strtod(begin, &end);
        if (end == begin || *end != '\0' || !std::isfinite(value)) {
            throw ParseError(path.string(), line_number, line.substr(start));
        }
        rec.samples.push_back(value);
    }
    if (rec.samples.empty()) throw EmptyFileError(path.string());
    return rec;
}

std::vector<SignalRecord> load_directory(const fs::path& root) {
    std::vector<SignalRecord> records;
    for (int i = 0; i < kNumClasses; ++i) {
        const ClassLabel label = static_cast<ClassLabel>(i);
        const fs::path dir = root / std::string(1, label_tag(label));
        if (!fs::is_directory(dir)) throw EmptyClassError(std::string(1, label_tag(label)));

        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file()) files.push_back(entry.path());
        }
        if (files.empty()) throw EmptyClassError(std::string(1, label_tag(label)));
        std::sort(files.begin(), files.end()); // directory iteration order is unspecified

        for (const auto& file : files) records.push_back(load_record(file, label));
    }
    return records;
}

std::vector<SignalInstance> window_signal(const SignalRecord& record, int window_len, int stride) {
    if (window_len < 1 || stride < 1) {
        throw ConfigError("window_len and stride must be positive");
    }
    const std::size_t len = record.samples.size();
    if (static_cast<std::size_t>(window_len) > len) {
        throw WindowTooLongError(window_len, len);
    }
    const std::size_t count = (len - window_len) / stride + 1;
    std::vector<SignalInstance> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        SignalInstance inst;
        inst.record_id = record.id;
        inst.label = record.label;
        inst.offset = k * stride;
        inst.values.assign(record.samples.begin() + inst.offset,
                           record.samples.begin() + inst.offset + window_len);
        out.push_back(std::move(inst));
    }
    return out;
}

std::pair<std::vector<SignalInstance>, std::vector<SignalInstance>>
split_dataset(const std::vector<SignalRecord>& records, const SplitConfig& cfg) {
    if (cfg.train_fraction <= 0.0 || cfg.train_fraction > 1.0) {
        throw ConfigError("train_fraction must be in (0, 1]");
    }
    if (cfg.window_len < 2) throw ConfigError("window_len must be >= 2");

    // Canonical per-class ordering by record id, so the split depends only
    // on the record set and the seed, not on caller ordering.
    std::array<std::vector<const SignalRecord*>, kNumClasses> per_class;
    for (const auto& rec : records) per_class[static_cast<int>(rec.label)].push_back(&rec);
    for (int i = 0; i < kNumClasses; ++i) {
        if (per_class[i].empty()) throw EmptyClassError(std::string(1, kTags[i]));
        std::sort(per_class[i].begin(), per_class[i].end(),
                  [](const SignalRecord* a, const SignalRecord* b) { return a->id < b->id; });
    }

    std::mt19937_64 rng(cfg.seed);
    std::vector<SignalInstance> train, test;
    for (int i = 0; i < kNumClasses; ++i) {
        auto& recs = per_class[i];
        std::shuffle(recs.begin(), recs.end(), rng);
        const auto n_train = static_cast<std::size_t>(
            std::llround(cfg.train_fraction * static_cast<double>(recs.size())));
        for (std::size_t r = 0; r < recs.size(); ++r) {
            auto windows = window_signal(*recs[r], cfg.window_len, cfg.stride);
            auto& dst = (r < n_train) ? train : test;
            for (auto& wnd : windows) dst.push_back(std::move(wnd));
        }
    }
    return {std::move(train), std::move(test)};
}

std::vector<SignalRecord> make_synthetic_records(int per_class, int length, std::uint64_t seed) {
    if (per_class < 1 || length < 2) {
        throw ConfigError("synthetic generator needs per_class >= 1 and length >= 2");
    }
    // Distinct cycle counts per window keep the classes apart even after
    // block-mean downsampling.
    constexpr double kCycles[kNumClasses] = {3.0, 6.0, 9.0, 12.0, 15.0};
    constexpr double kAmplitude = 100.0;
    constexpr double kNoiseSigma = 5.0;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    std::normal_distribution<double> noise(0.0, kNoiseSigma);

    std::vector<SignalRecord> records;
    records.reserve(static_cast<std::size_t>(per_class) * kNumClasses);
    for (int cls = 0; cls < kNumClasses; ++cls) {
        for (int r = 0; r < per_class; ++r) {
            SignalRecord rec;
            char idx[16];
            std::snprintf(idx, sizeof(idx), "%03d", r);
            rec.id = std::string("syn_") + kTags[cls] + "_" + idx;
            rec.label = static_cast<ClassLabel>(cls);
            const double p = phase(rng);
            const double omega = 2.0 * M_PI * kCycles[cls] / static_cast<double>(length);
            rec.samples.resize(length);
            for (int t = 0; t < length; ++t) {
                rec.samples[t] = kAmplitude * std::sin(omega * t + p) + noise(rng);
            }
            records.push_back(std::move(rec));
        }
    }
    return records;
}

} // namespace gramnet::data
