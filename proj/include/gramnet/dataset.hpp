#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace gramnet::data {

// The five recording conditions. Index values are part of the archive
// and checkpoint formats and must stay stable.
enum class ClassLabel : int { Z = 0, O = 1, N = 2, F = 3, S = 4 };

constexpr int kNumClasses = 5;
constexpr double kBonnSampleRateHz = 173.61;
constexpr std::size_t kBonnSamplesPerRecord = 4097;

char label_tag(ClassLabel label);
ClassLabel label_from_tag(char tag);          // throws ConfigError on unknown tag
ClassLabel label_from_index(int index);       // throws ConfigError outside 0..4

// One raw recording: an ASCII file of one sample per line.
struct SignalRecord {
    std::string id;                // filename stem
    ClassLabel label = ClassLabel::Z;
    std::vector<double> samples;   // microvolts, file order
    double sample_rate = kBonnSampleRateHz;

    // Conforming files carry exactly 4097 samples; shorter or longer
    // records are accepted but flagged.
    bool bonn_length() const { return samples.size() == kBonnSamplesPerRecord; }
};

// A contiguous window cut from one record.
struct SignalInstance {
    std::string record_id;
    ClassLabel label = ClassLabel::Z;
    std::size_t offset = 0;        // sample index of window start
    std::vector<double> values;    // length = window_len
};

struct SplitConfig {
    double train_fraction = 0.9;   // in (0, 1]
    std::uint64_t seed = 1;
    int window_len = 512;          // samples, >= 2
    int stride = 64;               // samples, >= 1
};

// Parses one sample-per-line ASCII. Throws MissingFileError, EmptyFileError,
// or ParseError carrying the offending line number.
SignalRecord load_record(const std::filesystem::path& path, ClassLabel label);

// Loads every file under <root>/<tag>/ for each of the five class tags.
// Files are visited in sorted name order so the record list is stable.
// A missing or empty class directory raises EmptyClassError.
std::vector<SignalRecord> load_directory(const std::filesystem::path& root);

// Cuts floor((L - window_len) / stride) + 1 windows; trailing samples that
// do not fill a window are dropped. Throws WindowTooLongError.
std::vector<SignalInstance> window_signal(const SignalRecord& record, int window_len, int stride);

// Record-level stratified split: all windows of one record land in the same
// partition, which is what keeps overlapping windows from leaking across
// the train/test boundary. Per class, round(train_fraction * N) records go
// to train after a seeded shuffle; windowing is then applied per partition.
std::pair<std::vector<SignalInstance>, std::vector<SignalInstance>>
split_dataset(const std::vector<SignalRecord>& records, const SplitConfig& cfg);

// Five synthetic classes with distinct sinusoid frequencies plus Gaussian
// noise; separable by construction. Used by tests and the --synthetic flag.
std::vector<SignalRecord> make_synthetic_records(int per_class, int length, std::uint64_t seed);

} // namespace gramnet::data
