#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ucp/tensor.hpp"

namespace ucp {

/// In-memory labelled image set, NCHW float32, already normalized.
struct Dataset {
  int channels = 0;
  int height = 0;
  int width = 0;
  int num_classes = 0;
  std::vector<float> images;
  std::vector<int> labels;
  std::vector<float> norm_mean;  // per channel, empty when not normalized
  std::vector<float> norm_std;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  [[nodiscard]] std::size_t sample_numel() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  [[nodiscard]] Tensor4 batch(std::span<const std::size_t> indices) const;
  [[nodiscard]] std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
  /// Contiguous batch [first, first + count).
  [[nodiscard]] std::vector<std::size_t> range(std::size_t first, std::size_t count) const;
};

enum class DataSource { Cifar10Binary, Cifar100Binary, SyntheticPlanted, SyntheticRandom };
std::string to_string(DataSource s);
DataSource data_source_from_string(const std::string& s);

struct DatasetSpec {
  DataSource source = DataSource::SyntheticPlanted;
  std::filesystem::path root;  // directory or single file for CIFAR sources
  bool train_split = true;
  double subset = 1.0;  // fraction in (0, 1]
  std::uint64_t seed = 0;

  // Synthetic generators.
  int image_size = 16;
  int classes = 4;
  int samples = 512;
  int signal_channels = 2;
  int noise_channels = 6;
  float amplitude = 1.0f;  // pattern amplitude on signal channels
  float noise_std = 1.0f;  // Gaussian noise on every channel
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loads or generates the dataset described by `spec`. Sample order is
/// deterministic for a fixed seed.
Dataset load_dataset(const DatasetSpec& spec);

/// Parses CIFAR binary records (3073 bytes for CIFAR-10: label + 3x32x32
/// pixels; 3074 bytes for CIFAR-100: coarse label, fine label, pixels),
/// scales pixels to [0,1] and applies per-channel mean/std normalization.
Dataset parse_cifar(std::span<const unsigned char> bytes, bool cifar100);

/// Per-channel normalization constants conventionally used for CIFAR.
std::pair<std::vector<float>, std::vector<float>> cifar_norm(bool cifar100);

/// Class pattern of the planted task: per (class, signal channel) a fixed
/// H*W plane. Channels [0, signal_channels) carry the pattern.
std::vector<float> planted_pattern(const DatasetSpec& spec, int cls, int signal_channel);

/// Synthetic task where class identity lives only in the first
/// `signal_channels` input channels; the others are pure Gaussian noise.
Dataset make_planted(const DatasetSpec& spec);

/// Random labels on Gaussian images.
Dataset make_random(const DatasetSpec& spec);

/// Deterministic shuffle of [0, n) under `seed`.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

/// Keeps round(fraction * size) samples chosen under `seed`, in original order.
Dataset take_subset(const Dataset& d, double fraction, std::uint64_t seed);

/// Splits off the trailing `fraction` of samples.
std::pair<Dataset, Dataset> split(const Dataset& d, double eval_fraction);

}  // namespace ucp
