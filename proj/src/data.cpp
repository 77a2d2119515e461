#include "ucp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

namespace ucp {

Tensor4 Dataset::batch(std::span<const std::size_t> indices) const {
  Tensor4 t(static_cast<int>(indices.size()), channels, height, width);
  const std::size_t per = sample_numel();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw DataError("sample index out of range");
    std::copy_n(images.begin() + static_cast<std::ptrdiff_t>(indices[i] * per), per,
                t.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return t;
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

std::vector<std::size_t> Dataset::range(std::size_t first, std::size_t count) const {
  std::vector<std::size_t> out;
  for (std::size_t i = first; i < std::min(size(), first + count); ++i) out.push_back(i);
  return out;
}

std::string to_string(DataSource s) {
  switch (s) {
    case DataSource::Cifar10Binary: return "cifar10-binary";
    case DataSource::Cifar100Binary: return "cifar100-binary";
    case DataSource::SyntheticPlanted: return "synthetic-planted";
    case DataSource::SyntheticRandom: return "synthetic-random";
  }
  return "synthetic-planted";
}

DataSource data_source_from_string(const std::string& s) {
  for (auto d : {DataSource::Cifar10Binary, DataSource::Cifar100Binary,
                 DataSource::SyntheticPlanted, DataSource::SyntheticRandom})
    if (to_string(d) == s) return d;
  throw DataError("unknown dataset source '" + s + "'");
}

std::pair<std::vector<float>, std::vector<float>> cifar_norm(bool cifar100) {
  if (cifar100) return {{0.5071f, 0.4865f, 0.4409f}, {0.2673f, 0.2564f, 0.2762f}};
  return {{0.4914f, 0.4822f, 0.4465f}, {0.2470f, 0.2435f, 0.2616f}};
}

Dataset parse_cifar(std::span<const unsigned char> bytes, bool cifar100) {
  constexpr std::size_t kPixels = 3 * 32 * 32;
  const std::size_t header = cifar100 ? 2 : 1;
  const std::size_t record = header + kPixels;
  if (bytes.size() % record != 0)
    throw DataError("truncated CIFAR file: " + std::to_string(bytes.size()) +
                    " bytes is not a multiple of the " + std::to_string(record) + "-byte record");
  Dataset d;
  d.channels = 3;
  d.height = d.width = 32;
  d.num_classes = cifar100 ? 100 : 10;
  std::tie(d.norm_mean, d.norm_std) = cifar_norm(cifar100);
  const std::size_t n = bytes.size() / record;
  d.images.resize(n * kPixels);
  d.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const unsigned char* rec = bytes.data() + r * record;
    const int label = cifar100 ? rec[1] : rec[0];  // fine label for CIFAR-100
    if (label >= d.num_classes)
      throw DataError("label " + std::to_string(label) + " out of range in record " +
                      std::to_string(r));
    d.labels[r] = label;
    for (std::size_t i = 0; i < kPixels; ++i) {
      const std::size_t c = i / 1024;
      d.images[r * kPixels + i] =
          (static_cast<float>(rec[header + i]) / 255.0f - d.norm_mean[c]) / d.norm_std[c];
    }
  }
  return d;
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::filesystem::path> cifar_files(const DatasetSpec& spec) {
  if (std::filesystem::is_regular_file(spec.root)) return {spec.root};
  std::vector<std::string> names;
  if (spec.source == DataSource::Cifar10Binary) {
    if (spec.train_split)
      for (int i = 1; i <= 5; ++i) names.push_back("data_batch_" + std::to_string(i) + ".bin");
    else
      names.push_back("test_batch.bin");
  } else {
    names.push_back(spec.train_split ? "train.bin" : "test.bin");
  }
  std::vector<std::filesystem::path> out;
  for (const auto& n : names) out.push_back(spec.root / n);
  return out;
}

// Base-L digits of the class index give each signal channel a level in
// [-amplitude, amplitude], with L the smallest base that keeps codes unique.
int levels_per_channel(int classes, int signal_channels) {
  int levels = 2;
  while (std::pow(static_cast<double>(levels), signal_channels) < classes) ++levels;
  return levels;
}

}  // namespace

std::vector<float> planted_pattern(const DatasetSpec& spec, int cls, int signal_channel) {
  const int levels = levels_per_channel(spec.classes, spec.signal_channels);
  int digit = cls;
  for (int s = 0; s < signal_channel; ++s) digit /= levels;
  digit %= levels;
  const float level = spec.amplitude * (-1.0f + 2.0f * static_cast<float>(digit) / static_cast<float>(levels - 1));
  return std::vector<float>(static_cast<std::size_t>(spec.image_size) * spec.image_size, level);
}

Dataset make_planted(const DatasetSpec& spec) {
  if (spec.signal_channels < 1) throw DataError("planted task needs >= 1 signal channel");
  if (spec.noise_channels < 0 || spec.classes < 2 || spec.samples < 1 || spec.image_size < 1)
    throw DataError("invalid synthetic dataset parameters");
  Dataset d;
  d.channels = spec.signal_channels + spec.noise_channels;
  d.height = d.width = spec.image_size;
  d.num_classes = spec.classes;
  const std::size_t plane = static_cast<std::size_t>(spec.image_size) * spec.image_size;
  const std::size_t per = plane * static_cast<std::size_t>(d.channels);

  std::vector<std::vector<float>> patterns;  // [cls * S + s]
  for (int k = 0; k < spec.classes; ++k)
    for (int s = 0; s < spec.signal_channels; ++s) patterns.push_back(planted_pattern(spec, k, s));

  // Eval draws from an independent stream.
  std::mt19937_64 rng(spec.seed * 2 + (spec.train_split ? 0 : 1));
  std::normal_distribution<float> noise(0.0f, spec.noise_std);
  std::vector<int> labels(static_cast<std::size_t>(spec.samples));
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
  std::shuffle(labels.begin(), labels.end(), rng);

  d.images.resize(per * labels.size());
  d.labels = labels;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    float* img = d.images.data() + i * per;
    for (int c = 0; c < d.channels; ++c) {
      const float* pat = c < spec.signal_channels
                             ? patterns[static_cast<std::size_t>(labels[i] * spec.signal_channels + c)].data()
                             : nullptr;
      for (std::size_t p = 0; p < plane; ++p)
        img[static_cast<std::size_t>(c) * plane + p] = (pat ? pat[p] : 0.0f) + noise(rng);
    }
  }
  return d;
}

Dataset make_random(const DatasetSpec& spec) {
  Dataset d;
  d.channels = spec.signal_channels + spec.noise_channels;
  d.height = d.width = spec.image_size;
  d.num_classes = spec.classes;
  std::mt19937_64 rng(spec.seed * 2 + (spec.train_split ? 0 : 1));
  std::normal_distribution<float> noise(0.0f, spec.noise_std);
  std::uniform_int_distribution<int> label(0, spec.classes - 1);
  d.labels.resize(static_cast<std::size_t>(spec.samples));
  for (auto& l : d.labels) l = label(rng);
  d.images.resize(d.sample_numel() * d.labels.size());
  for (auto& v : d.images) v = noise(rng);
  return d;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

Dataset take_subset(const Dataset& d, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw DataError("subset fraction must be in (0, 1]");
  if (fraction == 1.0) return d;
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(d.size())));
  auto idx = shuffled_indices(d.size(), seed);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  Dataset out = d;
  out.images.clear();
  out.labels.clear();
  const std::size_t per = d.sample_numel();
  for (auto i : idx) {
    out.images.insert(out.images.end(), d.images.begin() + static_cast<std::ptrdiff_t>(i * per),
                      d.images.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
    out.labels.push_back(d.labels[i]);
  }
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& d, double eval_fraction) {
  const auto n_eval = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(d.size())));
  const std::size_t n_train = d.size() - n_eval;
  const std::size_t per = d.sample_numel();
  Dataset a = d, b = d;
  a.images.assign(d.images.begin(), d.images.begin() + static_cast<std::ptrdiff_t>(n_train * per));
  a.labels.assign(d.labels.begin(), d.labels.begin() + static_cast<std::ptrdiff_t>(n_train));
  b.images.assign(d.images.begin() + static_cast<std::ptrdiff_t>(n_train * per), d.images.end());
  b.labels.assign(d.labels.begin() + static_cast<std::ptrdiff_t>(n_train), d.labels.end());
  return {std::move(a), std::move(b)};
}

Dataset load_dataset(const DatasetSpec& spec) {
  if (!(spec.subset > 0.0 && spec.subset <= 1.0)) throw DataError("subset fraction must be in (0, 1]");
  Dataset d;
  switch (spec.source) {
    case DataSource::Cifar10Binary:
    case DataSource::Cifar100Binary: {
      const bool c100 = spec.source == DataSource::Cifar100Binary;
      for (const auto& f : cifar_files(spec)) {
        const auto bytes = read_file(f);
        Dataset part = parse_cifar(bytes, c100);
        if (d.labels.empty()) {
          d = std::move(part);
        } else {
          d.images.insert(d.images.end(), part.images.begin(), part.images.end());
          d.labels.insert(d.labels.end(), part.labels.begin(), part.labels.end());
        }
      }
      break;
    }
    case DataSource::SyntheticPlanted:
      d = make_planted(spec);
      break;
    case DataSource::SyntheticRandom:
      d = make_random(spec);
      break;
  }
  return take_subset(d, spec.subset, spec.seed);
}

}  // namespace ucp
