#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ucp/graph.hpp"
#include "ucp/tensor.hpp"

namespace ucp {

/// Named float32 parameter blobs. Names are "<node id>.<slot>" with slots
/// weight/bias (conv, fc), gamma/beta/running_mean/running_var (batchnorm)
/// and w1/w2 (mseb).
using ParamStore = std::map<std::string, Tensor4>;

struct ParamSlot {
  std::string name;
  Shape4 shape;
  bool trainable = true;  // false for running statistics
};

/// Parameter slots owned by one node, in canonical order.
std::vector<ParamSlot> param_slots(const LayerNode& n);
std::vector<ParamSlot> param_slots(const Graph& g);

/// Fan-in scaled Gaussian initialization (std = sqrt(2 / fan_in)) for conv,
/// fc and MSEB weights; zero biases; BN gamma = 1, beta = 0, running mean 0,
/// running var 1.
ParamStore init_params(const Graph& g, std::uint64_t seed);

struct BundleMetadata {
  int epochs_seen = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string init_scheme = "fan-in-gaussian";
  std::map<std::string, std::string> notes;

  friend bool operator==(const BundleMetadata&, const BundleMetadata&) = default;
};

struct ModelBundle {
  Graph graph;
  ParamStore params;
  BundleMetadata meta;
};

/// Fresh bundle with initialized parameters.
ModelBundle make_bundle(Graph g, std::uint64_t seed);

/// Checks that every slot the graph needs exists with the right shape.
void check_params(const Graph& g, const ParamStore& p);

class BundleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes `<path>` (JSON manifest) and `<path minus extension>.bin`
/// (little-endian float32 blobs in manifest index order).
void save_bundle(const ModelBundle& b, const std::filesystem::path& manifest);

/// Reads a bundle written by save_bundle. Throws BundleError on a missing
/// blob file, a tensor whose byte range falls outside the blob, or a
/// checksum mismatch.
ModelBundle load_bundle(const std::filesystem::path& manifest);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string content_hash(std::string_view bytes);
std::string file_hash(const std::filesystem::path& p);

}  // namespace ucp
