#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ucp/tensor.hpp"

namespace ucp {

enum class LayerKind {
  Conv,
  BatchNorm,
  ReLU,
  MaxPool,
  GlobalAvgPool,
  FullyConnected,
  Mseb,
  Add,
  Softmax,
};

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& s);

/// One node of the architecture graph. Only the attributes relevant to
/// `kind` are meaningful; the rest stay zero.
struct LayerNode {
  std::string id;
  LayerKind kind = LayerKind::ReLU;
  std::vector<std::string> inputs;  // producer node ids; empty means graph input

  // conv / fullyconnected
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  int stride = 1;
  int padding = 0;
  bool bias = false;

  // batchnorm / mseb
  int channels = 0;
  int reduction = 0;  // mseb only

  // maxpool
  int pool_size = 0;
  int pool_stride = 0;

  [[nodiscard]] bool has_params() const {
    return kind == LayerKind::Conv || kind == LayerKind::BatchNorm ||
           kind == LayerKind::FullyConnected || kind == LayerKind::Mseb;
  }
  [[nodiscard]] int mseb_hidden() const;

  friend bool operator==(const LayerNode&, const LayerNode&) = default;
};

enum class BlockType { Basic, Bottleneck, PreactBottleneck };
std::string to_string(BlockType t);
BlockType block_type_from_string(const std::string& s);

/// A residual block. `members` lists every node id inside the block
/// (main path, shortcut path and the join), in graph order.
struct BlockAnnotation {
  std::string id;
  BlockType type = BlockType::Basic;
  int stage = 0;
  std::vector<std::string> members;
  std::string input;     // node producing the block input (outside the block)
  std::string output;    // node whose output leaves the block (add or post-add relu)
  std::string add;       // residual join
  std::vector<std::string> convs;  // main-path convs in order
  std::string shortcut;  // shortcut conv id, empty for identity

  [[nodiscard]] const std::string& first_conv() const { return convs.front(); }
  [[nodiscard]] const std::string& last_conv() const { return convs.back(); }
  // Middle 3x3 conv of a bottleneck.
  [[nodiscard]] const std::string& middle_conv() const { return convs.at(1); }

  friend bool operator==(const BlockAnnotation&, const BlockAnnotation&) = default;
};

struct StageAnnotation {
  int index = 0;  // 1-based
  int width = 0;  // block I/O width
  std::vector<std::string> blocks;
  friend bool operator==(const StageAnnotation&, const StageAnnotation&) = default;
};

/// Where MSEB modules are inserted by the builders.
enum class MsebPlacement {
  Default,          // per-architecture default
  VggBeforeRelu,    // conv -> BN -> MSEB -> ReLU
  BasicFirstConv,   // after the first conv of a basic block, before BN/ReLU
  BasicLastConv,    // after the last conv of a basic block
  BottleneckMiddle, // after the middle 3x3 conv of a bottleneck
  BottleneckThird,  // after the third conv of a bottleneck
};
std::string to_string(MsebPlacement p);
MsebPlacement placement_from_string(const std::string& s);

/// Ordered DAG of layer nodes. Node order is a valid topological order.
struct Graph {
  std::string arch;
  Shape4 input{1, 3, 32, 32};  // n is ignored
  int num_classes = 0;
  std::vector<LayerNode> nodes;
  std::vector<BlockAnnotation> blocks;
  std::vector<StageAnnotation> stages;
  std::string classifier;  // id of the final fullyconnected node

  [[nodiscard]] int find(const std::string& id) const;  // -1 when absent
  [[nodiscard]] const LayerNode& node(const std::string& id) const;
  LayerNode& node(const std::string& id);
  [[nodiscard]] bool contains(const std::string& id) const { return find(id) >= 0; }
  [[nodiscard]] const BlockAnnotation* block(const std::string& id) const;

  /// Ids of nodes that consume `id`'s output.
  [[nodiscard]] std::vector<std::string> consumers(const std::string& id) const;
  [[nodiscard]] std::vector<std::pair<std::string, std::string>> edges() const;
  [[nodiscard]] std::vector<std::string> conv_ids() const;
  [[nodiscard]] std::vector<std::string> mseb_ids() const;

  friend bool operator==(const Graph&, const Graph&) = default;
};

/// Per-node output shape for a single sample.
struct NodeShape {
  int c = 0;
  int h = 0;
  int w = 0;
};

/// Infers per-node output shapes; throws StructuralError naming the node on
/// any width or spatial mismatch.
std::map<std::string, NodeShape> infer_shapes(const Graph& g);

struct Violation {
  std::string node;  // offending node or annotation id
  std::string message;
};

/// Checks every structural invariant and returns all violations found.
std::vector<Violation> validate(const Graph& g);

/// Removes every MSEB node, reconnecting its consumers to its producer.
Graph strip_mseb(const Graph& g);

}  // namespace ucp
