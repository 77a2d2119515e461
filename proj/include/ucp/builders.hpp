#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ucp/graph.hpp"

namespace ucp {

struct BuildOptions {
  bool with_mseb = false;
  MsebPlacement placement = MsebPlacement::Default;
  int reduction = 16;
  // Overrides the architecture's default input (3x32x32, or 3x16x16 for tiny nets).
  std::optional<int> input_channels;
  std::optional<int> image_size;
};

/// Architectures accepted by build().
const std::vector<std::string>& known_architectures();

/// Builds and validates one of the supported networks. Throws
/// std::invalid_argument for an unknown name, a class count below 2, or a
/// placement that does not fit the architecture's block type.
Graph build(const std::string& arch, int num_classes, const BuildOptions& opts = {});

/// Placement actually used for `arch` when `requested` is Default.
MsebPlacement resolve_placement(const std::string& arch, MsebPlacement requested);

}  // namespace ucp
