#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ucp/bundle.hpp"
#include "ucp/planner.hpp"

namespace ucp {

enum class RewriteMode { InheritWeights, ArchitectureOnly };
std::string to_string(RewriteMode m);
RewriteMode rewrite_mode_from_string(const std::string& s);

struct RewriteOptions {
  RewriteMode mode = RewriteMode::InheritWeights;
  bool strip_mseb = true;
  // Required in architecture-only mode; also seeds MSEB weights whose hidden
  // width changes when MSEB nodes are kept.
  std::optional<std::uint64_t> reseed;
};

class RewriteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Kept original channel indices of every node's output after the plan is
/// applied (empty optional = untouched). Throws RewriteError on a plan that
/// does not fit the graph or breaks a residual join.
std::vector<std::optional<std::vector<int>>> propagate_channels(const Graph& g,
                                                               const PruningPlan& plan);

/// Produces the compact model. The input is not modified.
ModelBundle apply(const ModelBundle& model, const PruningPlan& plan, const RewriteOptions& opts);

struct LayerDiff {
  std::string id;
  LayerKind kind = LayerKind::Conv;
  int width_before = 0;
  int width_after = 0;  // 0 when the node was removed
  std::int64_t params_before = 0;
  std::int64_t params_after = 0;
  [[nodiscard]] std::int64_t delta() const { return params_after - params_before; }
};

struct RewriteSummary {
  std::vector<LayerDiff> layers;
  std::int64_t params_before = 0;
  std::int64_t params_after = 0;
};

/// Per-layer widths and parameter deltas between two models.
RewriteSummary summarize(const Graph& before, const Graph& after);
std::string format_summary(const RewriteSummary& s);

}  // namespace ucp
