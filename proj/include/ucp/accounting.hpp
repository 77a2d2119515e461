#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ucp/graph.hpp"
#include "ucp/serialize.hpp"

namespace ucp {

/// How FLOPs are tallied.
///  - Mac: one multiply-accumulate of a conv/FC (or MSEB excitation) is one
///    FLOP; normalization, activations and pooling are free.
///  - MultiplyAdd: multiplies and adds are counted separately (2 per MAC),
///    plus bias adds, 2 per element for batch-norm, 1 per element for ReLU,
///    residual add and MSEB scale, and the window size per pooled output.
enum class FlopConvention { Mac, MultiplyAdd };
std::string to_string(FlopConvention c);
FlopConvention flop_convention_from_string(const std::string& s);

/// How retraining epochs are derived from the FLOP ratio.
///  - ComputeEqual: base * flops_before / flops_after (equal total compute).
///  - Literal: base * pruned FLOP fraction.
enum class EpochRule { ComputeEqual, Literal };
std::string to_string(EpochRule r);
EpochRule epoch_rule_from_string(const std::string& s);

struct LayerCount {
  std::string id;
  LayerKind kind = LayerKind::Conv;
  int in_width = 0;   // input channels (features for FC)
  int out_width = 0;  // output channels
  std::int64_t params = 0;
  std::int64_t flops = 0;
};

struct CountBreakdown {
  std::vector<LayerCount> layers;
  std::int64_t params = 0;       // everything, MSEB included
  std::int64_t mseb_params = 0;  // share of `params` owned by MSEB nodes
  std::int64_t flops = 0;
};

/// Parameter count of one node (conv weights [+bias], BN affine pair,
/// FC weights + bias, MSEB excitation weights).
std::int64_t node_params(const LayerNode& n);

CountBreakdown count(const Graph& g, FlopConvention conv = FlopConvention::Mac);
std::int64_t count_params(const Graph& g);
std::int64_t count_flops(const Graph& g, FlopConvention conv = FlopConvention::Mac);

int recommend_epochs(int base_epochs, double flops_before, double flops_after,
                     EpochRule rule = EpochRule::ComputeEqual);

struct CompressionReport {
  std::int64_t params_before = 0;
  std::int64_t params_after = 0;
  std::int64_t flops_before = 0;
  std::int64_t flops_after = 0;
  double pruned_params_pct = 0;  // rounded to one decimal
  double pruned_flops_pct = 0;
  int base_epochs = 0;
  int epochs = 0;
  FlopConvention convention = FlopConvention::Mac;
  EpochRule rule = EpochRule::ComputeEqual;
  std::vector<LayerCount> before_layers;
  std::vector<LayerCount> after_layers;

  /// Unrounded reductions.
  [[nodiscard]] double params_reduction() const;
  [[nodiscard]] double flops_reduction() const;
};

CompressionReport report(const Graph& before, const Graph& after, int base_epochs,
                         FlopConvention conv = FlopConvention::Mac,
                         EpochRule rule = EpochRule::ComputeEqual);

json report_to_json(const CompressionReport& r);

/// Plain-text table of a report.
std::string format_report(const CompressionReport& r);

}  // namespace ucp
