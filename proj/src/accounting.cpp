#include "ucp/accounting.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ucp {

std::string to_string(FlopConvention c) {
  return c == FlopConvention::Mac ? "mac" : "multiply-add";
}

FlopConvention flop_convention_from_string(const std::string& s) {
  if (s == "mac") return FlopConvention::Mac;
  if (s == "multiply-add") return FlopConvention::MultiplyAdd;
  throw std::invalid_argument("unknown FLOP convention '" + s + "'");
}

std::string to_string(EpochRule r) {
  return r == EpochRule::ComputeEqual ? "compute-equal" : "literal";
}

EpochRule epoch_rule_from_string(const std::string& s) {
  if (s == "compute-equal") return EpochRule::ComputeEqual;
  if (s == "literal") return EpochRule::Literal;
  throw std::invalid_argument("unknown epoch rule '" + s + "'");
}

std::int64_t node_params(const LayerNode& n) {
  using I = std::int64_t;
  switch (n.kind) {
    case LayerKind::Conv:
      return I{n.kernel_h} * n.kernel_w * n.in_channels * n.out_channels +
             (n.bias ? n.out_channels : 0);
    case LayerKind::BatchNorm:
      return 2 * I{n.channels};
    case LayerKind::FullyConnected:
      return I{n.in_channels} * n.out_channels + n.out_channels;
    case LayerKind::Mseb:
      return 2 * I{n.mseb_hidden()} * n.channels;
    default:
      return 0;
  }
}

CountBreakdown count(const Graph& g, FlopConvention conv) {
  const auto shapes = infer_shapes(g);
  const NodeShape input{g.input.c, g.input.h, g.input.w};
  const bool ma = conv == FlopConvention::MultiplyAdd;

  CountBreakdown out;
  for (const auto& n : g.nodes) {
    const NodeShape in = n.inputs.empty() ? input : shapes.at(n.inputs[0]);
    const NodeShape o = shapes.at(n.id);
    const std::int64_t out_elems = std::int64_t{o.c} * o.h * o.w;
    const std::int64_t in_elems = std::int64_t{in.c} * in.h * in.w;

    LayerCount lc;
    lc.id = n.id;
    lc.kind = n.kind;
    lc.in_width = in.c;
    lc.out_width = o.c;
    lc.params = node_params(n);
    switch (n.kind) {
      case LayerKind::Conv: {
        const std::int64_t macs = out_elems * n.kernel_h * n.kernel_w * n.in_channels;
        lc.flops = ma ? 2 * macs + (n.bias ? out_elems : 0) : macs;
        break;
      }
      case LayerKind::FullyConnected: {
        const std::int64_t macs = std::int64_t{n.in_channels} * n.out_channels;
        lc.flops = ma ? 2 * macs + n.out_channels : macs;
        break;
      }
      case LayerKind::Mseb: {
        // squeeze (|u| and sum), two 1x1 convs on the squeezed vector, channel-wise scale
        const std::int64_t macs = 2 * std::int64_t{n.mseb_hidden()} * n.channels;
        lc.flops = ma ? 2 * in_elems + 2 * macs + out_elems : macs + out_elems;
        break;
      }
      case LayerKind::BatchNorm:
        lc.flops = ma ? 2 * out_elems : 0;
        break;
      case LayerKind::ReLU:
      case LayerKind::Add:
        lc.flops = ma ? out_elems : 0;
        break;
      case LayerKind::MaxPool:
        lc.flops = ma ? out_elems * n.pool_size * n.pool_size : 0;
        break;
      case LayerKind::GlobalAvgPool:
        lc.flops = ma ? in_elems : 0;
        break;
      case LayerKind::Softmax:
        lc.flops = 0;
        break;
    }
    out.params += lc.params;
    out.flops += lc.flops;
    if (n.kind == LayerKind::Mseb) out.mseb_params += lc.params;
    out.layers.push_back(std::move(lc));
  }
  return out;
}

std::int64_t count_params(const Graph& g) { return count(g).params; }

std::int64_t count_flops(const Graph& g, FlopConvention conv) { return count(g, conv).flops; }

int recommend_epochs(int base_epochs, double flops_before, double flops_after, EpochRule rule) {
  if (base_epochs < 0) throw std::invalid_argument("base epochs must be >= 0");
  if (flops_before <= 0 || flops_after <= 0)
    throw std::invalid_argument("FLOP counts must be positive");
  if (rule == EpochRule::ComputeEqual)
    return static_cast<int>(std::lround(base_epochs * flops_before / flops_after));
  const double pruned = 1.0 - flops_after / flops_before;
  return std::max(1, static_cast<int>(std::lround(base_epochs * pruned)));
}

namespace {
double pct(std::int64_t before, std::int64_t after) {
  return before == 0 ? 0.0 : 100.0 * (1.0 - static_cast<double>(after) / static_cast<double>(before));
}
double round1(double v) { return std::round(v * 10.0) / 10.0; }
}  // namespace

double CompressionReport::params_reduction() const { return pct(params_before, params_after); }
double CompressionReport::flops_reduction() const { return pct(flops_before, flops_after); }

CompressionReport report(const Graph& before, const Graph& after, int base_epochs,
                         FlopConvention conv, EpochRule rule) {
  const auto b = count(before, conv);
  const auto a = count(after, conv);
  CompressionReport r;
  r.params_before = b.params;
  r.params_after = a.params;
  r.flops_before = b.flops;
  r.flops_after = a.flops;
  r.pruned_params_pct = round1(r.params_reduction());
  r.pruned_flops_pct = round1(r.flops_reduction());
  r.base_epochs = base_epochs;
  r.epochs = recommend_epochs(base_epochs, static_cast<double>(b.flops),
                              static_cast<double>(a.flops), rule);
  r.convention = conv;
  r.rule = rule;
  r.before_layers = b.layers;
  r.after_layers = a.layers;
  return r;
}

std::string format_report(const CompressionReport& r) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %16s %16s %10s\n", "", "before", "after", "pruned%");
  os << line;
  std::snprintf(line, sizeof line, "%-10s %16lld %16lld %10.1f\n", "params",
                static_cast<long long>(r.params_before), static_cast<long long>(r.params_after),
                r.pruned_params_pct);
  os << line;
  std::snprintf(line, sizeof line, "%-10s %16lld %16lld %10.1f\n", "flops",
                static_cast<long long>(r.flops_before), static_cast<long long>(r.flops_after),
                r.pruned_flops_pct);
  os << line;
  os << "flop convention: " << to_string(r.convention) << "\n";
  os << "retraining epochs (" << to_string(r.rule) << "): " << r.epochs << " (base "
     << r.base_epochs << ")\n";
  return os.str();
}

json report_to_json(const CompressionReport& r) {
  auto layers = [](const std::vector<LayerCount>& ls) {
    json a = json::array();
    for (const auto& l : ls)
      a.push_back({{"id", l.id},
                   {"kind", to_string(l.kind)},
                   {"in_width", l.in_width},
                   {"out_width", l.out_width},
                   {"params", l.params},
                   {"flops", l.flops}});
    return a;
  };
  return {{"format", "ucp-report/1"},
          {"params_before", r.params_before},
          {"params_after", r.params_after},
          {"flops_before", r.flops_before},
          {"flops_after", r.flops_after},
          {"pruned_params_pct", r.pruned_params_pct},
          {"pruned_flops_pct", r.pruned_flops_pct},
          {"flop_convention", to_string(r.convention)},
          {"epoch_rule", to_string(r.rule)},
          {"base_epochs", r.base_epochs},
          {"epochs", r.epochs},
          {"layers_before", layers(r.before_layers)},
          {"layers_after", layers(r.after_layers)}};
}

}  // namespace ucp
