#include "ucp/graph.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

namespace ucp {

namespace {

struct KindName {
  LayerKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {LayerKind::Conv, "conv"},
    {LayerKind::BatchNorm, "batchnorm"},
    {LayerKind::ReLU, "relu"},
    {LayerKind::MaxPool, "maxpool"},
    {LayerKind::GlobalAvgPool, "globalavgpool"},
    {LayerKind::FullyConnected, "fullyconnected"},
    {LayerKind::Mseb, "mseb"},
    {LayerKind::Add, "add"},
    {LayerKind::Softmax, "softmax"},
};

}  // namespace

std::string to_string(LayerKind kind) {
  for (const auto& kn : kKindNames)
    if (kn.kind == kind) return kn.name;
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& s) {
  for (const auto& kn : kKindNames)
    if (s == kn.name) return kn.kind;
  throw StructuralError("unknown layer kind '" + s + "'");
}

std::string to_string(BlockType t) {
  switch (t) {
    case BlockType::Basic: return "basic";
    case BlockType::Bottleneck: return "bottleneck";
    case BlockType::PreactBottleneck: return "preact-bottleneck";
  }
  return "basic";
}

BlockType block_type_from_string(const std::string& s) {
  if (s == "basic") return BlockType::Basic;
  if (s == "bottleneck") return BlockType::Bottleneck;
  if (s == "preact-bottleneck") return BlockType::PreactBottleneck;
  throw StructuralError("unknown block type '" + s + "'");
}

std::string to_string(MsebPlacement p) {
  switch (p) {
    case MsebPlacement::Default: return "default";
    case MsebPlacement::VggBeforeRelu: return "vgg-before-relu";
    case MsebPlacement::BasicFirstConv: return "basic-first-conv";
    case MsebPlacement::BasicLastConv: return "basic-last-conv";
    case MsebPlacement::BottleneckMiddle: return "bottleneck-middle";
    case MsebPlacement::BottleneckThird: return "bottleneck-third";
  }
  return "default";
}

MsebPlacement placement_from_string(const std::string& s) {
  for (auto p : {MsebPlacement::Default, MsebPlacement::VggBeforeRelu,
                 MsebPlacement::BasicFirstConv, MsebPlacement::BasicLastConv,
                 MsebPlacement::BottleneckMiddle, MsebPlacement::BottleneckThird})
    if (to_string(p) == s) return p;
  throw StructuralError("unknown MSEB placement '" + s + "'");
}

int LayerNode::mseb_hidden() const { return std::max(1, channels / std::max(1, reduction)); }

int Graph::find(const std::string& id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

const LayerNode& Graph::node(const std::string& id) const {
  const int i = find(id);
  if (i < 0) throw StructuralError("unknown node '" + id + "'");
  return nodes[static_cast<std::size_t>(i)];
}

LayerNode& Graph::node(const std::string& id) {
  const int i = find(id);
  if (i < 0) throw StructuralError("unknown node '" + id + "'");
  return nodes[static_cast<std::size_t>(i)];
}

const BlockAnnotation* Graph::block(const std::string& id) const {
  for (const auto& b : blocks)
    if (b.id == id) return &b;
  return nullptr;
}

std::vector<std::string> Graph::consumers(const std::string& id) const {
  std::vector<std::string> out;
  for (const auto& n : nodes)
    if (std::find(n.inputs.begin(), n.inputs.end(), id) != n.inputs.end()) out.push_back(n.id);
  return out;
}

std::vector<std::pair<std::string, std::string>> Graph::edges() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& n : nodes)
    for (const auto& in : n.inputs) out.emplace_back(in, n.id);
  return out;
}

std::vector<std::string> Graph::conv_ids() const {
  std::vector<std::string> out;
  for (const auto& n : nodes)
    if (n.kind == LayerKind::Conv) out.push_back(n.id);
  return out;
}

std::vector<std::string> Graph::mseb_ids() const {
  std::vector<std::string> out;
  for (const auto& n : nodes)
    if (n.kind == LayerKind::Mseb) out.push_back(n.id);
  return out;
}

namespace {

// Shape propagation that records problems instead of throwing. Nodes whose
// inputs are unknown are skipped so that one defect does not cascade.
std::map<std::string, NodeShape> shape_pass(const Graph& g, std::vector<Violation>& out) {
  std::map<std::string, NodeShape> shapes;
  const NodeShape input{g.input.c, g.input.h, g.input.w};
  auto fail = [&](const LayerNode& n, const std::string& msg) { out.push_back({n.id, msg}); };

  for (const auto& n : g.nodes) {
    std::vector<NodeShape> ins;
    bool known = true;
    if (n.inputs.empty()) {
      ins.push_back(input);
    } else {
      for (const auto& src : n.inputs) {
        auto it = shapes.find(src);
        if (it == shapes.end()) {
          known = false;
          break;
        }
        ins.push_back(it->second);
      }
    }
    if (!known) continue;

    const std::size_t arity = n.kind == LayerKind::Add ? 2u : 1u;
    if (ins.size() != arity) {
      fail(n, to_string(n.kind) + " expects " + std::to_string(arity) + " input(s), has " +
                  std::to_string(ins.size()));
      continue;
    }
    const NodeShape in = ins[0];
    NodeShape res = in;
    switch (n.kind) {
      case LayerKind::Conv: {
        if (n.in_channels < 1 || n.out_channels < 1) {
          fail(n, "conv widths must be positive (in=" + std::to_string(n.in_channels) +
                      ", out=" + std::to_string(n.out_channels) + ")");
          continue;
        }
        if (n.in_channels != in.c) {
          fail(n, "conv expects " + std::to_string(n.in_channels) + " input channels, got " +
                      std::to_string(in.c));
          continue;
        }
        if (n.kernel_h < 1 || n.kernel_w < 1 || n.stride < 1 || n.padding < 0) {
          fail(n, "illegal conv kernel/stride/padding");
          continue;
        }
        const int ph = in.h + 2 * n.padding;
        const int pw = in.w + 2 * n.padding;
        if (ph < n.kernel_h || pw < n.kernel_w) {
          fail(n, "kernel larger than padded input");
          continue;
        }
        res = {n.out_channels, (ph - n.kernel_h) / n.stride + 1, (pw - n.kernel_w) / n.stride + 1};
        break;
      }
      case LayerKind::BatchNorm:
        if (n.channels != in.c || n.channels < 1) {
          fail(n, "batchnorm width " + std::to_string(n.channels) + " does not match input " +
                      std::to_string(in.c));
          continue;
        }
        break;
      case LayerKind::Mseb:
        if (n.channels != in.c || n.channels < 1) {
          fail(n, "mseb width " + std::to_string(n.channels) + " does not match input " +
                      std::to_string(in.c));
          continue;
        }
        if (n.reduction < 1) {
          fail(n, "mseb reduction must be >= 1");
          continue;
        }
        break;
      case LayerKind::ReLU:
      case LayerKind::Softmax:
        break;
      case LayerKind::MaxPool:
        if (n.pool_size < 1 || n.pool_stride < 1 || in.h < n.pool_size || in.w < n.pool_size) {
          fail(n, "illegal maxpool window for input " + std::to_string(in.h) + "x" +
                      std::to_string(in.w));
          continue;
        }
        res = {in.c, (in.h - n.pool_size) / n.pool_stride + 1,
               (in.w - n.pool_size) / n.pool_stride + 1};
        break;
      case LayerKind::GlobalAvgPool:
        res = {in.c, 1, 1};
        break;
      case LayerKind::FullyConnected:
        if (n.in_channels < 1 || n.out_channels < 1) {
          fail(n, "fullyconnected widths must be positive");
          continue;
        }
        if (in.h != 1 || in.w != 1 || in.c != n.in_channels) {
          fail(n, "fullyconnected expects " + std::to_string(n.in_channels) +
                      " features, got " + std::to_string(in.c) + "x" + std::to_string(in.h) +
                      "x" + std::to_string(in.w));
          continue;
        }
        res = {n.out_channels, 1, 1};
        break;
      case LayerKind::Add: {
        const NodeShape b = ins[1];
        if (in.c != b.c || in.h != b.h || in.w != b.w) {
          fail(n, "add joins mismatched inputs: " + n.inputs[0] + " has width " +
                      std::to_string(in.c) + " (" + std::to_string(in.h) + "x" +
                      std::to_string(in.w) + "), " + n.inputs[1] + " has width " +
                      std::to_string(b.c) + " (" + std::to_string(b.h) + "x" +
                      std::to_string(b.w) + ")");
          continue;
        }
        break;
      }
    }
    shapes[n.id] = res;
  }
  return shapes;
}

}  // namespace

std::map<std::string, NodeShape> infer_shapes(const Graph& g) {
  std::vector<Violation> v;
  auto shapes = shape_pass(g, v);
  if (!v.empty()) throw StructuralError("layer '" + v.front().node + "': " + v.front().message);
  if (shapes.size() != g.nodes.size()) throw StructuralError("graph has unreachable nodes");
  return shapes;
}

std::vector<Violation> validate(const Graph& g) {
  std::vector<Violation> out;

  // Ids, ordering (acyclicity), dangling inputs.
  std::set<std::string> seen;
  for (const auto& n : g.nodes) {
    if (n.id.empty()) out.push_back({"", "node with empty id"});
    if (seen.count(n.id)) out.push_back({n.id, "duplicate node id"});
    for (const auto& src : n.inputs) {
      if (!seen.count(src)) {
        if (g.contains(src))
          out.push_back({n.id, "input '" + src + "' appears later in node order (cycle or misordering)"});
        else
          out.push_back({n.id, "input '" + src + "' does not exist"});
      }
    }
    seen.insert(n.id);
  }

  auto shapes = shape_pass(g, out);

  // Sink: exactly one softmax, and it is the only node without consumers.
  std::unordered_map<std::string, int> fanout;
  for (const auto& n : g.nodes)
    for (const auto& src : n.inputs) ++fanout[src];
  int softmax_count = 0;
  for (const auto& n : g.nodes) {
    if (n.kind == LayerKind::Softmax) ++softmax_count;
    if (fanout[n.id] == 0 && n.kind != LayerKind::Softmax)
      out.push_back({n.id, "dangling node (no consumers and not the softmax sink)"});
  }
  if (softmax_count != 1)
    out.push_back({"graph", "expected exactly one softmax sink, found " + std::to_string(softmax_count)});
  if (!g.classifier.empty()) {
    if (!g.contains(g.classifier))
      out.push_back({g.classifier, "classifier head does not exist"});
    else if (g.node(g.classifier).kind != LayerKind::FullyConnected)
      out.push_back({g.classifier, "classifier head is not fullyconnected"});
    else if (g.num_classes > 0 && g.node(g.classifier).out_channels != g.num_classes)
      out.push_back({g.classifier, "classifier width does not equal class count"});
  }

  // Block and stage annotations.
  for (const auto& b : g.blocks) {
    for (const auto& m : b.members)
      if (!g.contains(m)) out.push_back({b.id, "block member '" + m + "' does not exist"});
    for (const auto& c : b.convs)
      if (!g.contains(c)) out.push_back({b.id, "block conv '" + c + "' does not exist"});
    if (!g.contains(b.add) || g.node(b.add).kind != LayerKind::Add)
      out.push_back({b.id, "block join '" + b.add + "' is not an add node"});
    if (!b.shortcut.empty() && !g.contains(b.shortcut))
      out.push_back({b.id, "shortcut '" + b.shortcut + "' does not exist"});
  }
  auto width_of = [&](const std::string& id) -> int {
    auto it = shapes.find(id);
    return it == shapes.end() ? -1 : it->second.c;
  };
  for (std::size_t s = 0; s < g.stages.size(); ++s) {
    const auto& st = g.stages[s];
    const std::string sid = "stage" + std::to_string(st.index);
    for (std::size_t k = 0; k < st.blocks.size(); ++k) {
      const BlockAnnotation* b = g.block(st.blocks[k]);
      if (!b) {
        out.push_back({sid, "stage member block '" + st.blocks[k] + "' does not exist"});
        continue;
      }
      const int w_in = width_of(b->input);
      const int w_out = width_of(b->output);
      if (w_out >= 0 && w_out != st.width)
        out.push_back({b->id, "block output width " + std::to_string(w_out) +
                                  " differs from " + sid + " width " + std::to_string(st.width)});
      int expect_in = st.width;
      if (k == 0) expect_in = s == 0 ? w_in : g.stages[s - 1].width;
      if (w_in >= 0 && w_in != expect_in)
        out.push_back({b->id, "block input width " + std::to_string(w_in) + " differs from expected " +
                                  std::to_string(expect_in) + " in " + sid});
    }
  }
  return out;
}

Graph strip_mseb(const Graph& g) {
  Graph out = g;
  std::map<std::string, std::string> redirect;
  out.nodes.clear();
  for (const auto& n : g.nodes) {
    if (n.kind == LayerKind::Mseb) {
      const std::string src = n.inputs.empty() ? std::string() : n.inputs[0];
      auto it = redirect.find(src);
      redirect[n.id] = it == redirect.end() ? src : it->second;
      continue;
    }
    LayerNode copy = n;
    for (auto& in : copy.inputs) {
      auto it = redirect.find(in);
      if (it != redirect.end()) in = it->second;
    }
    out.nodes.push_back(std::move(copy));
  }
  auto fix = [&](std::string& id) {
    auto it = redirect.find(id);
    if (it != redirect.end()) id = it->second;
  };
  for (auto& b : out.blocks) {
    std::erase_if(b.members, [&](const std::string& m) { return redirect.count(m) > 0; });
    fix(b.input);
    fix(b.output);
  }
  return out;
}

}  // namespace ucp
