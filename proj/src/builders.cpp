#include "ucp/builders.hpp"

#include <stdexcept>

namespace ucp {

namespace {

constexpr int kPool = -1;

const std::vector<int> kVgg16 = {64, 64, kPool, 128, 128, kPool, 256, 256, 256, kPool,
                                 512, 512, 512, kPool, 512, 512, 512};
const std::vector<int> kVgg19 = {64, 64, kPool, 128, 128, kPool, 256, 256, 256, 256, kPool,
                                 512, 512, 512, 512, kPool, 512, 512, 512, 512};
const std::vector<int> kTinyVgg = {8, 8, kPool, 16, 16};

class GraphBuilder {
 public:
  explicit GraphBuilder(Graph& g) : g_(g) {}

  std::string add(LayerNode n) {
    if (n.inputs.empty() && !last_.empty()) n.inputs = {last_};
    last_ = n.id;
    g_.nodes.push_back(std::move(n));
    return last_;
  }

  std::string conv(const std::string& id, int in, int out, int k, int stride, int pad, bool bias,
                   std::string from = {}) {
    LayerNode n;
    n.id = id;
    n.kind = LayerKind::Conv;
    n.in_channels = in;
    n.out_channels = out;
    n.kernel_h = n.kernel_w = k;
    n.stride = stride;
    n.padding = pad;
    n.bias = bias;
    if (!from.empty()) n.inputs = {std::move(from)};
    return add(std::move(n));
  }
  std::string bn(const std::string& id, int c, std::string from = {}) {
    LayerNode n;
    n.id = id;
    n.kind = LayerKind::BatchNorm;
    n.channels = c;
    if (!from.empty()) n.inputs = {std::move(from)};
    return add(std::move(n));
  }
  std::string relu(const std::string& id) {
    LayerNode n;
    n.id = id;
    n.kind = LayerKind::ReLU;
    return add(std::move(n));
  }
  std::string mseb(const std::string& id, int c, int reduction) {
    LayerNode n;
    n.id = id;
    n.kind = LayerKind::Mseb;
    n.channels = c;
    n.reduction = reduction;
    return add(std::move(n));
  }
  std::string maxpool(const std::string& id) {
    LayerNode n;
    n.id = id;
    n.kind = LayerKind::MaxPool;
    n.pool_size = 2;
    n.pool_stride = 2;
    return add(std::move(n));
  }
  std::string join(const std::string& id, const std::string& a, const std::string& b) {
    LayerNode n;
    n.id = id;
    n.kind = LayerKind::Add;
    n.inputs = {a, b};
    return add(std::move(n));
  }
  void head(int features, int classes) {
    LayerNode gap;
    gap.id = "gap";
    gap.kind = LayerKind::GlobalAvgPool;
    add(std::move(gap));
    LayerNode fc;
    fc.id = "fc";
    fc.kind = LayerKind::FullyConnected;
    fc.in_channels = features;
    fc.out_channels = classes;
    fc.bias = true;
    add(std::move(fc));
    LayerNode sm;
    sm.id = "softmax";
    sm.kind = LayerKind::Softmax;
    add(std::move(sm));
    g_.classifier = "fc";
  }

  [[nodiscard]] const std::string& last() const { return last_; }
  void set_last(std::string id) { last_ = std::move(id); }

 private:
  Graph& g_;
  std::string last_;
};

bool is_vgg(const std::string& arch) {
  return arch == "vgg16" || arch == "vgg19" || arch == "tiny-vgg";
}
bool is_basic_resnet(const std::string& arch) {
  return arch == "resnet56" || arch == "tiny-resnet";
}
bool is_preresnet(const std::string& arch) {
  return arch == "preresnet164" || arch == "tiny-preresnet";
}
bool is_tiny(const std::string& arch) { return arch.rfind("tiny-", 0) == 0; }

void build_vgg(Graph& g, const std::vector<int>& cfg, int classes, const BuildOptions& o) {
  GraphBuilder b(g);
  int c = g.input.c;
  int conv_idx = 0;
  int pool_idx = 0;
  for (int v : cfg) {
    if (v == kPool) {
      b.maxpool("pool" + std::to_string(++pool_idx));
      continue;
    }
    const std::string k = std::to_string(++conv_idx);
    b.conv("conv" + k, c, v, 3, 1, 1, false);
    b.bn("bn" + k, v);
    if (o.with_mseb) b.mseb("mseb" + k, v, o.reduction);
    b.relu("relu" + k);
    c = v;
  }
  b.head(c, classes);
}

// CIFAR-style post-activation ResNet with basic blocks.
void build_basic_resnet(Graph& g, const std::vector<int>& widths, int blocks_per_stage,
                        int classes, MsebPlacement placement, const BuildOptions& o) {
  GraphBuilder b(g);
  int c = widths.front();
  b.conv("stem", g.input.c, c, 3, 1, 1, false);
  b.bn("stem_bn", c);
  b.relu("stem_relu");
  for (std::size_t s = 0; s < widths.size(); ++s) {
    StageAnnotation stage;
    stage.index = static_cast<int>(s) + 1;
    stage.width = widths[s];
    for (int k = 0; k < blocks_per_stage; ++k) {
      const int stride = (s > 0 && k == 0) ? 2 : 1;
      const int out = widths[s];
      BlockAnnotation blk;
      blk.id = "s" + std::to_string(s + 1) + "b" + std::to_string(k + 1);
      blk.type = BlockType::Basic;
      blk.stage = stage.index;
      blk.input = b.last();
      const std::string p = blk.id + ".";
      const std::size_t first_node = g.nodes.size();

      b.conv(p + "conv1", c, out, 3, stride, 1, false);
      if (o.with_mseb && placement == MsebPlacement::BasicFirstConv)
        b.mseb(p + "mseb", out, o.reduction);
      b.bn(p + "bn1", out);
      b.relu(p + "relu1");
      b.conv(p + "conv2", out, out, 3, 1, 1, false);
      if (o.with_mseb && placement == MsebPlacement::BasicLastConv)
        b.mseb(p + "mseb", out, o.reduction);
      const std::string main = b.bn(p + "bn2", out);
      std::string skip = blk.input;
      if (stride != 1 || c != out) {
        b.conv(p + "down", c, out, 1, stride, 0, false, blk.input);
        skip = b.bn(p + "down_bn", out);
        blk.shortcut = p + "down";
      }
      blk.add = b.join(p + "add", main, skip);
      blk.output = b.relu(p + "relu");
      blk.convs = {p + "conv1", p + "conv2"};
      for (std::size_t i = first_node; i < g.nodes.size(); ++i) blk.members.push_back(g.nodes[i].id);
      stage.blocks.push_back(blk.id);
      g.blocks.push_back(std::move(blk));
      c = out;
    }
    g.stages.push_back(std::move(stage));
  }
  b.head(c, classes);
}

// Pre-activation bottleneck ResNet (BN -> ReLU -> conv ordering), expansion 4.
void build_preresnet(Graph& g, const std::vector<int>& mids, int blocks_per_stage, int classes,
                     MsebPlacement placement, const BuildOptions& o) {
  GraphBuilder b(g);
  int c = mids.front();
  b.conv("stem", g.input.c, c, 3, 1, 1, false);
  for (std::size_t s = 0; s < mids.size(); ++s) {
    StageAnnotation stage;
    stage.index = static_cast<int>(s) + 1;
    const int m = mids[s];
    const int out = 4 * m;
    stage.width = out;
    for (int k = 0; k < blocks_per_stage; ++k) {
      const int stride = (s > 0 && k == 0) ? 2 : 1;
      BlockAnnotation blk;
      blk.id = "s" + std::to_string(s + 1) + "b" + std::to_string(k + 1);
      blk.type = BlockType::PreactBottleneck;
      blk.stage = stage.index;
      blk.input = b.last();
      const std::string p = blk.id + ".";
      const std::size_t first_node = g.nodes.size();

      b.bn(p + "bn1", c);
      b.relu(p + "relu1");
      b.conv(p + "conv1", c, m, 1, 1, 0, false);
      b.bn(p + "bn2", m);
      b.relu(p + "relu2");
      b.conv(p + "conv2", m, m, 3, stride, 1, false);
      if (o.with_mseb && placement == MsebPlacement::BottleneckMiddle)
        b.mseb(p + "mseb", m, o.reduction);
      b.bn(p + "bn3", m);
      b.relu(p + "relu3");
      b.conv(p + "conv3", m, out, 1, 1, 0, true);
      if (o.with_mseb && placement == MsebPlacement::BottleneckThird)
        b.mseb(p + "mseb", out, o.reduction);
      const std::string main = b.last();
      std::string skip = blk.input;
      if (stride != 1 || c != out) {
        skip = b.conv(p + "down", c, out, 1, stride, 0, true, blk.input);
        blk.shortcut = p + "down";
      }
      blk.add = b.join(p + "add", main, skip);
      blk.output = blk.add;
      blk.convs = {p + "conv1", p + "conv2", p + "conv3"};
      for (std::size_t i = first_node; i < g.nodes.size(); ++i) blk.members.push_back(g.nodes[i].id);
      stage.blocks.push_back(blk.id);
      g.blocks.push_back(std::move(blk));
      c = out;
    }
    g.stages.push_back(std::move(stage));
  }
  b.bn("final_bn", c);
  b.relu("final_relu");
  b.head(c, classes);
}

}  // namespace

const std::vector<std::string>& known_architectures() {
  static const std::vector<std::string> names = {"vgg16",     "vgg19",       "resnet56",
                                                 "preresnet164", "tiny-vgg", "tiny-resnet",
                                                 "tiny-preresnet"};
  return names;
}

MsebPlacement resolve_placement(const std::string& arch, MsebPlacement requested) {
  if (is_vgg(arch)) {
    if (requested == MsebPlacement::Default || requested == MsebPlacement::VggBeforeRelu)
      return MsebPlacement::VggBeforeRelu;
  } else if (is_basic_resnet(arch)) {
    if (requested == MsebPlacement::Default) return MsebPlacement::BasicLastConv;
    if (requested == MsebPlacement::BasicFirstConv || requested == MsebPlacement::BasicLastConv)
      return requested;
  } else if (is_preresnet(arch)) {
    if (requested == MsebPlacement::Default) return MsebPlacement::BottleneckMiddle;
    if (requested == MsebPlacement::BottleneckMiddle ||
        requested == MsebPlacement::BottleneckThird)
      return requested;
  } else {
    throw std::invalid_argument("unknown architecture '" + arch + "'");
  }
  throw std::invalid_argument("MSEB placement '" + to_string(requested) +
                              "' is incompatible with architecture '" + arch + "'");
}

Graph build(const std::string& arch, int num_classes, const BuildOptions& opts) {
  if (num_classes < 2) throw std::invalid_argument("class count must be >= 2");
  if (opts.reduction < 1) throw std::invalid_argument("MSEB reduction must be >= 1");
  const MsebPlacement placement = resolve_placement(arch, opts.placement);

  Graph g;
  g.arch = arch;
  g.num_classes = num_classes;
  const int size = opts.image_size.value_or(is_tiny(arch) ? 16 : 32);
  g.input = Shape4{1, opts.input_channels.value_or(3), size, size};
  if (g.input.c < 1 || size < 1) throw std::invalid_argument("input shape must be positive");

  if (arch == "vgg16") build_vgg(g, kVgg16, num_classes, opts);
  else if (arch == "vgg19") build_vgg(g, kVgg19, num_classes, opts);
  else if (arch == "tiny-vgg") build_vgg(g, kTinyVgg, num_classes, opts);
  else if (arch == "resnet56") build_basic_resnet(g, {16, 32, 64}, 9, num_classes, placement, opts);
  else if (arch == "tiny-resnet") build_basic_resnet(g, {8, 16, 32}, 2, num_classes, placement, opts);
  else if (arch == "preresnet164") build_preresnet(g, {16, 32, 64}, 18, num_classes, placement, opts);
  else if (arch == "tiny-preresnet") build_preresnet(g, {4, 8, 16}, 1, num_classes, placement, opts);

  const auto violations = validate(g);
  if (!violations.empty())
    throw StructuralError("built graph '" + arch + "' is invalid: " + violations.front().node +
                          ": " + violations.front().message);
  return g;
}

}  // namespace ucp
