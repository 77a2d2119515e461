#include <doctest.h>

#include <filesystem>
#include <cstring>
#include <fstream>

#include "support.hpp"
#include "ucp/accounting.hpp"
#include "ucp/builders.hpp"
#include "ucp/bundle.hpp"
#include "ucp/network.hpp"
#include "ucp/serialize.hpp"

using namespace ucp;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ucp_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bool has_violation(const std::vector<Violation>& v, const std::string& needle) {
  for (const auto& x : v)
    if (x.message.find(needle) != std::string::npos || x.node.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_SUITE("model-ir") {
  TEST_CASE("vgg19 conv widths") {
    const Graph g = build("vgg19", 100);
    std::vector<int> widths;
    for (const auto& id : g.conv_ids()) widths.push_back(g.node(id).out_channels);
    const std::vector<int> expect{64, 64, 128, 128, 256, 256, 256, 256,
                                  512, 512, 512, 512, 512, 512, 512, 512};
    CHECK(widths == expect);
    CHECK(validate(g).empty());
  }

  TEST_CASE("resnet56 stages") {
    const Graph g = build("resnet56", 10);
    REQUIRE(g.stages.size() == 3);
    const int widths[] = {16, 32, 64};
    for (int s = 0; s < 3; ++s) {
      CHECK(g.stages[s].width == widths[s]);
      CHECK(g.stages[s].blocks.size() == 9);
    }
    CHECK(std::abs(count_params(g) - 8.53e5) / 8.53e5 < 0.03);
  }

  TEST_CASE("preresnet164 bottlenecks keep stage widths") {
    const Graph g = build("preresnet164", 100);
    CHECK(g.blocks.size() == 54);
    for (const auto& b : g.blocks) {
      CHECK(b.type == BlockType::PreactBottleneck);
      CHECK(b.convs.size() == 3);
    }
    CHECK(g.stages[2].width == 256);
  }

  TEST_CASE("every architecture validates with and without MSEB") {
    for (const auto& arch : known_architectures())
      for (bool m : {false, true}) {
        BuildOptions o;
        o.with_mseb = m;
        const Graph g = build(arch, 10, o);
        CHECK_MESSAGE(validate(g).empty(), arch);
        CHECK(static_cast<bool>(g.mseb_ids().size()) == m);
      }
  }

  TEST_CASE("tiny-vgg forward produces a probability vector") {
    BuildOptions o;
    o.with_mseb = true;
    const Graph g = build("tiny-vgg", 4, o);
    const ModelBundle b = make_bundle(g, 3);
    Network<float> net(b.graph, b.params);
    std::mt19937_64 rng(9);
    const auto p = net.forward(testing::random_tensor<float>({1, 3, 16, 16}, rng), Mode::Eval);
    REQUIRE(p.shape() == Shape4{1, 4, 1, 1});
    double s = 0;
    for (float v : p.data()) s += v;
    CHECK(std::abs(s - 1.0) < 1e-6);
  }

  TEST_CASE("builder rejects bad requests") {
    CHECK_THROWS_AS(build("vgg7", 10), std::invalid_argument);
    CHECK_THROWS_AS(build("vgg16", 1), std::invalid_argument);
    BuildOptions o;
    o.with_mseb = true;
    o.placement = MsebPlacement::BottleneckMiddle;
    CHECK_THROWS_AS(build("resnet56", 10, o), std::invalid_argument);
  }

  TEST_CASE("validate names both widths of a mismatched add") {
    Graph g;
    g.arch = "handmade";
    g.input = {1, 3, 8, 8};
    g.num_classes = 2;
    auto conv = [](std::string id, int out) {
      LayerNode n;
      n.id = std::move(id);
      n.kind = LayerKind::Conv;
      n.in_channels = 3;
      n.out_channels = out;
      n.kernel_h = n.kernel_w = 3;
      n.padding = 1;
      return n;
    };
    g.nodes.push_back(conv("a", 32));
    g.nodes.push_back(conv("b", 64));
    LayerNode add;
    add.id = "join";
    add.kind = LayerKind::Add;
    add.inputs = {"a", "b"};
    g.nodes.push_back(add);
    LayerNode gap;
    gap.id = "gap";
    gap.kind = LayerKind::GlobalAvgPool;
    gap.inputs = {"join"};
    g.nodes.push_back(gap);
    LayerNode fc;
    fc.id = "fc";
    fc.kind = LayerKind::FullyConnected;
    fc.in_channels = 32;
    fc.out_channels = 2;
    fc.inputs = {"gap"};
    g.nodes.push_back(fc);
    LayerNode sm;
    sm.id = "softmax";
    sm.kind = LayerKind::Softmax;
    sm.inputs = {"fc"};
    g.nodes.push_back(sm);
    g.classifier = "fc";

    const auto v = validate(g);
    REQUIRE_FALSE(v.empty());
    bool named = false;
    for (const auto& x : v)
      if (x.node == "join" && x.message.find("32") != std::string::npos &&
          x.message.find("64") != std::string::npos)
        named = true;
    CHECK(named);
  }

  TEST_CASE("validate catches cycles, dangling nodes and missing sinks") {
    Graph g = build("tiny-vgg", 4);
    Graph cyc = g;
    cyc.nodes[0].inputs = {cyc.nodes[3].id};
    CHECK(has_violation(validate(cyc), "later in node order"));

    Graph dangling = g;
    LayerNode extra;
    extra.id = "orphan";
    extra.kind = LayerKind::ReLU;
    extra.inputs = {g.nodes[0].id};
    dangling.nodes.insert(dangling.nodes.begin() + 1, extra);
    CHECK(has_violation(validate(dangling), "dangling"));

    Graph nosink = g;
    nosink.nodes.pop_back();
    CHECK(has_violation(validate(nosink), "softmax"));
  }

  TEST_CASE("layer errors name the layer and widths") {
    const Graph g = build("tiny-vgg", 4);
    ModelBundle b = make_bundle(g, 1);
    Network<float> net(b.graph, b.params);
    Tensor4 x(1, 5, 16, 16);
    try {
      net.forward(x, Mode::Eval);
      FAIL("expected a structural error");
    } catch (const StructuralError& e) {
      CHECK(std::string(e.what()).find("3") != std::string::npos);
    }
  }

  TEST_CASE("identity kernels and identity batch-norm pass input through") {
    std::mt19937_64 rng(4);
    const auto x = testing::random_tensor<float>({2, 1, 5, 5}, rng);
    Tensor4 w(1, 1, 1, 1, 1.0f);
    const auto y = ops::conv2d<float>(x, w, nullptr, {1, 0});
    CHECK(testing::max_abs_diff(x, y) == 0.0);

    Tensor4 gamma(1, 1, 1, 1, 1.0f), beta(1, 1, 1, 1, 0.0f), rm(1, 1, 1, 1, 0.0f), rv(1, 1, 1, 1, 1.0f);
    ops::BatchNormCache<float> cache;
    const auto z = ops::batchnorm(x, gamma, beta, rm, rv, false, 1e-5, 0.1, cache);
    CHECK(testing::max_abs_diff(x, z) < 1e-5);
  }

  TEST_CASE("relu backward passes positives and blocks negatives") {
    Tensor4 x(Shape4{1, 1, 1, 2}, std::vector<float>{2.0f, -3.0f});
    Tensor4 dy(Shape4{1, 1, 1, 2}, std::vector<float>{0.7f, 0.7f});
    const auto dx = ops::relu_backward(x, dy);
    CHECK(dx[0] == 0.7f);
    CHECK(dx[1] == 0.0f);
  }

  TEST_CASE("strip_mseb removes the modules and reconnects") {
    BuildOptions o;
    o.with_mseb = true;
    for (const std::string arch : {"tiny-vgg", "tiny-resnet", "tiny-preresnet"}) {
      const Graph g = build(arch, 4, o);
      const Graph s = strip_mseb(g);
      CHECK(s.mseb_ids().empty());
      CHECK(validate(s).empty());
      CHECK(s.nodes.size() == g.nodes.size() - g.mseb_ids().size());
      CHECK(count_params(s) == count_params(build(arch, 4)));
    }
  }

  TEST_CASE("graph json round trip") {
    BuildOptions o;
    o.with_mseb = true;
    for (const std::string arch : {"tiny-vgg", "tiny-resnet", "tiny-preresnet", "resnet56"}) {
      const Graph g = build(arch, 10, o);
      CHECK(graph_from_json(graph_to_json(g)) == g);
    }
  }

  TEST_CASE("bundle save and load is bitwise") {
    const fs::path dir = scratch_dir("bundle");
    BuildOptions o;
    o.with_mseb = true;
    ModelBundle b = make_bundle(build("tiny-vgg", 4, o), 11);
    b.meta.epochs_seen = 3;
    b.meta.notes["k"] = "v";
    save_bundle(b, dir / "m.json");
    const ModelBundle r = load_bundle(dir / "m.json");
    CHECK(r.graph == b.graph);
    CHECK(r.meta == b.meta);
    REQUIRE(r.params.size() == b.params.size());
    for (const auto& [name, t] : b.params) {
      const auto& u = r.params.at(name);
      CHECK(u.shape() == t.shape());
      CHECK(std::memcmp(u.vec().data(), t.vec().data(), t.size() * sizeof(float)) == 0);
    }
  }

  TEST_CASE("bundle corruption is reported") {
    const fs::path dir = scratch_dir("corrupt");
    const ModelBundle b = make_bundle(build("tiny-vgg", 4), 1);
    save_bundle(b, dir / "m.json");
    const auto blob = dir / "m.bin";
    const auto full = fs::file_size(blob);

    SUBCASE("truncated blob names a tensor") {
      fs::resize_file(blob, full - 10);
      try {
        load_bundle(dir / "m.json");
        FAIL("expected an error");
      } catch (const BundleError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("length mismatch") != std::string::npos);
        CHECK(msg.find("tensor '") != std::string::npos);
      }
    }
    SUBCASE("missing blob") {
      fs::remove(blob);
      CHECK_THROWS_AS(load_bundle(dir / "m.json"), BundleError);
    }
    SUBCASE("flipped byte fails the checksum") {
      std::fstream f(blob, std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(100);
      f.put('\x7f');
      f.close();
      CHECK_THROWS_WITH_AS(load_bundle(dir / "m.json"), doctest::Contains("checksum"), BundleError);
    }
  }

  TEST_CASE("bundle with inconsistent stage annotations fails validation after load") {
    const fs::path dir = scratch_dir("stages");
    ModelBundle b = make_bundle(build("tiny-resnet", 4), 1);
    b.graph.stages[1].width = 12;
    save_bundle(b, dir / "m.json");
    const ModelBundle r = load_bundle(dir / "m.json");
    const auto v = validate(r.graph);
    CHECK_FALSE(v.empty());
  }
}
