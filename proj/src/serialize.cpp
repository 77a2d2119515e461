#include "ucp/serialize.hpp"

#include <fstream>
#include <sstream>

#include "ucp/bundle.hpp"

namespace ucp {

json graph_to_json(const Graph& g) {
  json j;
  j["arch"] = g.arch;
  j["input"] = {g.input.c, g.input.h, g.input.w};
  j["num_classes"] = g.num_classes;
  j["classifier"] = g.classifier;
  json nodes = json::array();
  for (const auto& n : g.nodes) {
    json jn;
    jn["id"] = n.id;
    jn["kind"] = to_string(n.kind);
    jn["inputs"] = n.inputs;
    switch (n.kind) {
      case LayerKind::Conv:
        jn["in_channels"] = n.in_channels;
        jn["out_channels"] = n.out_channels;
        jn["kernel"] = {n.kernel_h, n.kernel_w};
        jn["stride"] = n.stride;
        jn["padding"] = n.padding;
        jn["bias"] = n.bias;
        break;
      case LayerKind::FullyConnected:
        jn["in_features"] = n.in_channels;
        jn["out_features"] = n.out_channels;
        break;
      case LayerKind::BatchNorm:
        jn["channels"] = n.channels;
        break;
      case LayerKind::Mseb:
        jn["channels"] = n.channels;
        jn["reduction"] = n.reduction;
        break;
      case LayerKind::MaxPool:
        jn["size"] = n.pool_size;
        jn["stride"] = n.pool_stride;
        break;
      default:
        break;
    }
    nodes.push_back(std::move(jn));
  }
  j["nodes"] = std::move(nodes);
  json edges = json::array();
  for (const auto& [a, b] : g.edges()) edges.push_back({a, b});
  j["edges"] = std::move(edges);
  json blocks = json::array();
  for (const auto& b : g.blocks) {
    blocks.push_back({{"id", b.id},
                      {"type", to_string(b.type)},
                      {"stage", b.stage},
                      {"members", b.members},
                      {"input", b.input},
                      {"output", b.output},
                      {"add", b.add},
                      {"convs", b.convs},
                      {"shortcut", b.shortcut}});
  }
  j["blocks"] = std::move(blocks);
  json stages = json::array();
  for (const auto& s : g.stages)
    stages.push_back({{"index", s.index}, {"width", s.width}, {"blocks", s.blocks}});
  j["stages"] = std::move(stages);
  return j;
}

Graph graph_from_json(const json& j) {
  Graph g;
  g.arch = j.value("arch", "");
  const auto& in = j.at("input");
  g.input = Shape4{1, in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()};
  g.num_classes = j.value("num_classes", 0);
  g.classifier = j.value("classifier", "");
  for (const auto& jn : j.at("nodes")) {
    LayerNode n;
    n.id = jn.at("id").get<std::string>();
    n.kind = layer_kind_from_string(jn.at("kind").get<std::string>());
    n.inputs = jn.value("inputs", std::vector<std::string>{});
    switch (n.kind) {
      case LayerKind::Conv:
        n.in_channels = jn.at("in_channels").get<int>();
        n.out_channels = jn.at("out_channels").get<int>();
        n.kernel_h = jn.at("kernel").at(0).get<int>();
        n.kernel_w = jn.at("kernel").at(1).get<int>();
        n.stride = jn.value("stride", 1);
        n.padding = jn.value("padding", 0);
        n.bias = jn.value("bias", false);
        break;
      case LayerKind::FullyConnected:
        n.in_channels = jn.at("in_features").get<int>();
        n.out_channels = jn.at("out_features").get<int>();
        n.bias = true;
        break;
      case LayerKind::BatchNorm:
        n.channels = jn.at("channels").get<int>();
        break;
      case LayerKind::Mseb:
        n.channels = jn.at("channels").get<int>();
        n.reduction = jn.at("reduction").get<int>();
        break;
      case LayerKind::MaxPool:
        n.pool_size = jn.at("size").get<int>();
        n.pool_stride = jn.at("stride").get<int>();
        break;
      default:
        break;
    }
    g.nodes.push_back(std::move(n));
  }
  for (const auto& jb : j.value("blocks", json::array())) {
    BlockAnnotation b;
    b.id = jb.at("id").get<std::string>();
    b.type = block_type_from_string(jb.at("type").get<std::string>());
    b.stage = jb.value("stage", 0);
    b.members = jb.value("members", std::vector<std::string>{});
    b.input = jb.value("input", "");
    b.output = jb.value("output", "");
    b.add = jb.value("add", "");
    b.convs = jb.value("convs", std::vector<std::string>{});
    b.shortcut = jb.value("shortcut", "");
    g.blocks.push_back(std::move(b));
  }
  for (const auto& js : j.value("stages", json::array())) {
    StageAnnotation s;
    s.index = js.at("index").get<int>();
    s.width = js.at("width").get<int>();
    s.blocks = js.value("blocks", std::vector<std::string>{});
    g.stages.push_back(std::move(s));
  }
  return g;
}

json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed JSON in " + p.string() + ": " + e.what());
  }
}

std::string write_json_file(const std::filesystem::path& p, const json& j) {
  const std::string text = j.dump(2) + "\n";
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  return content_hash(text);
}

}  // namespace ucp
