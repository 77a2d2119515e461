#include "ucp/bundle.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "ucp/serialize.hpp"

namespace ucp {

std::vector<ParamSlot> param_slots(const LayerNode& n) {
  std::vector<ParamSlot> out;
  const std::string& id = n.id;
  switch (n.kind) {
    case LayerKind::Conv:
      out.push_back({id + ".weight", {n.out_channels, n.in_channels, n.kernel_h, n.kernel_w}, true});
      if (n.bias) out.push_back({id + ".bias", {n.out_channels, 1, 1, 1}, true});
      break;
    case LayerKind::FullyConnected:
      out.push_back({id + ".weight", {n.out_channels, n.in_channels, 1, 1}, true});
      out.push_back({id + ".bias", {n.out_channels, 1, 1, 1}, true});
      break;
    case LayerKind::BatchNorm:
      out.push_back({id + ".gamma", {n.channels, 1, 1, 1}, true});
      out.push_back({id + ".beta", {n.channels, 1, 1, 1}, true});
      out.push_back({id + ".running_mean", {n.channels, 1, 1, 1}, false});
      out.push_back({id + ".running_var", {n.channels, 1, 1, 1}, false});
      break;
    case LayerKind::Mseb:
      out.push_back({id + ".w1", {n.mseb_hidden(), n.channels, 1, 1}, true});
      out.push_back({id + ".w2", {n.channels, n.mseb_hidden(), 1, 1}, true});
      break;
    default:
      break;
  }
  return out;
}

std::vector<ParamSlot> param_slots(const Graph& g) {
  std::vector<ParamSlot> out;
  for (const auto& n : g.nodes)
    for (auto& s : param_slots(n)) out.push_back(std::move(s));
  return out;
}

ParamStore init_params(const Graph& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore p;
  for (const auto& slot : param_slots(g)) {
    Tensor4 t(slot.shape);
    const std::string suffix = slot.name.substr(slot.name.rfind('.') + 1);
    if (suffix == "weight" || suffix == "w1" || suffix == "w2") {
      const int fan_in = slot.shape.c * slot.shape.h * slot.shape.w;
      std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
      for (auto& v : t.data()) v = dist(rng);
    } else if (suffix == "gamma" || suffix == "running_var") {
      t.fill(1.0f);
    }
    p.emplace(slot.name, std::move(t));
  }
  return p;
}

ModelBundle make_bundle(Graph g, std::uint64_t seed) {
  ModelBundle b;
  b.params = init_params(g, seed);
  b.graph = std::move(g);
  b.meta.seed = seed;
  return b;
}

void check_params(const Graph& g, const ParamStore& p) {
  for (const auto& slot : param_slots(g)) {
    auto it = p.find(slot.name);
    if (it == p.end()) throw StructuralError("missing parameter '" + slot.name + "'");
    if (it->second.shape() != slot.shape)
      throw StructuralError("parameter '" + slot.name + "' has shape " + it->second.shape().str() +
                            ", expected " + slot.shape.str());
  }
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return content_hash(ss.str());
}

namespace {

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p.replace_extension(".bin");
  return p;
}

void append_le(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float read_le(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

json meta_to_json(const BundleMetadata& m) {
  return {{"epochs_seen", m.epochs_seen},
          {"seed", m.seed},
          {"config_hash", m.config_hash},
          {"init_scheme", m.init_scheme},
          {"notes", m.notes}};
}

BundleMetadata meta_from_json(const json& j) {
  BundleMetadata m;
  m.epochs_seen = j.value("epochs_seen", 0);
  m.seed = j.value("seed", std::uint64_t{0});
  m.config_hash = j.value("config_hash", "");
  m.init_scheme = j.value("init_scheme", "");
  m.notes = j.value("notes", std::map<std::string, std::string>{});
  return m;
}

}  // namespace

void save_bundle(const ModelBundle& b, const std::filesystem::path& manifest) {
  check_params(b.graph, b.params);
  std::string blob;
  json tensors = json::array();
  for (const auto& slot : param_slots(b.graph)) {
    const Tensor4& t = b.params.at(slot.name);
    const std::size_t offset = blob.size();
    for (float v : t.data()) append_le(blob, v);
    tensors.push_back({{"name", slot.name},
                       {"shape", {t.n(), t.c(), t.h(), t.w()}},
                       {"offset", offset},
                       {"bytes", blob.size() - offset}});
  }
  const auto bin = blob_path(manifest);
  json j;
  j["format"] = "ucp-bundle/1";
  j["graph"] = graph_to_json(b.graph);
  j["metadata"] = meta_to_json(b.meta);
  j["blob"] = bin.filename().string();
  j["blob_bytes"] = blob.size();
  j["tensors"] = std::move(tensors);
  j["checksum"] = content_hash(j.dump() + blob);

  if (manifest.has_parent_path()) std::filesystem::create_directories(manifest.parent_path());
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw BundleError("cannot write " + bin.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  out.close();
  write_json_file(manifest, j);
}

ModelBundle load_bundle(const std::filesystem::path& manifest) {
  json j;
  try {
    j = read_json_file(manifest);
  } catch (const std::exception& e) {
    throw BundleError(e.what());
  }
  const auto bin = manifest.parent_path() / j.at("blob").get<std::string>();
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw BundleError("missing blob file " + bin.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string blob = ss.str();

  ModelBundle b;
  b.graph = graph_from_json(j.at("graph"));
  b.meta = meta_from_json(j.value("metadata", json::object()));
  for (const auto& jt : j.at("tensors")) {
    const auto name = jt.at("name").get<std::string>();
    const auto& s = jt.at("shape");
    const Shape4 shape{s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>(), s.at(3).get<int>()};
    const auto offset = jt.at("offset").get<std::size_t>();
    const auto bytes = jt.at("bytes").get<std::size_t>();
    if (bytes != shape.numel() * sizeof(float))
      throw BundleError("length mismatch for tensor '" + name + "': manifest declares " +
                        std::to_string(bytes) + " bytes for shape " + shape.str());
    if (offset + bytes > blob.size())
      throw BundleError("length mismatch for tensor '" + name + "': needs bytes [" +
                        std::to_string(offset) + ", " + std::to_string(offset + bytes) +
                        ") but blob has " + std::to_string(blob.size()));
    std::vector<float> data(shape.numel());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = read_le(blob.data() + offset + 4 * i);
    b.params.emplace(name, Tensor4(shape, std::move(data)));
  }
  if (j.value("blob_bytes", blob.size()) != blob.size())
    throw BundleError("blob size " + std::to_string(blob.size()) + " disagrees with manifest");

  json unsigned_manifest = j;
  unsigned_manifest.erase("checksum");
  if (content_hash(unsigned_manifest.dump() + blob) != j.value("checksum", ""))
    throw BundleError("checksum mismatch for " + manifest.string());
  check_params(b.graph, b.params);
  return b;
}

}  // namespace ucp
