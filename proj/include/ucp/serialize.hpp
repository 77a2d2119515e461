#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "ucp/graph.hpp"

namespace ucp {

using json = nlohmann::ordered_json;

json graph_to_json(const Graph& g);
Graph graph_from_json(const json& j);

json read_json_file(const std::filesystem::path& p);
/// Writes pretty-printed JSON and returns the content hash of what was written.
std::string write_json_file(const std::filesystem::path& p, const json& j);

}  // namespace ucp
