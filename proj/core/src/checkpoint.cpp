#include "blocksurgeon/checkpoint.hpp"

#include <cstring>

#include "io_util.hpp"
#include "json.hpp"

namespace blocksurgeon {

void save_checkpoint(const Network& network, const std::string& dir,
                     const std::string& name) {
  io::ensure_dir(dir);
  nlohmann::ordered_json j;
  j["config"] = nlohmann::ordered_json::parse(network.config().to_json());
  j["tensors"] = nlohmann::ordered_json::array();
  std::string blob;
  std::size_t offset = 0;
  for (const auto& nt : network.parameters()) {
    nlohmann::ordered_json t;
    t["name"] = nt.name;
    t["shape"] = nt.value->shape;
    t["offset"] = offset;
    j["tensors"].push_back(std::move(t));
    const std::size_t bytes = nt.value->data.size() * 8;
    const std::size_t at = blob.size();
    blob.resize(at + bytes);
    std::memcpy(blob.data() + at, nt.value->data.data(), bytes);
    offset += bytes;
  }
  io::write_file(io::join(dir, name + ".json"), j.dump(2) + "\n");
  io::write_file(io::join(dir, name + ".bin"), blob);
}

Network load_checkpoint(const std::string& dir, const std::string& name) {
  const std::string text = io::read_file(io::join(dir, name + ".json"));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }

  NetworkConfig config = NetworkConfig::from_json_text(j.at("config").dump());
  Network network(config, 0);
  const std::string blob = io::read_file(io::join(dir, name + ".bin"));

  auto params = network.parameters();
  std::size_t i = 0;
  try {
    const auto& tensors = j.at("tensors");
    if (tensors.size() != params.size()) {
      throw ParseError("checkpoint lists " + std::to_string(tensors.size()) +
                       " tensors, network has " + std::to_string(params.size()));
    }
    for (const auto& t : tensors) {
      const std::string tname = t.at("name").get<std::string>();
      const std::vector<int> shape = t.at("shape").get<std::vector<int>>();
      const std::size_t offset = t.at("offset").get<std::size_t>();
      if (tname != params[i].name || shape != params[i].value->shape) {
        throw ParseError("checkpoint tensor '" + tname +
                         "' does not match network parameter '" + params[i].name + "'");
      }
      const std::size_t bytes = params[i].value->data.size() * 8;
      if (offset + bytes > blob.size()) {
        throw ParseError("checkpoint blob too short for tensor '" + tname + "'");
      }
      std::memcpy(params[i].value->data.data(), blob.data() + offset, bytes);
      ++i;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint manifest field error: ") + e.what());
  }
  return network;
}

}  // namespace blocksurgeon
