#include "trajaware/checkpoint.hpp"

#include <fstream>

#include "trajaware/errors.hpp"

namespace trajaware {

using json = nlohmann::json;

void save_checkpoint(const std::filesystem::path& path, const nn::NamedParams& params,
                     const json& meta) {
  json j;
  j["format"] = "trajaware-checkpoint";
  j["version"] = kCheckpointVersion;
  j["meta"] = meta;
  j["tensors"] = json::array();
  for (const auto& [name, t] : params)
    j["tensors"].push_back({{"name", name},
                            {"shape", t.shape()},
                            {"data", std::vector<double>(t.data().begin(), t.data().end())}});
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

json load_checkpoint(const std::filesystem::path& path, const nn::NamedParams& params) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "trajaware-checkpoint")
    throw ValidationError(path.string() + " is not a trajaware checkpoint");
  if (j.value("version", 0) != kCheckpointVersion)
    throw ValidationError(path.string() + ": unsupported checkpoint version");
  const auto& tensors = j.at("tensors");
  if (tensors.size() != params.size())
    throw ValidationError("checkpoint has " + std::to_string(tensors.size()) +
                          " tensors, architecture expects " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = params[i];
    const auto& entry = tensors[i];
    if (entry.at("name").get<std::string>() != name)
      throw ValidationError("checkpoint tensor " + std::to_string(i) + " is '" +
                            entry.at("name").get<std::string>() + "', expected '" + name + "'");
    const auto shape = entry.at("shape").get<nn::Shape>();
    if (shape != t.shape())
      throw ValidationError("checkpoint tensor '" + name + "' has shape " + nn::shape_string(shape) +
                            ", expected " + nn::shape_string(t.shape()));
    const auto data = entry.at("data").get<std::vector<double>>();
    if (data.size() != t.size()) throw ValidationError("checkpoint tensor '" + name + "' is truncated");
    std::copy(data.begin(), data.end(), t.node().data.begin());
  }
  return j.value("meta", json::object());
}

}  // namespace trajaware
