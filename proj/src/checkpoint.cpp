#include "s2o/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "s2o/error.hpp"

namespace s2o::nn {

using ordered_json = nlohmann::ordered_json;

std::string checkpoint_to_string(const Network& net) {
  ordered_json doc;
  doc["schema_version"] = kCheckpointSchemaVersion;
  doc["layer_dims"] = net.widths();
  ordered_json acts = ordered_json::array();
  ordered_json weights = ordered_json::array();
  for (const Layer& layer : net.layers()) {
    acts.push_back(layer.activation == Activation::ReLU ? "relu" : "identity");
    weights.push_back(layer.weight.values());
  }
  doc["activations"] = std::move(acts);
  doc["weights"] = std::move(weights);
  return doc.dump() + "\n";
}

Network checkpoint_from_string(const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("checkpoint: ") + e.what());
  }
  try {
    if (doc.at("schema_version").get<int>() != kCheckpointSchemaVersion)
      throw Error(ErrorKind::Parse, "unsupported checkpoint schema_version");
    const auto dims = doc.at("layer_dims").get<std::vector<std::size_t>>();
    const auto& acts = doc.at("activations");
    const auto& weights = doc.at("weights");
    if (dims.size() < 2 || acts.size() + 1 != dims.size() || weights.size() + 1 != dims.size())
      throw Error(ErrorKind::Parse, "checkpoint layer counts are inconsistent");

    std::vector<Layer> layers;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const std::string act = acts[l].get<std::string>();
      if (act != "relu" && act != "identity") throw Error(ErrorKind::Parse, "unknown activation " + act);
      auto values = weights[l].get<std::vector<double>>();
      layers.push_back({Matrix(dims[l + 1], dims[l] + 1, std::move(values)),
                        act == "relu" ? Activation::ReLU : Activation::Identity});
    }
    return Network(std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << checkpoint_to_string(net);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_string(buf.str());
}

}  // namespace s2o::nn
