#include "sgmlab/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <type_traits>

namespace sgmlab {

namespace {

template <class T>
constexpr const char* precision_name() {
  return std::is_same_v<T, double> ? "float64" : "float32";
}

template <class T>
nlohmann::json param_to_json(const Parameter<T>& p) {
  nlohmann::json j;
  j["rows"] = p.value.rows();
  j["cols"] = p.value.cols();
  j["data"] = p.value.values();
  std::vector<std::size_t> frozen_idx;
  for (std::size_t i = 0; i < p.frozen.size(); ++i) {
    if (p.frozen[i]) frozen_idx.push_back(i);
  }
  j["frozen"] = frozen_idx;
  return j;
}

template <class T>
Parameter<T> param_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  Parameter<T> p(Tensor2<T>(rows, cols, j.at("data").get<std::vector<T>>()));
  for (auto idx : j.at("frozen").get<std::vector<std::size_t>>()) {
    if (idx >= p.frozen.size()) throw std::runtime_error("checkpoint: frozen index out of range");
    p.frozen[idx] = 1;
  }
  return p;
}

}  // namespace

template <class T>
nlohmann::json checkpoint_to_json(const Model<T>& model) {
  nlohmann::json j;
  j["format"] = "sgmlab-checkpoint";
  j["version"] = kCheckpointVersion;
  j["precision"] = precision_name<T>();
  const auto& spec = model.spec();
  j["spec"] = {{"input_dim", spec.input_dim},
               {"hidden", spec.hidden},
               {"output_dim", spec.output_dim},
               {"activation", to_string(spec.activation)}};
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : model.layers()) {
    nlohmann::json lj;
    lj["weight"] = param_to_json(layer.weight);
    lj["bias"] = param_to_json(layer.bias);
    if (layer.lora) {
      lj["lora"] = {{"B", param_to_json(layer.lora->B)}, {"A", param_to_json(layer.lora->A)}};
    }
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  std::ostringstream rng;
  rng << model.rng();
  j["rng"] = rng.str();
  return j;
}

template <class T>
Model<T> checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "sgmlab-checkpoint") {
    throw std::runtime_error("checkpoint: not an sgmlab checkpoint");
  }
  if (j.at("version").get<int>() != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version");
  }
  if (j.at("precision").get<std::string>() != precision_name<T>()) {
    throw std::runtime_error("checkpoint: stored precision " +
                             j.at("precision").get<std::string>() + " does not match " +
                             precision_name<T>());
  }
  ModelSpec spec;
  const auto& sj = j.at("spec");
  spec.input_dim = sj.at("input_dim").get<std::size_t>();
  spec.hidden = sj.at("hidden").get<std::vector<std::size_t>>();
  spec.output_dim = sj.at("output_dim").get<std::size_t>();
  spec.activation = parse_activation(sj.at("activation").get<std::string>());

  Model<T> model(spec, 0);
  const auto& lj = j.at("layers");
  if (lj.size() != model.num_layers()) throw std::runtime_error("checkpoint: layer count mismatch");
  for (std::size_t l = 0; l < lj.size(); ++l) {
    auto& layer = model.layers()[l];
    auto w = param_from_json<T>(lj[l].at("weight"));
    auto b = param_from_json<T>(lj[l].at("bias"));
    require_shape(w.value, layer.out_dim(), layer.in_dim(), "checkpoint: weight");
    require_shape(b.value, 1, layer.out_dim(), "checkpoint: bias");
    layer.weight = std::move(w);
    layer.bias = std::move(b);
    if (lj[l].contains("lora")) {
      LoraAdapter<T> ad{param_from_json<T>(lj[l]["lora"].at("B")),
                        param_from_json<T>(lj[l]["lora"].at("A"))};
      require_shape(ad.B.value, layer.out_dim(), ad.rank(), "checkpoint: lora B");
      require_shape(ad.A.value, ad.rank(), layer.in_dim(), "checkpoint: lora A");
      layer.lora = std::move(ad);
    }
  }
  std::istringstream rng(j.at("rng").get<std::string>());
  rng >> model.rng();
  if (!rng) throw std::runtime_error("checkpoint: bad RNG state");
  return model;
}

template <class T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(model).dump();
}

template <class T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  return checkpoint_from_json<T>(nlohmann::json::parse(in));
}

#define SGMLAB_INSTANTIATE(T)                                                         \
  template nlohmann::json checkpoint_to_json<T>(const Model<T>&);                     \
  template Model<T> checkpoint_from_json<T>(const nlohmann::json&);                   \
  template void save_checkpoint<T>(const Model<T>&, const std::filesystem::path&);    \
  template Model<T> load_checkpoint<T>(const std::filesystem::path&);

SGMLAB_INSTANTIATE(float)
SGMLAB_INSTANTIATE(double)

#undef SGMLAB_INSTANTIATE

}  // namespace sgmlab
