#include "sgmlab/sgm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sgmlab/log.hpp"

namespace sgmlab {

SoftTargetGate parse_gate(const std::string& s) {
  if (s == "correct_only") return SoftTargetGate::correct_only;
  if (s == "always") return SoftTargetGate::always;
  throw std::invalid_argument("unknown soft_target_gate '" + s +
                              "' (expected correct_only|always)");
}

std::string to_string(SoftTargetGate g) {
  return g == SoftTargetGate::correct_only ? "correct_only" : "always";
}

SoftTargetTable::SoftTargetTable(std::size_t classes)
    : u_(classes, std::vector<double>(classes, classes ? 1.0 / double(classes) : 0.0)),
      c_(classes, 0) {}

void SoftTargetTable::update(std::size_t k, std::span<const double> probs) {
  if (k >= u_.size()) {
    throw std::out_of_range("soft target update: class " + std::to_string(k) + " >= K=" +
                            std::to_string(u_.size()));
  }
  if (probs.size() != u_.size()) {
    throw ShapeError("soft target update: probability vector has " +
                     std::to_string(probs.size()) + " entries, K=" + std::to_string(u_.size()));
  }
  const double sum = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("soft target update: probabilities sum to " +
                                std::to_string(sum));
  }
  auto& u = u_[k];
  const double c = static_cast<double>(c_[k]);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = (c * u[i] + probs[i]) / (c + 1.0);
  c_[k] += 1;
}

bool SoftTargetTable::observe(std::size_t k, std::span<const double> probs, SoftTargetGate gate) {
  if (k >= u_.size()) {
    throw std::out_of_range("soft target observe: class " + std::to_string(k) + " out of range");
  }
  if (gate == SoftTargetGate::correct_only) {
    const auto pred = static_cast<std::size_t>(
        std::distance(probs.begin(), std::max_element(probs.begin(), probs.end())));
    if (pred != k) return false;
  }
  update(k, probs);
  return true;
}

std::vector<double> SoftTargetTable::build_target(std::size_t k, std::size_t y_pred) const {
  const std::size_t K = u_.size();
  if (k >= K || y_pred >= K) {
    throw std::out_of_range("build_target: class index out of range");
  }
  std::vector<double> t = u_[k];
  t[k] = 1.0;
  if (y_pred != k) t[y_pred] = 1.0 / static_cast<double>(K);
  const double sum = std::accumulate(t.begin(), t.end(), 0.0);
  for (auto& v : t) v /= sum;
  return t;
}

void SoftTargetTable::grow(std::size_t new_classes) {
  if (new_classes == 0) return;
  const std::size_t K = u_.size() + new_classes;
  const double fill = 1.0 / static_cast<double>(K);
  for (auto& u : u_) {
    u.resize(K, fill);
    const double sum = std::accumulate(u.begin(), u.end(), 0.0);
    for (auto& v : u) v /= sum;
  }
  for (std::size_t i = 0; i < new_classes; ++i) {
    u_.emplace_back(K, fill);
    c_.push_back(0);
  }
}

nlohmann::json SoftTargetTable::to_json() const {
  nlohmann::json j;
  j["classes"] = u_.size();
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < u_.size(); ++k) {
    rows.push_back({{"class", k}, {"count", c_[k]}, {"u", u_[k]}});
  }
  j["table"] = std::move(rows);
  return j;
}

SoftTargetTable SoftTargetTable::from_json(const nlohmann::json& j) {
  SoftTargetTable t(j.at("classes").get<std::size_t>());
  for (const auto& row : j.at("table")) {
    const auto k = row.at("class").get<std::size_t>();
    if (k >= t.u_.size()) throw std::out_of_range("soft target json: class out of range");
    t.u_[k] = row.at("u").get<std::vector<double>>();
    t.c_[k] = row.at("count").get<std::uint64_t>();
    if (t.u_[k].size() != t.u_.size()) throw ShapeError("soft target json: ragged row");
  }
  return t;
}

template <class T>
Tensor2<T> init_new_class_weights(const std::vector<Tensor2<T>>& embeddings_by_class,
                                  std::mt19937_64& rng) {
  if (embeddings_by_class.empty()) return {};
  const std::size_t d = embeddings_by_class.front().cols();
  Tensor2<T> rows(embeddings_by_class.size(), d);
  for (std::size_t k = 0; k < embeddings_by_class.size(); ++k) {
    const auto& h = embeddings_by_class[k];
    if (h.cols() != d) throw ShapeError("init_new_class_weights: embedding width mismatch");
    std::vector<double> acc(d, 0.0);
    std::size_t used = 0;
    for (std::size_t j = 0; j < h.rows(); ++j) {
      auto v = h.row(j);
      double sq = 0.0;
      for (T x : v) sq += static_cast<double>(x) * static_cast<double>(x);
      const double norm = std::sqrt(sq);
      if (norm < kMinEmbeddingNorm) continue;
      for (std::size_t c = 0; c < d; ++c) acc[c] += static_cast<double>(v[c]) / norm;
      ++used;
    }
    if (used == 0) {
      log::warn("init_new_class_weights: class slot " + std::to_string(k) +
                " has no usable embedding; using random init");
      auto r = he_normal<T>(1, d, rng);
      for (std::size_t c = 0; c < d; ++c) rows(k, c) = r(0, c);
      continue;
    }
    for (std::size_t c = 0; c < d; ++c) rows(k, c) = static_cast<T>(acc[c] / double(used));
  }
  return rows;
}

std::size_t lora_parameter_count(std::size_t out_dim, std::size_t in_dim, std::size_t rank) {
  return out_dim * rank + rank * in_dim;
}

template <class T>
void inject_lora(Model<T>& model, const std::set<std::size_t>& layers, std::size_t rank,
                 std::uint64_t seed) {
  if (rank == 0) throw std::invalid_argument("inject_lora: rank must be >= 1");
  for (std::size_t l : layers) {
    if (l + 1 >= model.num_layers()) {
      throw std::invalid_argument("inject_lora: layer " + std::to_string(l) +
                                  " is not a hidden linear layer");
    }
    const auto& layer = model.layers()[l];
    if (layer.lora) throw std::invalid_argument("inject_lora: layer already adapted");
    if (2 * rank > std::min(layer.out_dim(), layer.in_dim())) {
      throw std::invalid_argument("inject_lora: rank " + std::to_string(rank) +
                                  " exceeds min(d,g)/2 for layer " + std::to_string(l) + " " +
                                  shape_str(layer.out_dim(), layer.in_dim()));
    }
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0 / static_cast<double>(rank));
  for (std::size_t l : layers) {
    auto& layer = model.layers()[l];
    Tensor2<T> a(rank, layer.in_dim());
    for (auto& v : a.flat()) v = static_cast<T>(dist(rng));
    layer.lora = LoraAdapter<T>{Parameter<T>(Tensor2<T>(layer.out_dim(), rank)),
                                Parameter<T>(std::move(a))};
    layer.weight.freeze_all();
    layer.bias.freeze_all();
  }
}

template <class T>
void fold_lora(Model<T>& model) {
  for (auto& layer : model.layers()) {
    if (!layer.lora) continue;
    const auto& B = layer.lora->B.value;
    const auto& A = layer.lora->A.value;
    auto& W = layer.weight.value;
    for (std::size_t i = 0; i < W.rows(); ++i) {
      for (std::size_t j = 0; j < W.cols(); ++j) {
        double delta = 0.0;
        for (std::size_t p = 0; p < B.cols(); ++p) {
          delta += static_cast<double>(B(i, p)) * static_cast<double>(A(p, j));
        }
        W(i, j) = static_cast<T>(static_cast<double>(W(i, j)) + delta);
      }
    }
    layer.lora.reset();
    layer.weight.unfreeze_all();
    layer.bias.unfreeze_all();
  }
}

template <class T>
void apply_oocf(Model<T>& model, const FreezePolicy& policy) {
  auto& out = model.output_layer();
  for (std::size_t k : policy.old_classes) {
    if (k >= out.out_dim()) {
      throw std::out_of_range("apply_oocf: class " + std::to_string(k) + " >= K=" +
                              std::to_string(out.out_dim()));
    }
  }
  if (policy.frozen_layer_prefix > model.num_hidden()) {
    throw std::out_of_range("apply_oocf: frozen prefix exceeds hidden layer count");
  }
  for (std::size_t k : policy.old_classes) {
    out.weight.freeze_row(k);
    out.bias.frozen[k] = 1;
  }
  for (std::size_t l = 0; l < policy.frozen_layer_prefix; ++l) model.freeze_layer(l);
}

std::vector<std::string> MethodBundle::active_names() const {
  std::vector<std::string> out;
  if (weight_init) out.emplace_back("weight_init");
  if (soft_targets) out.emplace_back("soft_targets");
  if (oocf) out.emplace_back("oocf");
  if (lora) out.emplace_back("lora");
  return out;
}

MethodBundle compose_sgm(const SgmOptions& options) {
  MethodBundle b;
  b.weight_init = b.soft_targets = b.oocf = b.lora = true;
  b.lora_rank = options.lora_rank;
  b.gate = options.gate;
  return b;
}

MethodBundle bundle_from_names(const std::vector<std::string>& names, const SgmOptions& options) {
  MethodBundle b;
  b.lora_rank = options.lora_rank;
  b.gate = options.gate;
  for (const auto& n : names) {
    if (n == "sgm") {
      b = compose_sgm(options);
    } else if (n == "weight_init") {
      b.weight_init = true;
    } else if (n == "soft_targets") {
      b.soft_targets = true;
    } else if (n == "oocf") {
      b.oocf = true;
    } else if (n == "lora") {
      b.lora = true;
    } else {
      throw std::invalid_argument("unknown mechanism '" + n +
                                  "' (expected sgm|weight_init|soft_targets|oocf|lora)");
    }
  }
  return b;
}

#define SGMLAB_INSTANTIATE(T)                                                                \
  template Tensor2<T> init_new_class_weights<T>(const std::vector<Tensor2<T>>&,              \
                                                std::mt19937_64&);                           \
  template void inject_lora<T>(Model<T>&, const std::set<std::size_t>&, std::size_t,         \
                               std::uint64_t);                                               \
  template void fold_lora<T>(Model<T>&);                                                     \
  template void apply_oocf<T>(Model<T>&, const FreezePolicy&);

SGMLAB_INSTANTIATE(float)
SGMLAB_INSTANTIATE(double)

#undef SGMLAB_INSTANTIATE

}  // namespace sgmlab
