#include "sgmlab/model.hpp"

#include <cmath>
#include <numbers>

#include "sgmlab/kernels.hpp"

namespace sgmlab {

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "gelu") return Activation::gelu;
  throw std::invalid_argument("unknown activation '" + s + "' (expected relu|gelu)");
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "gelu"; }

template <class T>
std::size_t Parameter<T>::frozen_count() const {
  std::size_t n = 0;
  for (auto f : frozen) n += f;
  return n;
}

template <class T>
void Parameter<T>::append_rows(const Tensor2<T>& rows) {
  value.append_rows(rows);
  grad.append_rows(Tensor2<T>(rows.rows(), rows.cols()));
  frozen.resize(value.size(), 0);
}

template <class T>
Tensor2<T> he_normal(std::size_t rows, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor2<T> w(rows, fan_in);
  for (auto& v : w.flat()) v = static_cast<T>(dist(rng));
  return w;
}

template <class T>
std::vector<std::size_t> argmax_rows(const Tensor2<T>& m) {
  std::vector<std::size_t> out(m.rows(), 0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;  // strict: lowest index wins ties
    }
    out[r] = best;
  }
  return out;
}

namespace {

template <class T>
T activate(Activation a, T z) {
  if (a == Activation::relu) return z > T(0) ? z : T(0);
  const double x = static_cast<double>(z);
  return static_cast<T>(0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)));
}

template <class T>
T activate_grad(Activation a, T z) {
  if (a == Activation::relu) return z > T(0) ? T(1) : T(0);
  const double x = static_cast<double>(z);
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return static_cast<T>(cdf + x * pdf);
}

template <class T>
void add_bias(Tensor2<T>& z, const Tensor2<T>& bias) {
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias(0, c);
  }
}

template <class T>
void add_inplace(Tensor2<T>& a, const Tensor2<T>& b) {
  auto dst = a.flat();
  auto src = b.flat();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <class T>
void mask_grad(Parameter<T>& p) {
  auto g = p.grad.flat();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (p.frozen[i]) g[i] = T(0);
  }
}

}  // namespace

template <class T>
Model<T>::Model(const ModelSpec& spec, std::uint64_t seed) : spec_(spec), rng_(seed) {
  if (spec.input_dim == 0 || spec.output_dim == 0) {
    throw std::invalid_argument("model input and output dimensions must be positive");
  }
  std::size_t fan_in = spec.input_dim;
  std::vector<std::size_t> widths = spec.hidden;
  widths.push_back(spec.output_dim);
  for (std::size_t w : widths) {
    if (w == 0) throw std::invalid_argument("layer width must be positive");
    Linear<T> layer;
    layer.weight = Parameter<T>(he_normal<T>(w, fan_in, rng_));
    layer.bias = Parameter<T>(Tensor2<T>(1, w));
    layers_.push_back(std::move(layer));
    fan_in = w;
  }
}

template <class T>
ForwardPass<T> Model<T>::forward(const Tensor2<T>& x) const {
  if (x.cols() != spec_.input_dim) {
    throw ShapeError("forward: input " + shape_str(x.rows(), x.cols()) + " but model expects " +
                     std::to_string(spec_.input_dim) + " features");
  }
  ForwardPass<T> pass;
  pass.inputs.reserve(layers_.size());
  Tensor2<T> h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    Tensor2<T> z = kernels::matmul_nt(h, layer.weight.value);
    add_bias(z, layer.bias.value);
    Tensor2<T> u;
    if (layer.lora) {
      u = kernels::matmul_nt(h, layer.lora->A.value);
      add_inplace(z, kernels::matmul_nt(u, layer.lora->B.value));
    }
    pass.lora_hidden.push_back(std::move(u));
    pass.inputs.push_back(std::move(h));
    if (l + 1 == layers_.size()) {
      pass.logits = std::move(z);
    } else {
      h = Tensor2<T>(z.rows(), z.cols());
      auto src = z.flat();
      auto dst = h.flat();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = activate(spec_.activation, src[i]);
      pass.preact.push_back(std::move(z));
    }
  }
  return pass;
}

template <class T>
void Model<T>::backward(const ForwardPass<T>& pass, const Tensor2<T>& grad_logits) {
  require_shape(grad_logits, pass.logits.rows(), pass.logits.cols(), "backward: grad_logits");
  Tensor2<T> g = grad_logits;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    auto& layer = layers_[li];
    const Tensor2<T>& in = pass.inputs[li];
    if (li + 1 < layers_.size()) {
      const auto z = pass.preact[li].flat();
      auto gf = g.flat();
      for (std::size_t i = 0; i < gf.size(); ++i) gf[i] *= activate_grad(spec_.activation, z[i]);
    }

    if (layer.weight.frozen_count() == layer.weight.value.size()) {
      layer.weight.grad = Tensor2<T>(layer.out_dim(), layer.in_dim());
    } else {
      layer.weight.grad = kernels::matmul_tn(g, in);
    }
    Tensor2<T> gb(1, layer.out_dim());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto row = g.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) gb(0, c) += row[c];
    }
    layer.bias.grad = std::move(gb);

    Tensor2<T> g_lora;
    if (layer.lora) {
      auto& ad = *layer.lora;
      ad.B.grad = kernels::matmul_tn(g, pass.lora_hidden[li]);
      g_lora = kernels::matmul_nn(g, ad.B.value);
      ad.A.grad = kernels::matmul_tn(g_lora, in);
      mask_grad(ad.B);
      mask_grad(ad.A);
    }
    mask_grad(layer.weight);
    mask_grad(layer.bias);

    if (li > 0) {
      Tensor2<T> g_in = kernels::matmul_nn(g, layer.weight.value);
      if (layer.lora) add_inplace(g_in, kernels::matmul_nn(g_lora, layer.lora->A.value));
      g = std::move(g_in);
    }
  }
}

template <class T>
void Model<T>::zero_grad() {
  for (auto& slot : parameters()) slot.param->grad.fill(T(0));
}

template <class T>
std::vector<ParamSlot<T>> Model<T>::parameters() {
  std::vector<ParamSlot<T>> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    const int depth = depth_of(l);
    out.push_back({prefix + "weight", &layer.weight, depth});
    out.push_back({prefix + "bias", &layer.bias, depth});
    if (layer.lora) {
      out.push_back({prefix + "lora_B", &layer.lora->B, depth});
      out.push_back({prefix + "lora_A", &layer.lora->A, depth});
    }
  }
  return out;
}

template <class T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (auto& slot : const_cast<Model*>(this)->parameters()) n += slot.param->value.size();
  return n;
}

template <class T>
std::size_t Model<T>::trainable_count() const {
  std::size_t n = 0;
  for (auto& slot : const_cast<Model*>(this)->parameters()) {
    n += slot.param->value.size() - slot.param->frozen_count();
  }
  return n;
}

template <class T>
void Model<T>::expand_output(std::size_t new_classes, const Tensor2<T>* init_rows) {
  if (new_classes == 0) return;
  auto& out = layers_.back();
  const std::size_t d = out.in_dim();
  Tensor2<T> rows;
  if (init_rows != nullptr) {
    require_shape(*init_rows, new_classes, d, "expand_output: init_rows");
    rows = *init_rows;
  } else {
    rows = he_normal<T>(new_classes, d, rng_);
  }
  out.weight.append_rows(rows);
  out.bias = [&] {
    Parameter<T> b(Tensor2<T>(1, out.out_dim()));
    for (std::size_t c = 0; c < out.bias.value.cols(); ++c) {
      b.value(0, c) = out.bias.value(0, c);
      b.frozen[c] = out.bias.frozen[c];
    }
    return b;
  }();
  spec_.output_dim = out.out_dim();
}

template <class T>
void Model<T>::clear_frozen() {
  for (auto& slot : parameters()) slot.param->unfreeze_all();
}

template <class T>
void Model<T>::freeze_layer(std::size_t index) {
  auto& layer = layers_.at(index);
  layer.weight.freeze_all();
  layer.bias.freeze_all();
}

template <class T>
bool Model<T>::has_adapters() const {
  for (const auto& l : layers_) {
    if (l.lora) return true;
  }
  return false;
}

template struct Parameter<float>;
template struct Parameter<double>;
template class Model<float>;
template class Model<double>;
template Tensor2<float> he_normal<float>(std::size_t, std::size_t, std::mt19937_64&);
template Tensor2<double> he_normal<double>(std::size_t, std::size_t, std::mt19937_64&);
template std::vector<std::size_t> argmax_rows<float>(const Tensor2<float>&);
template std::vector<std::size_t> argmax_rows<double>(const Tensor2<double>&);

}  // namespace sgmlab
