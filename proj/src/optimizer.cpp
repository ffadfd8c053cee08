#include "sgmlab/optimizer.hpp"

#include <cmath>
#include <string>

namespace sgmlab {

template <class T>
void optimizer_step(Model<T>& model, OptimState<T>& state, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("optimizer_step: lr must be > 0");
  auto params = model.parameters();

  if (state.m.empty()) {
    for (const auto& slot : params) {
      state.m.emplace_back(slot.param->value.rows(), slot.param->value.cols());
      state.v.emplace_back(slot.param->value.rows(), slot.param->value.cols());
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("optimizer_step: optimizer state tracks " + std::to_string(state.m.size()) +
                     " parameters, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& val = params[i].param->value;
    require_shape(state.m[i], val.rows(), val.cols(), "optimizer_step: moment buffer");
    const auto g = params[i].param->grad.flat();
    const auto& frozen = params[i].param->frozen;
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!frozen[k] && !std::isfinite(g[k])) {
        throw NumericError("non-finite gradient in " + params[i].name + " at index " +
                           std::to_string(k) + "; run aborted");
      }
    }
  }

  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i].param;
    const double plr = lr * std::pow(c.layer_decay, params[i].depth);
    auto w = p.value.flat();
    const auto g = p.grad.flat();
    auto m = state.m[i].flat();
    auto v = state.v[i].flat();
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (p.frozen[k]) continue;
      const double gk = static_cast<double>(g[k]);
      const double mk = c.beta1 * static_cast<double>(m[k]) + (1.0 - c.beta1) * gk;
      const double vk = c.beta2 * static_cast<double>(v[k]) + (1.0 - c.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      double wk = static_cast<double>(w[k]);
      wk -= plr * c.weight_decay * wk;
      wk -= plr * (mk / bc1) / (std::sqrt(vk / bc2) + c.eps);
      w[k] = static_cast<T>(wk);
    }
  }
}

template void optimizer_step<float>(Model<float>&, OptimState<float>&, double);
template void optimizer_step<double>(Model<double>&, OptimState<double>&, double);

}  // namespace sgmlab
