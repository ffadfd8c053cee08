#include "sgmlab/loss.hpp"

#include <cmath>
#include <type_traits>

#include "sgmlab/log.hpp"

namespace sgmlab {

namespace {

template <class T>
constexpr double distribution_tolerance() {
  return std::is_same_v<T, double> ? 1e-9 : 1e-5;
}

// log(sum_k exp(z_k - max)) evaluated as log1p over the non-maximal terms,
// which keeps near-zero losses accurate.
template <class T>
double log_sum_exp_shifted(std::span<const T> z, double scale, double& max_out) {
  std::size_t arg = 0;
  for (std::size_t c = 1; c < z.size(); ++c) {
    if (z[c] > z[arg]) arg = c;
  }
  const double m = static_cast<double>(z[arg]) * scale;
  double rest = 0.0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    if (c != arg) rest += std::exp(static_cast<double>(z[c]) * scale - m);
  }
  max_out = m;
  return std::log1p(rest);
}

template <class T>
void validate_targets(const Tensor2<T>& targets) {
  const double tol = distribution_tolerance<T>();
  for (std::size_t r = 0; r < targets.rows(); ++r) {
    double sum = 0.0;
    for (T v : targets.row(r)) {
      if (!(v >= T(0))) {
        throw std::invalid_argument("target row " + std::to_string(r) +
                                    " has a negative or NaN entry");
      }
      sum += static_cast<double>(v);
    }
    if (std::abs(sum - 1.0) > tol) {
      throw std::invalid_argument("target row " + std::to_string(r) + " sums to " +
                                  std::to_string(sum) + ", not 1");
    }
  }
}

// Adds mean-reduced CE and its gradient (scaled by `weight`) into `grad`.
template <class T>
double accumulate_ce(const Tensor2<T>& logits, const Tensor2<T>& targets, double weight,
                     Tensor2<T>& grad) {
  const std::size_t n = logits.rows();
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    auto z = logits.row(r);
    auto t = targets.row(r);
    double m = 0.0;
    const double ls = log_sum_exp_shifted(z, 1.0, m);
    double row_loss = 0.0;
    double tsum = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
      const double tc = static_cast<double>(t[c]);
      row_loss += tc * (m - static_cast<double>(z[c]));
      tsum += tc;
    }
    row_loss += tsum * ls;
    total += row_loss;
    auto g = grad.row(r);
    for (std::size_t c = 0; c < z.size(); ++c) {
      const double p = std::exp(static_cast<double>(z[c]) - m - ls);
      g[c] += static_cast<T>(weight * (p - static_cast<double>(t[c])) / static_cast<double>(n));
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace

template <class T>
Tensor2<double> softmax(const Tensor2<T>& logits, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax temperature must be > 0");
  const double scale = 1.0 / temperature;
  Tensor2<double> out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto z = logits.row(r);
    double m = 0.0;
    const double ls = log_sum_exp_shifted(z, scale, m);
    auto o = out.row(r);
    for (std::size_t c = 0; c < z.size(); ++c) {
      o[c] = std::exp(static_cast<double>(z[c]) * scale - m - ls);
    }
  }
  return out;
}

template <class T>
Tensor2<T> one_hot(const std::vector<std::size_t>& labels, std::size_t classes) {
  Tensor2<T> out(labels.size(), classes);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] >= classes) {
      throw std::out_of_range("one_hot: label " + std::to_string(labels[r]) + " >= " +
                              std::to_string(classes));
    }
    out(r, labels[r]) = T(1);
  }
  return out;
}

template <class T>
LossGrad<T> cross_entropy(const Tensor2<T>& logits, const Tensor2<T>& targets) {
  require_shape(targets, logits.rows(), logits.cols(), "cross_entropy: targets");
  validate_targets(targets);
  LossGrad<T> out;
  out.grad = Tensor2<T>(logits.rows(), logits.cols());
  out.value = accumulate_ce(logits, targets, 1.0, out.grad);
  return out;
}

template <class T>
double loss_and_backward(Model<T>& model, const ForwardPass<T>& pass, const Tensor2<T>& targets) {
  auto lg = cross_entropy(pass.logits, targets);
  model.backward(pass, lg.grad);
  return lg.value;
}

template <class T>
DerppLossGrad<T> derpp_loss(const Tensor2<T>& new_logits, const Tensor2<T>& targets,
                            const Tensor2<T>& replay_logits,
                            const std::vector<std::vector<double>>& stored_logits,
                            const Tensor2<T>& replay_targets, double alpha, double beta) {
  if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("derpp: alpha and beta must be >= 0");
  require_shape(targets, new_logits.rows(), new_logits.cols(), "derpp: targets");
  require_shape(replay_targets, replay_logits.rows(), replay_logits.cols(),
                "derpp: replay_targets");
  if (stored_logits.size() != replay_logits.rows()) {
    throw ShapeError("derpp: " + std::to_string(stored_logits.size()) +
                     " stored logit rows for " + std::to_string(replay_logits.rows()) +
                     " replay rows");
  }
  validate_targets(targets);
  validate_targets(replay_targets);

  DerppLossGrad<T> out;
  out.grad_new = Tensor2<T>(new_logits.rows(), new_logits.cols());
  out.grad_replay = Tensor2<T>(replay_logits.rows(), replay_logits.cols());
  out.ce_new = accumulate_ce(new_logits, targets, 1.0, out.grad_new);

  if (alpha > 0.0) {
    std::size_t rows_with_logits = 0;
    for (const auto& s : stored_logits) rows_with_logits += s.empty() ? 0 : 1;
    if (rows_with_logits < stored_logits.size()) {
      log::warn("derpp: " + std::to_string(stored_logits.size() - rows_with_logits) +
                " replay samples have no stored logits; alpha term skipped for them");
    }
    if (rows_with_logits > 0) {
      const double nr = static_cast<double>(rows_with_logits);
      double mse = 0.0;
      for (std::size_t r = 0; r < stored_logits.size(); ++r) {
        const auto& s = stored_logits[r];
        if (s.empty()) continue;
        if (s.size() > replay_logits.cols()) {
          throw ShapeError("derpp: stored logits wider than current output layer");
        }
        const double w = static_cast<double>(s.size());
        double row = 0.0;
        for (std::size_t c = 0; c < s.size(); ++c) {
          const double diff = static_cast<double>(replay_logits(r, c)) - s[c];
          row += diff * diff;
          out.grad_replay(r, c) += static_cast<T>(alpha * 2.0 * diff / (w * nr));
        }
        mse += row / w;
      }
      out.mse_replay = mse / nr;
    }
  }
  if (beta > 0.0) {
    out.ce_replay = accumulate_ce(replay_logits, replay_targets, beta, out.grad_replay);
  }
  out.value = out.ce_new + alpha * out.mse_replay + beta * out.ce_replay;
  return out;
}

template <class T>
LossGrad<T> lwf_loss(const Tensor2<T>& student_logits, const Tensor2<T>& teacher_logits,
                     const Tensor2<T>& targets, double temperature, double lambda) {
  if (!(temperature > 0.0)) throw std::invalid_argument("lwf: temperature must be > 0");
  if (teacher_logits.rows() != student_logits.rows() || teacher_logits.cols() == 0 ||
      teacher_logits.cols() > student_logits.cols()) {
    throw ShapeError("lwf: teacher logits " +
                     shape_str(teacher_logits.rows(), teacher_logits.cols()) +
                     " incompatible with student " +
                     shape_str(student_logits.rows(), student_logits.cols()));
  }
  LossGrad<T> out = cross_entropy(student_logits, targets);
  if (lambda == 0.0 || student_logits.rows() == 0) return out;

  const std::size_t n = student_logits.rows();
  const std::size_t kt = teacher_logits.cols();
  Tensor2<T> student_old(n, kt);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < kt; ++c) student_old(r, c) = student_logits(r, c);
  }
  const auto pt = softmax(teacher_logits, temperature);
  const auto ps = softmax(student_old, temperature);
  double kl = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < kt; ++c) {
      const double p = pt(r, c);
      if (p > 0.0) kl += p * (std::log(p) - std::log(ps(r, c)));
      // d/dz_s of T^2 KL = T (ps - pt)
      out.grad(r, c) += static_cast<T>(lambda * temperature * (ps(r, c) - p) /
                                       static_cast<double>(n));
    }
  }
  kl /= static_cast<double>(n);
  out.value += lambda * temperature * temperature * kl;
  return out;
}

#define SGMLAB_INSTANTIATE(T)                                                                \
  template Tensor2<double> softmax<T>(const Tensor2<T>&, double);                            \
  template Tensor2<T> one_hot<T>(const std::vector<std::size_t>&, std::size_t);              \
  template LossGrad<T> cross_entropy<T>(const Tensor2<T>&, const Tensor2<T>&);               \
  template double loss_and_backward<T>(Model<T>&, const ForwardPass<T>&, const Tensor2<T>&); \
  template DerppLossGrad<T> derpp_loss<T>(const Tensor2<T>&, const Tensor2<T>&,              \
                                          const Tensor2<T>&,                                 \
                                          const std::vector<std::vector<double>>&,           \
                                          const Tensor2<T>&, double, double);                \
  template LossGrad<T> lwf_loss<T>(const Tensor2<T>&, const Tensor2<T>&, const Tensor2<T>&,  \
                                   double, double);

SGMLAB_INSTANTIATE(float)
SGMLAB_INSTANTIATE(double)

#undef SGMLAB_INSTANTIATE

}  // namespace sgmlab
