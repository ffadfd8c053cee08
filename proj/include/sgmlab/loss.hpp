#pragma once

#include <vector>

#include "sgmlab/model.hpp"
#include "sgmlab/tensor.hpp"

namespace sgmlab {

template <class T>
struct LossGrad {
  double value = 0.0;
  Tensor2<T> grad;  // dL/dlogits
};

// Row-wise softmax of logits / temperature, computed in 64-bit.
template <class T>
Tensor2<double> softmax(const Tensor2<T>& logits, double temperature = 1.0);

template <class T>
Tensor2<T> one_hot(const std::vector<std::size_t>& labels, std::size_t classes);

// Mean over the batch of -sum_k t[k] log softmax(z)[k]. Target rows must be
// distributions (nonnegative, summing to 1 within 1e-9 at 64-bit).
template <class T>
LossGrad<T> cross_entropy(const Tensor2<T>& logits, const Tensor2<T>& targets);

// Cross-entropy followed by backpropagation into the model's gradient buffers.
template <class T>
double loss_and_backward(Model<T>& model, const ForwardPass<T>& pass, const Tensor2<T>& targets);

template <class T>
struct DerppLossGrad {
  double value = 0.0;
  double ce_new = 0.0;
  double mse_replay = 0.0;
  double ce_replay = 0.0;
  Tensor2<T> grad_new;
  Tensor2<T> grad_replay;
};

// CE(new) + alpha * MSE(replay logits, stored logits) + beta * CE(replay).
// stored_logits[r] may be shorter than the current class count (captured when
// fewer classes existed); the MSE covers the stored columns. Rows with no
// stored logits are left out of the alpha term.
template <class T>
DerppLossGrad<T> derpp_loss(const Tensor2<T>& new_logits, const Tensor2<T>& targets,
                            const Tensor2<T>& replay_logits,
                            const std::vector<std::vector<double>>& stored_logits,
                            const Tensor2<T>& replay_targets, double alpha, double beta);

// CE(student) + lambda * T^2 * KL(softmax(teacher/T) || softmax(student/T)),
// where the KL covers the teacher's class columns only.
template <class T>
LossGrad<T> lwf_loss(const Tensor2<T>& student_logits, const Tensor2<T>& teacher_logits,
                     const Tensor2<T>& targets, double temperature, double lambda);

}  // namespace sgmlab
