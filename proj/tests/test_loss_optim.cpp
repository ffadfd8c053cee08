#include <cmath>

#include "doctest.h"
#include "sgmlab/loss.hpp"
#include "sgmlab/optimizer.hpp"
#include "sgmlab/trainer.hpp"
#include "support.hpp"

using namespace sgmlab;
using testing::random_tensor;

TEST_CASE("cross-entropy scalar cases") {
  const auto uniform = cross_entropy(Tensor2<double>(1, 3, {0, 0, 0}), Tensor2<double>(1, 3, {1, 0, 0}));
  CHECK(uniform.value == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  const auto sure = cross_entropy(Tensor2<double>(1, 2, {10, -10}), Tensor2<double>(1, 2, {1, 0}));
  CHECK(sure.value == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-9));
  CHECK(sure.value < 3e-9);
}

TEST_CASE("cross-entropy gradient is (softmax - target) / batch") {
  std::mt19937_64 rng(1);
  const auto z = random_tensor<double>(3, 4, rng);
  const auto t = testing::random_targets(3, 4, rng);
  const auto r = cross_entropy(z, t);
  const auto p = softmax(z);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k)
      CHECK(r.grad(i, k) == doctest::Approx((p(i, k) - t(i, k)) / 3.0).epsilon(1e-12));
}

TEST_CASE("cross-entropy rejects targets that are not distributions") {
  CHECK_THROWS(cross_entropy(Tensor2<double>(1, 2, {0, 0}), Tensor2<double>(1, 2, {0.7, 0.7})));
}

TEST_CASE("DER++ loss reduces to cross-entropy and has an MSE fixed point") {
  std::mt19937_64 rng(2);
  const auto zn = random_tensor<double>(2, 3, rng);
  const auto tn = testing::random_targets(2, 3, rng);
  const auto zr = random_tensor<double>(2, 3, rng);
  const auto tr = testing::random_targets(2, 3, rng);
  std::vector<std::vector<double>> stored{{zr(0, 0), zr(0, 1), zr(0, 2)}, {zr(1, 0), zr(1, 1), zr(1, 2)}};
  const auto plain = derpp_loss(zn, tn, zr, stored, tr, 0.0, 0.0);
  CHECK(plain.value == doctest::Approx(cross_entropy(zn, tn).value).epsilon(1e-14));
  const auto fixed = derpp_loss(zn, tn, zr, stored, tr, 0.1, 0.9);
  CHECK(fixed.mse_replay == 0.0);
  CHECK(fixed.value == doctest::Approx(plain.value + 0.9 * cross_entropy(zr, tr).value).epsilon(1e-12));
  // Stored logits from an earlier, smaller head cover only their own columns.
  std::vector<std::vector<double>> shorter{{zr(0, 0) + 1.0, zr(0, 1)}, {}};
  const auto partial = derpp_loss(zn, tn, zr, shorter, tr, 1.0, 0.0);
  CHECK(partial.mse_replay > 0.0);
  CHECK(partial.grad_replay(1, 0) == 0.0);
  CHECK(partial.grad_replay(0, 2) == 0.0);
}

TEST_CASE("LwF distillation term") {
  const Tensor2<double> student(1, 2, {0, 0});
  const Tensor2<double> target(1, 2, {1, 0});
  const Tensor2<double> teacher(1, 2, {std::log(0.8), std::log(0.2)});
  const double ce = cross_entropy(student, target).value;
  const auto r = lwf_loss(student, teacher, target, 1.0, 1.0);
  // KL([0.8,0.2] || [0.5,0.5]) = 0.8 ln 1.6 + 0.2 ln 0.4
  CHECK(r.value - ce == doctest::Approx(0.8 * std::log(1.6) + 0.2 * std::log(0.4)).epsilon(1e-12));
  CHECK(r.value - ce == doctest::Approx(0.19274).epsilon(1e-4));
  CHECK(lwf_loss(student, student, target, 2.0, 1.0).value == doctest::Approx(ce).epsilon(1e-14));
  CHECK(lwf_loss(student, teacher, target, 2.0, 0.0).value == doctest::Approx(ce).epsilon(1e-14));
}

TEST_CASE("AdamW follows the scalar moment recurrence") {
  Model<double> m(ModelSpec{1, {}, 1, Activation::relu}, 1);
  m.output_layer().weight.value(0, 0) = 0.7;
  m.output_layer().bias.freeze_all();
  AdamWConfig cfg;
  cfg.weight_decay = 0.01;
  OptimState<double> st(cfg);
  const double grads[] = {0.5, -1.25, 2.0, 0.0, 0.3};
  double w = 0.7, mm = 0.0, vv = 0.0;
  const double lr = 0.05;
  // The output layer sits at depth 0, so layer decay does not scale it.
  for (int t = 1; t <= 5; ++t) {
    const double g = grads[t - 1];
    m.output_layer().weight.grad(0, 0) = g;
    optimizer_step(m, st, lr);
    mm = 0.9 * mm + 0.1 * g;
    vv = 0.999 * vv + 0.001 * g * g;
    const double mh = mm / (1.0 - std::pow(0.9, t));
    const double vh = vv / (1.0 - std::pow(0.999, t));
    w = w - lr * 0.01 * w;
    w = w - lr * mh / (std::sqrt(vh) + 1e-8);
    CHECK(m.output_layer().weight.value(0, 0) == doctest::Approx(w).epsilon(1e-15));
  }
}

TEST_CASE("AdamW layer decay scales deeper layers") {
  Model<double> m(ModelSpec{1, {1, 1}, 1, Activation::relu}, 1);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  cfg.layer_decay = 0.9;
  OptimState<double> st(cfg);
  std::vector<double> before;
  for (auto& l : m.layers()) {
    before.push_back(l.weight.value(0, 0));
    l.weight.grad(0, 0) = 1.0;
  }
  optimizer_step(m, st, 0.1);
  // First step: m_hat = g, v_hat = g^2, so the move is lr * gamma^depth (minus eps effects).
  for (std::size_t l = 0; l < 3; ++l) {
    const double moved = before[l] - m.layers()[l].weight.value(0, 0);
    CHECK(moved == doctest::Approx(0.1 * std::pow(0.9, m.depth_of(l))).epsilon(1e-7));
  }
}

TEST_CASE("AdamW leaves frozen and null updates alone") {
  std::mt19937_64 rng(4);
  Model<double> m(ModelSpec{3, {4}, 2, Activation::relu}, 3);
  const auto x = random_tensor<double>(5, 3, rng);
  const auto t = testing::random_targets(5, 2, rng);
  SUBCASE("everything frozen") {
    for (auto& s : m.parameters()) s.param->freeze_all();
    auto before = m;
    loss_and_backward(m, m.forward(x), t);
    OptimState<double> st;
    optimizer_step(m, st, 0.1);
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
      CHECK(m.layers()[l].weight.value == before.layers()[l].weight.value);
      CHECK(m.layers()[l].bias.value == before.layers()[l].bias.value);
    }
  }
  SUBCASE("zero gradient and no weight decay") {
    auto before = m;
    m.zero_grad();
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    OptimState<double> st(cfg);
    optimizer_step(m, st, 0.1);
    for (std::size_t l = 0; l < m.num_layers(); ++l)
      CHECK(m.layers()[l].weight.value == before.layers()[l].weight.value);
  }
  SUBCASE("non-finite gradient aborts before any change") {
    auto before = m;
    m.zero_grad();
    m.layers()[0].weight.grad(0, 0) = std::nan("");
    m.output_layer().weight.grad(0, 0) = 1.0;
    OptimState<double> st;
    CHECK_THROWS_AS(optimizer_step(m, st, 0.1), NumericError);
    CHECK(m.output_layer().weight.value == before.output_layer().weight.value);
  }
}

TEST_CASE("learning-rate schedules") {
  LrSchedule s;
  s.base_lr = 0.01;
  s.layer_decay = 0.9;
  SUBCASE("constant") {
    for (std::size_t step : {0, 17, 100}) {
      CHECK(lr_at(s, step, 100, 0) == 0.01);
      CHECK(lr_at(s, step, 100, 2) == doctest::Approx(0.01 * 0.81).epsilon(1e-15));
    }
  }
  SUBCASE("one-cycle") {
    s.kind = ScheduleKind::one_cycle;
    CHECK(lr_at(s, 0, 1000, 0) == doctest::Approx(0.01 / 25.0).epsilon(1e-15));
    CHECK(lr_at(s, 300, 1000, 0) == 0.01);
    CHECK(lr_at(s, 1000, 1000, 0) == doctest::Approx(0.01 / 1e4).epsilon(1e-12));
    CHECK(lr_at(s, 300, 1000, 2) / lr_at(s, 300, 1000, 0) == doctest::Approx(0.81).epsilon(1e-15));
    double prev = 0.0;
    for (std::size_t i = 0; i <= 300; ++i) {
      const double v = lr_at(s, i, 1000, 0);
      CHECK(v >= prev);
      prev = v;
    }
    for (std::size_t i = 301; i <= 1000; ++i) {
      const double v = lr_at(s, i, 1000, 0);
      CHECK(v <= prev);
      prev = v;
    }
    CHECK_THROWS(lr_at(s, 1001, 1000, 0));
  }
}
