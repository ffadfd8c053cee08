#include "sgmlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <set>

#include "sgmlab/log.hpp"
#include "sgmlab/loss.hpp"

namespace sgmlab {

ScheduleKind parse_schedule(const std::string& s) {
  if (s == "constant") return ScheduleKind::constant;
  if (s == "one_cycle") return ScheduleKind::one_cycle;
  throw std::invalid_argument("unknown lr schedule '" + s + "' (expected constant|one_cycle)");
}

std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::constant ? "constant" : "one_cycle";
}

double lr_at(const LrSchedule& s, std::size_t step, std::size_t total_steps, int depth) {
  if (step > total_steps) throw std::out_of_range("lr_at: step beyond total_steps");
  const double decay = std::pow(s.layer_decay, depth);
  if (s.kind == ScheduleKind::constant || total_steps == 0) return s.base_lr * decay;
  const double total = static_cast<double>(total_steps);
  const double t = static_cast<double>(step);
  const double warm = s.warmup_fraction * total;
  const double start = s.base_lr / s.start_divisor;
  const double final_lr = s.base_lr / s.final_divisor;
  double lr;
  if (t < warm) {
    lr = s.base_lr - (s.base_lr - start) * (1.0 - t / warm);
  } else if (total > warm) {
    const double progress = (t - warm) / (total - warm);
    lr = s.base_lr - (s.base_lr - final_lr) * (1.0 - std::cos(std::numbers::pi * progress)) / 2.0;
  } else {
    lr = s.base_lr;
  }
  return lr * decay;
}

Strategy parse_strategy(const std::string& s) {
  if (s == "naive_finetune") return Strategy::naive_finetune;
  if (s == "rehearsal" || s == "vanilla") return Strategy::rehearsal;
  if (s == "output_only") return Strategy::output_only;
  if (s == "derpp") return Strategy::derpp;
  if (s == "gdumb") return Strategy::gdumb;
  if (s == "lwf") return Strategy::lwf;
  throw std::invalid_argument("unknown strategy '" + s +
                              "' (expected naive_finetune|rehearsal|output_only|derpp|gdumb|lwf)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::naive_finetune: return "naive_finetune";
    case Strategy::rehearsal: return "rehearsal";
    case Strategy::output_only: return "output_only";
    case Strategy::derpp: return "derpp";
    case Strategy::gdumb: return "gdumb";
    case Strategy::lwf: return "lwf";
  }
  return "?";
}

template <class T>
EvalSet<T> make_eval_set(const Dataset& data, const std::vector<std::size_t>& indices) {
  EvalSet<T> set;
  set.x = gather_features<T>(data, indices);
  set.y.reserve(indices.size());
  for (auto i : indices) set.y.push_back(data.labels[i]);
  return set;
}

template <class T>
double accuracy(const Model<T>& model, const EvalSet<T>& set) {
  if (set.size() == 0) throw std::invalid_argument("accuracy: empty evaluation set");
  const auto pred = argmax_rows(model.logits(set.x));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == set.y[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

namespace {

AdamWConfig with_decay(AdamWConfig c, const LrSchedule& lr) {
  c.layer_decay = lr.layer_decay;
  return c;
}

std::vector<std::size_t> labels_of(const Dataset& data, const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(data.labels[i]);
  return out;
}

template <class T>
Tensor2<T> rows_of(const Tensor2<T>& m, std::size_t begin, std::size_t end) {
  Tensor2<T> out(end - begin, m.cols());
  for (std::size_t r = begin; r < end; ++r) {
    std::copy(m.row(r).begin(), m.row(r).end(), out.row(r - begin).begin());
  }
  return out;
}

}  // namespace

template <class T>
std::size_t fit_supervised(Model<T>& model, const Dataset& data,
                           const std::vector<std::size_t>& samples, const FitConfig& config,
                           std::mt19937_64& rng) {
  const auto& budget = config.budget;
  if (budget.iterations == 0) return 0;
  if (samples.empty()) throw std::invalid_argument("fit_supervised: no samples");
  OptimState<T> optim(with_decay(config.adamw, config.lr));
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  std::vector<std::size_t> batch(budget.batch_size);
  for (std::size_t step = 0; step < budget.iterations; ++step) {
    for (auto& b : batch) b = samples[pick(rng)];
    const auto x = gather_features<T>(data, batch);
    const auto pass = model.forward(x);
    const auto targets = one_hot<T>(labels_of(data, batch), model.output_dim());
    loss_and_backward(model, pass, targets);
    optimizer_step(model, optim, lr_at(config.lr, step, budget.iterations, 0));
  }
  return budget.presentations();
}

template <class T>
std::size_t pretrain(Model<T>& model, const Dataset& data, const Session& first,
                     const FitConfig& config, std::mt19937_64& rng) {
  if (model.output_dim() != first.classes.size()) {
    throw std::invalid_argument("pretrain: model has " + std::to_string(model.output_dim()) +
                                " outputs but S_1 has " + std::to_string(first.classes.size()) +
                                " classes");
  }
  return fit_supervised(model, data, first.samples, config, rng);
}

template <class T>
JointRef joint_train(const ModelSpec& spec, const Dataset& data,
                     const std::vector<std::size_t>& samples, const FitConfig& config,
                     const SessionEval<T>& eval, std::uint64_t seed) {
  Model<T> model(spec, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  fit_supervised(model, data, samples, config, rng);
  return {accuracy(model, eval.old_set), accuracy(model, eval.new_set),
          accuracy(model, eval.all_set)};
}

// ---------------------------------------------------------------------------

template <class T>
ContinualLearner<T>::ContinualLearner(Model<T> model, const Dataset& data, MethodConfig method,
                                      SessionConfig session, std::uint64_t seed)
    : model_(std::move(model)),
      data_(&data),
      method_(std::move(method)),
      session_(session),
      buffer_(method_.uses_buffer() ? method_.buffer_policy : BufferPolicy::unlimited_cumulative,
              method_.uses_buffer() ? method_.buffer_capacity : std::nullopt),
      soft_(model_.output_dim()),
      rng_(seed),
      lora_seed_(seed ^ 0xa0761d6478bd642full) {
  if (session_.eval_every == 0) throw std::invalid_argument("eval_every must be >= 1");
  if (session_.budget.batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  if (session_.freeze_first_layers > model_.num_hidden()) {
    throw std::invalid_argument("freeze_first_layers exceeds hidden layer count");
  }
}

template <class T>
void ContinualLearner<T>::insert_into_buffer(std::size_t sample) {
  BufferSample s{sample, data_->labels[sample], {}};
  if (method_.strategy == Strategy::derpp) {
    const auto z = model_.logits(gather_features<T>(*data_, {sample}));
    s.logits.assign(z.row(0).begin(), z.row(0).end());
  }
  buffer_.insert(std::move(s), rng_);
}

template <class T>
void ContinualLearner<T>::seed_buffer(const Session& first) {
  if (!method_.uses_buffer()) return;
  std::vector<std::size_t> order = first.samples;
  std::shuffle(order.begin(), order.end(), rng_);
  for (auto i : order) insert_into_buffer(i);
}

template <class T>
std::size_t ContinualLearner<T>::prepare_session(const Session& session, SessionReport& report) {
  const std::size_t k_before = model_.output_dim();
  std::size_t k_after = k_before;
  for (auto c : session.classes) k_after = std::max(k_after, c + 1);
  const std::size_t new_classes = k_after - k_before;
  report.new_classes = new_classes;

  if (method_.strategy == Strategy::lwf) teacher_ = clone_snapshot(model_);

  if (new_classes > 0) {
    if (method_.mechanisms.weight_init) {
      std::vector<std::size_t> idx;
      for (auto i : session.samples) {
        if (data_->labels[i] >= k_before) idx.push_back(i);
      }
      const auto emb = model_.forward(gather_features<T>(*data_, idx)).embeddings();
      std::vector<std::vector<std::size_t>> rows_by_class(new_classes);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        rows_by_class[data_->labels[idx[r]] - k_before].push_back(r);
      }
      std::vector<Tensor2<T>> by_class;
      for (const auto& rows : rows_by_class) {
        Tensor2<T> h(rows.size(), emb.cols());
        for (std::size_t r = 0; r < rows.size(); ++r) {
          std::copy(emb.row(rows[r]).begin(), emb.row(rows[r]).end(), h.row(r).begin());
        }
        by_class.push_back(std::move(h));
      }
      const auto init = init_new_class_weights(by_class, model_.rng());
      model_.expand_output(new_classes, &init);
    } else {
      model_.expand_output(new_classes);
    }
    soft_.grow(new_classes);
  }

  model_.clear_frozen();
  if (method_.mechanisms.lora && method_.strategy != Strategy::output_only) {
    std::set<std::size_t> layers;
    for (std::size_t l = session_.freeze_first_layers; l < model_.num_hidden(); ++l) {
      layers.insert(l);
    }
    inject_lora(model_, layers, method_.mechanisms.lora_rank, lora_seed_++);
    report.audit.lora_hosts = layers.size();
  }
  FreezePolicy policy;
  policy.frozen_layer_prefix = session_.freeze_first_layers;
  if (method_.mechanisms.oocf) {
    for (std::size_t k = 0; k < k_before; ++k) policy.old_classes.insert(k);
  }
  apply_oocf(model_, policy);
  if (method_.strategy == Strategy::output_only) {
    for (std::size_t l = 0; l < model_.num_hidden(); ++l) model_.freeze_layer(l);
  }
  report.audit.oocf_rows = policy.old_classes.size();
  report.audit.prefix_layers = policy.frozen_layer_prefix;
  report.trainable_params = model_.trainable_count();
  optim_ = OptimState<T>(with_decay(method_.adamw, method_.lr));
  return k_before;
}

template <class T>
typename ContinualLearner<T>::Snapshot ContinualLearner<T>::snapshot_frozen() {
  Snapshot snap;
  for (auto& slot : model_.parameters()) {
    const auto& p = *slot.param;
    std::vector<T> vals;
    for (std::size_t i = 0; i < p.frozen.size(); ++i) {
      if (p.frozen[i]) vals.push_back(p.value.data()[i]);
    }
    if (!vals.empty()) snap.frozen_values.emplace_back(&p, std::move(vals));
  }
  return snap;
}

template <class T>
void ContinualLearner<T>::audit_frozen(const Snapshot& snap, FreezeAudit& audit) {
  for (const auto& [p, vals] : snap.frozen_values) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < p->frozen.size(); ++i) {
      if (!p->frozen[i]) continue;
      audit.checked += 1;
      if (k >= vals.size() || std::memcmp(&vals[k], &p->value.data()[i], sizeof(T)) != 0) {
        audit.violations += 1;
      }
      ++k;
    }
  }
}

template <class T>
void ContinualLearner<T>::record(std::size_t j, std::size_t step, const SessionEval<T>& eval,
                                 MetricLedger& ledger, SessionReport& report, double loss) {
  CurvePoint p{step, accuracy(model_, eval.old_set), accuracy(model_, eval.new_set),
               accuracy(model_, eval.all_set), loss};
  ledger.record_eval(j, step, p.acc_old, p.acc_new, p.acc_all);
  report.curve.push_back(p);
}

template <class T>
Tensor2<T> ContinualLearner<T>::make_targets(const Tensor2<T>& logits,
                                             const std::vector<std::size_t>& labels) {
  if (!method_.mechanisms.soft_targets) return one_hot<T>(labels, logits.cols());
  const auto probs = softmax(logits);
  const auto pred = argmax_rows(probs);
  Tensor2<T> t(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const auto row = soft_.build_target(labels[r], pred[r]);
    for (std::size_t c = 0; c < row.size(); ++c) t(r, c) = static_cast<T>(row[c]);
  }
  // Table updates land after every target of this step is built.
  for (std::size_t r = 0; r < labels.size(); ++r) {
    soft_.observe(labels[r], probs.row(r), method_.mechanisms.gate);
  }
  return t;
}

template <class T>
double ContinualLearner<T>::train_step(const std::vector<std::size_t>& new_samples,
                                       const std::vector<std::size_t>& replay_positions,
                                       double lr) {
  std::vector<std::size_t> idx = new_samples;
  for (auto pos : replay_positions) idx.push_back(buffer_.at(pos).index);
  const auto labels = labels_of(*data_, idx);
  const auto x = gather_features<T>(*data_, idx);
  const auto pass = model_.forward(x);
  const auto targets = make_targets(pass.logits, labels);

  double loss = 0.0;
  Tensor2<T> grad;
  if (method_.strategy == Strategy::derpp && !replay_positions.empty()) {
    const std::size_t n_new = new_samples.size();
    std::vector<std::vector<double>> stored;
    for (auto pos : replay_positions) stored.push_back(buffer_.at(pos).logits);
    auto lg = derpp_loss(rows_of(pass.logits, 0, n_new), rows_of(targets, 0, n_new),
                         rows_of(pass.logits, n_new, idx.size()), stored,
                         rows_of(targets, n_new, idx.size()), method_.derpp_alpha,
                         method_.derpp_beta);
    loss = lg.value;
    grad = std::move(lg.grad_new);
    grad.append_rows(lg.grad_replay);
  } else if (method_.strategy == Strategy::lwf) {
    if (!teacher_) throw std::logic_error("lwf: teacher missing");
    auto lg = lwf_loss(pass.logits, teacher_->logits(x), targets, method_.lwf_temperature,
                       method_.lwf_lambda);
    loss = lg.value;
    grad = std::move(lg.grad);
  } else {
    auto lg = cross_entropy(pass.logits, targets);
    loss = lg.value;
    grad = std::move(lg.grad);
  }
  model_.backward(pass, grad);
  optimizer_step(model_, optim_, lr);
  total_updates_ += 1;
  return loss;
}

template <class T>
void ContinualLearner<T>::finish_session(const Session& session, SessionReport& report,
                                         const SessionEval<T>& eval) {
  report.had_adapters_at_end = model_.has_adapters();
  if (report.had_adapters_at_end) {
    const auto before = model_.logits(eval.all_set.x);
    fold_lora(model_);
    const auto after = model_.logits(eval.all_set.x);
    double diff = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < before.size(); ++i) {
      diff = std::max(diff, std::abs(double(before.data()[i]) - double(after.data()[i])));
      scale = std::max(scale, std::abs(double(before.data()[i])));
    }
    report.fold_max_abs_diff = diff;
    report.fold_logit_scale = scale;
  }
  report.adapters_after_fold = model_.has_adapters();
  model_.clear_frozen();
  teacher_.reset();
  if (!method_.online && method_.uses_buffer()) {
    std::vector<std::size_t> order = session.samples;
    std::shuffle(order.begin(), order.end(), rng_);
    for (auto i : order) insert_into_buffer(i);
  }
}

template <class T>
SessionReport ContinualLearner<T>::run_session(std::size_t j, const Session& session,
                                               const SessionEval<T>& eval,
                                               MetricLedger& ledger) {
  return method_.online ? run_online_session(j, session, eval, ledger)
                        : run_offline_session(j, session, eval, ledger);
}

template <class T>
SessionReport ContinualLearner<T>::run_offline_session(std::size_t j, const Session& session,
                                                       const SessionEval<T>& eval,
                                                       MetricLedger& ledger) {
  if (session.samples.empty()) throw std::invalid_argument("run_session: empty session");
  const auto t0 = std::chrono::steady_clock::now();
  SessionReport report;
  report.session = j;
  prepare_session(session, report);
  const auto snap = snapshot_frozen();

  MinibatchSpec spec;
  spec.batch_size = session_.budget.batch_size;
  spec.new_fraction = method_.uses_buffer() ? method_.new_fraction : 1.0;
  spec.balanced = method_.balanced;

  const std::size_t U = session_.budget.iterations;
  record(j, 0, eval, ledger, report, 0.0);
  double loss_sum = 0.0;
  std::size_t loss_n = 0;
  for (std::size_t step = 0; step < U; ++step) {
    const auto mb = sample_minibatch(buffer_, session.samples.size(), spec, rng_);
    if (mb.buffer_was_empty && !warned_empty_buffer_) {
      log::warn("rehearsal buffer is empty; minibatches are drawn from the current batch only");
      warned_empty_buffer_ = true;
    }
    std::vector<std::size_t> fresh;
    fresh.reserve(mb.new_items.size());
    for (auto p : mb.new_items) fresh.push_back(session.samples[p]);
    loss_sum += train_step(fresh, mb.replay_items, lr_at(method_.lr, step, U, 0));
    loss_n += 1;
    report.steps += 1;
    report.presentations += spec.batch_size;
    const std::size_t done = step + 1;
    if (done % session_.eval_every == 0 || done == U) {
      record(j, done, eval, ledger, report, loss_sum / double(loss_n));
      loss_sum = 0.0;
      loss_n = 0;
    }
  }
  audit_frozen(snap, report.audit);
  finish_session(session, report, eval);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

template <class T>
SessionReport ContinualLearner<T>::run_online_session(std::size_t j, const Session& session,
                                                      const SessionEval<T>& eval,
                                                      MetricLedger& ledger) {
  if (session.samples.empty()) throw std::invalid_argument("run_online_session: empty session");
  const auto t0 = std::chrono::steady_clock::now();
  SessionReport report;
  report.session = j;
  prepare_session(session, report);
  const auto snap = snapshot_frozen();

  std::vector<std::size_t> order = session.samples;
  std::shuffle(order.begin(), order.end(), rng_);
  const std::size_t U = order.size();
  const std::size_t n_old = session_.budget.batch_size - 1;

  record(j, 0, eval, ledger, report, 0.0);
  double loss_sum = 0.0;
  std::size_t loss_n = 0;
  for (std::size_t step = 0; step < U; ++step) {
    std::vector<std::size_t> replay;
    if (method_.uses_buffer() && !buffer_.empty()) {
      for (std::size_t i = 0; i < n_old; ++i) {
        replay.push_back(method_.balanced ? buffer_.sample_balanced(rng_)
                                          : buffer_.sample_uniform(rng_));
      }
    } else if (method_.uses_buffer() && !warned_empty_buffer_) {
      log::warn("online session started with an empty buffer");
      warned_empty_buffer_ = true;
    }
    loss_sum += train_step({order[step]}, replay, lr_at(method_.lr, step, U, 0));
    loss_n += 1;
    report.steps += 1;
    report.presentations += 1 + replay.size();
    if (method_.uses_buffer()) insert_into_buffer(order[step]);
    const std::size_t done = step + 1;
    if (done % session_.eval_every == 0 || done == U) {
      record(j, done, eval, ledger, report, loss_sum / double(loss_n));
      loss_sum = 0.0;
      loss_n = 0;
    }
  }
  audit_frozen(snap, report.audit);
  finish_session(session, report, eval);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

#define SGMLAB_INSTANTIATE(T)                                                                  \
  template EvalSet<T> make_eval_set<T>(const Dataset&, const std::vector<std::size_t>&);       \
  template double accuracy<T>(const Model<T>&, const EvalSet<T>&);                             \
  template std::size_t fit_supervised<T>(Model<T>&, const Dataset&,                            \
                                         const std::vector<std::size_t>&, const FitConfig&,    \
                                         std::mt19937_64&);                                    \
  template std::size_t pretrain<T>(Model<T>&, const Dataset&, const Session&,                  \
                                   const FitConfig&, std::mt19937_64&);                        \
  template JointRef joint_train<T>(const ModelSpec&, const Dataset&,                           \
                                   const std::vector<std::size_t>&, const FitConfig&,          \
                                   const SessionEval<T>&, std::uint64_t);                      \
  template class ContinualLearner<T>;

SGMLAB_INSTANTIATE(float)
SGMLAB_INSTANTIATE(double)

#undef SGMLAB_INSTANTIATE

}  // namespace sgmlab
