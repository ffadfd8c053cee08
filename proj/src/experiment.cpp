#include "sgmlab/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "sgmlab/checkpoint.hpp"
#include "sgmlab/log.hpp"

namespace sgmlab {

using nlohmann::json;

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
  // splitmix64 finalizer over seed ^ hash(purpose)
  std::uint64_t z = seed ^ fnv1a(purpose);
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Stream preparation

namespace {

Dataset load_source(const ExperimentConfig& config) {
  const auto& d = config.dataset;
  switch (d.source) {
    case DataSource::synthetic: return generate_synthetic(d.synthetic);
    case DataSource::csv: return load_csv(d.csv_path);
    case DataSource::idx: return load_idx(d.idx_images, d.idx_labels);
  }
  throw std::logic_error("unreachable");
}

}  // namespace

std::string PreparedStream::schedule_hash() const {
  return hex64(fnv1a(schedule_to_json(schedule).dump()));
}

json PreparedStream::manifest() const {
  json j;
  j["data_fingerprint"] = hex64(fingerprint());
  j["schedule_hash"] = schedule_hash();
  j["samples"] = data.size();
  j["dims"] = data.dims();
  j["class_order"] = original_label;
  if (!data.class_names.empty()) j["class_names"] = data.class_names;
  j["schedule"] = schedule_to_json(schedule);
  j["test_indices"] = split.test;
  json ev = json::array();
  for (std::size_t s = 0; s < eval.size(); ++s) {
    ev.push_back({{"session", s + 1},
                  {"classes_before", eval[s].classes_before},
                  {"classes_after", eval[s].classes_after},
                  {"test_old", eval[s].old_idx.size()},
                  {"test_new", eval[s].new_idx.size()},
                  {"test_all", eval[s].all_idx.size()}});
  }
  j["evaluation_sets"] = std::move(ev);
  return j;
}

PreparedStream prepare_stream(const ExperimentConfig& config) {
  Dataset src = load_source(config);
  src.validate();
  const auto& sc = config.schedule;
  PreparedStream ps;

  std::mt19937_64 split_rng(derive_seed(config.seed, "split"));
  ps.split = holdout_split(src, config.dataset.test_fraction, split_rng);

  std::mt19937_64 sched_rng(derive_seed(config.seed, "schedule"));
  StreamSchedule sched;
  try {
    if (sc.ordering == Ordering::cil) {
      sched = make_cil_schedule(src, ps.split.train, sc.pretrain_classes, sc.sessions,
                                sc.classes_per_session, sched_rng);
    } else {
      PretrainSplit pre{sc.pretrain_classes, sc.pretrain_fraction};
      sched = make_iid_schedule(src, ps.split.train, pre, sc.sessions, sc.samples_per_session,
                                sched_rng);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError("schedule", e.what());
  }

  // Renumber labels in stream order so every session's new classes extend the
  // output layer contiguously.
  const std::size_t K = src.num_classes();
  std::vector<std::size_t> order = sched.class_order();
  {
    std::vector<bool> seen(K, false);
    for (auto c : order) seen[c] = true;
    for (std::size_t c = 0; c < K; ++c) {
      if (!seen[c]) order.push_back(c);
    }
  }
  std::vector<std::size_t> to_new(K);
  for (std::size_t i = 0; i < K; ++i) to_new[order[i]] = i;
  ps.original_label = order;

  ps.data.features = std::move(src.features);
  ps.data.labels.reserve(src.labels.size());
  for (auto l : src.labels) ps.data.labels.push_back(to_new[l]);
  if (!src.class_names.empty()) {
    for (auto c : order) ps.data.class_names.push_back(src.class_names[c]);
  }
  for (auto& s : sched.sessions) {
    for (auto& c : s.classes) c = to_new[c];
    std::sort(s.classes.begin(), s.classes.end());
  }
  ps.schedule = std::move(sched);

  std::set<std::size_t> seen;
  for (std::size_t s = 0; s < ps.schedule.num_sessions(); ++s) {
    PreparedStream::EvalIndices ev;
    ev.classes_before = seen.size();
    const auto& cls = ps.schedule.sessions[s].classes;
    seen.insert(cls.begin(), cls.end());
    ev.classes_after = seen.size();
    const std::set<std::size_t> current(cls.begin(), cls.end());
    for (auto i : ps.split.test) {
      const auto l = ps.data.labels[i];
      if (l < ev.classes_before) ev.old_idx.push_back(i);
      if (current.count(l)) ev.new_idx.push_back(i);
      if (l < ev.classes_after) ev.all_idx.push_back(i);
    }
    if (s > 0 && (ev.old_idx.empty() || ev.new_idx.empty())) {
      throw ConfigError("dataset.test_fraction",
                        "session " + std::to_string(s + 1) +
                            " has an empty evaluation set; raise test_fraction or samples");
    }
    if (ps.schedule.sessions[s].samples.empty()) {
      throw ConfigError("schedule", "session " + std::to_string(s + 1) + " has no samples");
    }
    ps.eval.push_back(std::move(ev));
  }
  ps.pretrain_test = ps.eval[0].new_idx;
  if (ps.pretrain_test.empty()) {
    throw ConfigError("dataset.test_fraction", "pretraining classes have no held-out samples");
  }
  return ps;
}

template <class T>
SessionEval<T> session_eval(const PreparedStream& stream, std::size_t s) {
  const auto& ev = stream.eval.at(s);
  return {make_eval_set<T>(stream.data, ev.old_idx), make_eval_set<T>(stream.data, ev.new_idx),
          make_eval_set<T>(stream.data, ev.all_idx)};
}

template SessionEval<float> session_eval<float>(const PreparedStream&, std::size_t);
template SessionEval<double> session_eval<double>(const PreparedStream&, std::size_t);

std::string describe_schedule(const ExperimentConfig& config, const PreparedStream& stream) {
  std::ostringstream out;
  out << "ordering " << to_string(stream.schedule.ordering) << ", " << stream.data.size()
      << " samples, " << stream.data.dims() << " features, " << stream.data.num_classes()
      << " classes (" << stream.split.train.size() << " train / " << stream.split.test.size()
      << " held out)\n";
  out << "data fingerprint " << hex64(stream.fingerprint()) << ", schedule hash "
      << stream.schedule_hash() << "\n";
  for (std::size_t s = 0; s < stream.num_sessions(); ++s) {
    const auto& sess = stream.schedule.sessions[s];
    const auto& ev = stream.eval[s];
    out << "session " << (s + 1) << (sess.pretrain ? " (pretrain)" : "") << ": "
        << sess.samples.size() << " samples, classes " << ev.classes_before << ".."
        << (ev.classes_after - 1) << " seen, " << sess.classes.size()
        << " in batch; eval old/new/all " << ev.old_idx.size() << "/" << ev.new_idx.size() << "/"
        << ev.all_idx.size() << "\n";
  }
  out << "methods:";
  for (const auto& m : config.methods) out << " " << m.name;
  out << "\nper session: U=" << config.session.budget.iterations
      << " b=" << config.session.budget.batch_size << " eval_every=" << config.session.eval_every
      << "; joint " << to_string(config.joint.mode) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Joint references

JointRef JointRefs::for_session(std::size_t j) const {
  for (const auto& set : sets) {
    auto it = set.evaluations.find(j);
    if (it != set.evaluations.end()) return it->second;
  }
  throw std::runtime_error("joint references have no entry for session " + std::to_string(j));
}

json joint_refs_to_json(const JointRefs& refs) {
  json j;
  j["format"] = "sgmlab-joint-refs";
  j["version"] = 1;
  j["mode"] = to_string(refs.mode);
  j["seed"] = refs.seed;
  j["data_fingerprint"] = refs.data_fingerprint;
  j["schedule_hash"] = refs.schedule_hash;
  json sets = json::array();
  for (const auto& set : refs.sets) {
    json ev = json::object();
    for (const auto& [sess, r] : set.evaluations) {
      ev[std::to_string(sess)] = {
          {"acc_old", r.acc_old}, {"acc_new", r.acc_new}, {"acc_all", r.acc_all}};
    }
    sets.push_back({{"trained_through_session", set.trained_through}, {"evaluations", ev}});
  }
  j["references"] = std::move(sets);
  return j;
}

JointRefs joint_refs_from_json(const json& j) {
  if (j.value("format", "") != "sgmlab-joint-refs") {
    throw std::runtime_error("not a joint reference file");
  }
  JointRefs r;
  const auto mode = j.at("mode").get<std::string>();
  r.mode = mode == "final_only" ? JointMode::final_only : JointMode::per_prefix;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.data_fingerprint = j.at("data_fingerprint").get<std::string>();
  r.schedule_hash = j.at("schedule_hash").get<std::string>();
  for (const auto& s : j.at("references")) {
    JointRefSet set;
    set.trained_through = s.at("trained_through_session").get<std::size_t>();
    for (auto it = s.at("evaluations").begin(); it != s.at("evaluations").end(); ++it) {
      set.evaluations[std::stoul(it.key())] = {it->at("acc_old").get<double>(),
                                               it->at("acc_new").get<double>(),
                                               it->at("acc_all").get<double>()};
    }
    r.sets.push_back(std::move(set));
  }
  return r;
}

std::string joint_refs_text(const JointRefs& refs) { return joint_refs_to_json(refs).dump(2) + "\n"; }

void check_joint_refs(const JointRefs& refs, const PreparedStream& stream) {
  if (refs.data_fingerprint != hex64(stream.fingerprint())) {
    throw std::runtime_error("joint references were computed on different data (fingerprint " +
                             refs.data_fingerprint + " vs " + hex64(stream.fingerprint()) + ")");
  }
  if (refs.schedule_hash != stream.schedule_hash()) {
    throw std::runtime_error("joint references were computed for a different schedule");
  }
  for (std::size_t j = 2; j <= stream.num_sessions(); ++j) refs.for_session(j);
}

namespace {

ModelSpec model_spec(const ExperimentConfig& config, const PreparedStream& stream,
                     std::size_t outputs) {
  return {stream.data.dims(), config.model.hidden, outputs, config.model.activation};
}

std::vector<std::size_t> samples_through(const PreparedStream& stream, std::size_t s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i <= s; ++i) {
    const auto& v = stream.schedule.sessions[i].samples;
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

template <class T>
JointRefs compute_joint_refs_t(const ExperimentConfig& config, const PreparedStream& stream) {
  JointRefs refs;
  refs.mode = config.joint.mode;
  refs.seed = config.seed;
  refs.data_fingerprint = hex64(stream.fingerprint());
  refs.schedule_hash = stream.schedule_hash();
  const std::size_t N = stream.num_sessions();
  if (config.joint.mode == JointMode::per_prefix) {
    for (std::size_t s = 1; s < N; ++s) {
      const auto spec = model_spec(config, stream, stream.classes_after(s));
      const auto eval = session_eval<T>(stream, s);
      const auto ref = joint_train<T>(spec, stream.data, samples_through(stream, s),
                                      config.joint.fit, eval,
                                      derive_seed(config.seed, "joint" + std::to_string(s)));
      refs.sets.push_back({s + 1, {{s + 1, ref}}});
      log::info("joint reference through session " + std::to_string(s + 1) + ": old " +
                std::to_string(ref.acc_old) + ", all " + std::to_string(ref.acc_all));
    }
  } else {
    Model<T> model(model_spec(config, stream, stream.classes_after(N - 1)),
                   derive_seed(config.seed, "joint"));
    std::mt19937_64 rng(derive_seed(config.seed, "joint-batches"));
    fit_supervised(model, stream.data, samples_through(stream, N - 1), config.joint.fit, rng);
    JointRefSet set;
    set.trained_through = N;
    for (std::size_t s = 1; s < N; ++s) {
      const auto eval = session_eval<T>(stream, s);
      set.evaluations[s + 1] = {accuracy(model, eval.old_set), accuracy(model, eval.new_set),
                                accuracy(model, eval.all_set)};
    }
    refs.sets.push_back(std::move(set));
  }
  return refs;
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string curve_csv(const SessionReport& r) {
  std::ostringstream out;
  out << "step,acc_old,acc_new,acc_all,loss\n";
  for (const auto& p : r.curve) {
    out << p.step << ',' << fmt(p.acc_old) << ',' << fmt(p.acc_new) << ',' << fmt(p.acc_all)
        << ',' << fmt(p.loss) << '\n';
  }
  return out.str();
}

void write_method_artifacts(const std::filesystem::path& dir, const ExperimentConfig& config,
                            const ExperimentResult& result, const MethodRun& run,
                            const std::string& refs_text) {
  auto cfg = config;
  cfg.methods = {run.method};
  cfg.output_dir = dir.string();
  write_text(dir / "config.json", config_to_json(cfg).dump(2) + "\n");
  write_text(dir / "manifest.json", result.stream.manifest().dump(2) + "\n");
  write_text(dir / "joint_refs.json", refs_text);
  write_text(dir / "ledger.csv", run.ledger.to_csv());
  for (const auto& s : run.sessions) {
    write_text(dir / "curves" / ("session_" + std::to_string(s.session) + ".csv"), curve_csv(s));
  }
  auto metrics = metrics_json(run.ledger, config.recovery_fractions);
  json joints = json::object();
  for (const auto& [j, r] : run.ledger.joints()) {
    joints[std::to_string(j)] = {{"acc_old", r.acc_old}, {"acc_new", r.acc_new}, {"acc_all", r.acc_all}};
  }
  json bests = json::object();
  for (const auto& [j, b] : run.ledger.bests()) bests[std::to_string(j)] = b;
  metrics["joint_mode"] = to_string(config.joint.mode);
  metrics["joint_refs"] = std::move(joints);
  metrics["best_new"] = std::move(bests);
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");
  write_text(dir / "summary.json",
             run_summary(config, run, hex64(fnv1a(refs_text))).dump(2) + "\n");
}

template <class T>
ExperimentResult run_experiment_t(const ExperimentConfig& config, const RunOptions& options) {
  ExperimentResult result;
  result.stream = prepare_stream(config);
  const auto& stream = result.stream;
  if (options.joints) {
    check_joint_refs(*options.joints, stream);
    result.joints = *options.joints;
  } else {
    result.joints = compute_joint_refs_t<T>(config, stream);
  }
  const std::string refs_text = joint_refs_text(result.joints);
  const auto& out = options.out_dir;
  if (out) {
    std::filesystem::create_directories(*out);
    write_text(*out / "config.json", config_to_json(config).dump(2) + "\n");
    write_text(*out / "manifest.json", stream.manifest().dump(2) + "\n");
    write_text(*out / "joint_refs.json", refs_text);
  }

  const std::size_t N = stream.num_sessions();
  std::vector<SessionEval<T>> evals;
  evals.reserve(N);
  for (std::size_t s = 0; s < N; ++s) evals.push_back(session_eval<T>(stream, s));
  const auto pretrain_set = make_eval_set<T>(stream.data, stream.pretrain_test);

  Model<T> base(model_spec(config, stream, stream.classes_after(0)),
                derive_seed(config.seed, "init"));
  {
    std::mt19937_64 rng(derive_seed(config.seed, "pretrain"));
    pretrain(base, stream.data, stream.schedule.sessions[0], config.pretrain, rng);
  }
  result.pretrain_accuracy = accuracy(base, pretrain_set);
  log::info("pretrained on " + std::to_string(stream.classes_after(0)) +
            " classes, held-out accuracy " + std::to_string(result.pretrain_accuracy));
  if (out && config.save_checkpoints) save_checkpoint(base, *out / "checkpoints" / "pretrained.json");

  for (const auto& method : config.methods) {
    const auto t0 = std::chrono::steady_clock::now();
    MethodRun run;
    run.method = method;
    ContinualLearner<T> learner(clone_snapshot(base), stream.data, method, config.session,
                                derive_seed(config.seed, "learner"));
    learner.seed_buffer(stream.schedule.sessions[0]);
    for (std::size_t s = 1; s < N; ++s) {
      auto rep = learner.run_session(s + 1, stream.schedule.sessions[s], evals[s], run.ledger);
      if (rep.audit.violations > 0) {
        throw std::logic_error(method.name + ": " + std::to_string(rep.audit.violations) +
                               " frozen entries changed during session " +
                               std::to_string(s + 1));
      }
      if (rep.had_adapters_at_end) {
        const double tol = (std::is_same_v<T, float> ? 1e-6 : 1e-12) *
                           std::max(1.0, rep.fold_logit_scale);
        if (rep.fold_max_abs_diff > tol) {
          log::warn(method.name + ": LoRA fold moved logits by " +
                    std::to_string(rep.fold_max_abs_diff) + " in session " +
                    std::to_string(s + 1));
        }
      }
      if (out && config.save_checkpoints) {
        save_checkpoint(learner.model(), *out / method.name / "checkpoints" /
                                             ("session_" + std::to_string(s + 1) + ".json"));
      }
      log::info(method.name + " session " + std::to_string(s + 1) + ": old " +
                std::to_string(rep.curve.back().acc_old) + ", new " +
                std::to_string(rep.curve.back().acc_new));
      run.sessions.push_back(std::move(rep));
    }
    for (std::size_t j = 2; j <= N; ++j) run.ledger.set_joint(j, result.joints.for_session(j));
    run.sigma = accuracy(learner.model(), pretrain_set);
    run.total_updates = learner.total_updates();
    run.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.runs.push_back(std::move(run));
  }

  if (config.best_reference == BestReference::cohort && result.runs.size() > 1) {
    std::vector<MetricLedger*> ledgers;
    for (auto& r : result.runs) ledgers.push_back(&r.ledger);
    assign_cohort_best(ledgers);
  } else {
    for (auto& r : result.runs) r.ledger.use_self_best();
  }

  if (out) {
    for (const auto& run : result.runs) {
      write_method_artifacts(*out / run.method.name, config, result, run, refs_text);
    }
  }
  return result;
}

}  // namespace

JointRefs compute_joint_refs(const ExperimentConfig& config, const PreparedStream& stream) {
  return config.precision == Precision::float64 ? compute_joint_refs_t<double>(config, stream)
                                                : compute_joint_refs_t<float>(config, stream);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  return config.precision == Precision::float64 ? run_experiment_t<double>(config, options)
                                                : run_experiment_t<float>(config, options);
}

const MethodRun& ExperimentResult::run(const std::string& name) const {
  for (const auto& r : runs) {
    if (r.method.name == name) return r;
  }
  throw std::out_of_range("no method named " + name);
}

json run_summary(const ExperimentConfig& config, const MethodRun& run,
                 const std::string& joint_refs_hash) {
  json j;
  j["method"] = run.method.name;
  j["seed"] = config.seed;
  j["strategy"] = to_string(run.method.strategy);
  j["mechanisms"] = run.method.mechanisms.active_names();
  j["sigma"] = run.sigma;
  j["total_updates"] = run.total_updates;
  j["joint_refs_hash"] = joint_refs_hash;
  j["best_reference"] = run.ledger.self_referenced_best() ? "self" : "cohort";
  std::size_t presentations = 0;
  json sessions = json::array();
  for (const auto& s : run.sessions) {
    presentations += s.presentations;
    sessions.push_back({{"session", s.session},
                        {"steps", s.steps},
                        {"presentations", s.presentations},
                        {"new_classes", s.new_classes},
                        {"trainable_params", s.trainable_params},
                        {"freeze_audit",
                         {{"checked", s.audit.checked},
                          {"violations", s.audit.violations},
                          {"oocf_rows", s.audit.oocf_rows},
                          {"prefix_layers", s.audit.prefix_layers},
                          {"lora_hosts", s.audit.lora_hosts}}},
                        {"lora_fold",
                         {{"had_adapters", s.had_adapters_at_end},
                          {"adapters_after_fold", s.adapters_after_fold},
                          {"max_abs_logit_change", s.fold_max_abs_diff},
                          {"logit_scale", s.fold_logit_scale}}}});
  }
  j["presentations"] = presentations;
  j["sessions"] = std::move(sessions);
  return j;
}

}  // namespace sgmlab
