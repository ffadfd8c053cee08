#include "sgmlab/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

namespace sgmlab {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void check_acc(double a, const char* what) {
  if (!(a >= 0.0 && a <= 1.0)) {
    throw LedgerError(std::string("record_eval: ") + what + " accuracy " + std::to_string(a) +
                      " outside [0,1]");
  }
}

// Sessions scored by the gap metrics: everything after the pretraining batch.
std::vector<std::size_t> scored_sessions(const MetricLedger& ledger) {
  std::vector<std::size_t> out;
  for (auto j : ledger.sessions()) {
    if (j >= 2) out.push_back(j);
  }
  if (out.empty()) throw LedgerError("ledger has no continual-learning sessions (j >= 2)");
  return out;
}

template <class Acc, class Ref>
GapResult gap(const MetricLedger& ledger, Acc acc, Ref ref, const char* ref_name) {
  GapResult r;
  double sum = 0.0;
  const auto sessions = scored_sessions(ledger);
  for (auto j : sessions) {
    const double denom = ref(j);
    if (!(denom > 0.0)) {
      throw LedgerError(std::string(ref_name) + " reference for session " + std::to_string(j) +
                        " is 0; normalization undefined");
    }
    const auto rows = ledger.session_rows(j);
    double s = 0.0;
    for (const auto& row : rows) s += acc(row) / denom;
    const double omega = s / static_cast<double>(rows.size());
    r.omegas[j] = omega;
    sum += omega;
  }
  r.value = 1.0 - sum / static_cast<double>(sessions.size());
  return r;
}

}  // namespace

void MetricLedger::record_eval(std::size_t session, std::size_t step, double acc_old,
                               double acc_new, double acc_all) {
  check_acc(acc_old, "old");
  check_acc(acc_new, "new");
  check_acc(acc_all, "all");
  if (!rows_.empty()) {
    const auto& last = rows_.back();
    if (session < last.session || (session == last.session && step <= last.step)) {
      throw LedgerError("record_eval: row (" + std::to_string(session) + "," +
                        std::to_string(step) + ") does not follow (" +
                        std::to_string(last.session) + "," + std::to_string(last.step) + ")");
    }
  }
  rows_.push_back({session, step, acc_old, acc_new, acc_all});
}

std::vector<std::size_t> MetricLedger::sessions() const {
  std::vector<std::size_t> out;
  for (const auto& r : rows_) {
    if (out.empty() || out.back() != r.session) out.push_back(r.session);
  }
  return out;
}

std::vector<LedgerRow> MetricLedger::session_rows(std::size_t session) const {
  std::vector<LedgerRow> out;
  for (const auto& r : rows_) {
    if (r.session == session) out.push_back(r);
  }
  return out;
}

void MetricLedger::set_joint(std::size_t session, const JointRef& ref) { joint_[session] = ref; }

const JointRef& MetricLedger::joint(std::size_t session) const {
  auto it = joint_.find(session);
  if (it == joint_.end()) {
    throw LedgerError("no joint reference for session " + std::to_string(session));
  }
  return it->second;
}

void MetricLedger::set_best(std::size_t session, double best_new) {
  best_[session] = best_new;
  self_best_ = false;
}

double MetricLedger::best(std::size_t session) const {
  auto it = best_.find(session);
  if (it == best_.end()) {
    throw LedgerError("no best reference for session " + std::to_string(session));
  }
  return it->second;
}

void MetricLedger::use_self_best() {
  best_.clear();
  for (const auto& r : rows_) {
    auto [it, inserted] = best_.try_emplace(r.session, r.acc_new);
    if (!inserted) it->second = std::max(it->second, r.acc_new);
  }
  self_best_ = true;
}

std::string MetricLedger::to_csv() const {
  std::ostringstream out;
  out << "session,step,acc_old,acc_new,acc_all\n";
  for (const auto& r : rows_) {
    out << r.session << ',' << r.step << ',' << fmt_double(r.acc_old) << ','
        << fmt_double(r.acc_new) << ',' << fmt_double(r.acc_all) << '\n';
  }
  return out.str();
}

MetricLedger MetricLedger::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("session,step,acc_old,acc_new,acc_all", 0) != 0) {
    throw LedgerError("ledger csv: bad header");
  }
  MetricLedger l;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) {
      throw LedgerError("ledger csv line " + std::to_string(line_no) + ": expected 5 fields");
    }
    try {
      l.record_eval(std::stoull(cells[0]), std::stoull(cells[1]), std::stod(cells[2]),
                    std::stod(cells[3]), std::stod(cells[4]));
    } catch (const LedgerError&) {
      throw;
    } catch (const std::exception& e) {
      throw LedgerError("ledger csv line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return l;
}

GapResult stability_gap(const MetricLedger& ledger) {
  return gap(
      ledger, [](const LedgerRow& r) { return r.acc_old; },
      [&](std::size_t j) { return ledger.joint(j).acc_old; }, "joint old-data");
}

GapResult plasticity_gap(const MetricLedger& ledger) {
  return gap(
      ledger, [](const LedgerRow& r) { return r.acc_new; },
      [&](std::size_t j) { return ledger.best(j); }, "best new-data");
}

GapResult continual_knowledge_gap(const MetricLedger& ledger) {
  return gap(
      ledger, [](const LedgerRow& r) { return r.acc_all; },
      [&](std::size_t j) { return ledger.joint(j).acc_all; }, "joint all-data");
}

std::vector<TracePoint> old_trace(const MetricLedger& ledger, std::size_t session) {
  std::vector<TracePoint> t;
  for (const auto& r : ledger.session_rows(session)) t.push_back({r.step, r.acc_old});
  return t;
}

std::vector<TracePoint> new_trace(const MetricLedger& ledger, std::size_t session) {
  std::vector<TracePoint> t;
  for (const auto& r : ledger.session_rows(session)) t.push_back({r.step, r.acc_new});
  return t;
}

std::optional<std::size_t> recovery_iterations(const std::vector<TracePoint>& trace,
                                               double joint_ref, double fraction) {
  if (trace.empty()) throw LedgerError("recovery_iterations: empty trace");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("recovery_iterations: fraction must be in (0,1]");
  }
  const double threshold = fraction * joint_ref;
  for (const auto& p : trace) {
    if (p.acc >= threshold - 1e-12) return p.step;
  }
  return std::nullopt;
}

std::size_t updates_to_fraction_best(const std::vector<TracePoint>& trace, double fraction) {
  if (trace.empty()) return 0;
  double mx = trace.front().acc;
  for (const auto& p : trace) mx = std::max(mx, p.acc);
  const double threshold = fraction * mx;
  for (const auto& p : trace) {
    if (p.acc >= threshold - 1e-12) return p.step;
  }
  return trace.back().step;
}

void assign_cohort_best(std::vector<MetricLedger*> ledgers) {
  std::map<std::size_t, double> best;
  for (const auto* l : ledgers) {
    for (const auto& r : l->rows()) {
      auto [it, inserted] = best.try_emplace(r.session, r.acc_new);
      if (!inserted) it->second = std::max(it->second, r.acc_new);
    }
  }
  for (auto* l : ledgers) {
    for (const auto& [j, b] : best) l->set_best(j, b);
  }
}

ComparisonReport compare_runs(
    const std::vector<std::pair<std::string, const MetricLedger*>>& runs) {
  ComparisonReport rep;
  if (runs.empty()) return rep;
  const auto& ref = runs.front().second->joints();
  for (const auto& [name, l] : runs) {
    if (l->joints() != ref) {
      throw LedgerError("compare_runs: run '" + name +
                        "' uses different joint references; runs are not comparable");
    }
  }
  for (const auto& [name, l] : runs) {
    rep.scores.push_back({name, stability_gap(*l).value, plasticity_gap(*l).value,
                          continual_knowledge_gap(*l).value});
  }
  auto rank = [&](const char* metric, double RunScore::*field) {
    RankedMetric m;
    m.metric = metric;
    for (const auto& s : rep.scores) m.order.emplace_back(s.name, s.*field);
    std::stable_sort(m.order.begin(), m.order.end(),
                     [](const auto& a, const auto& b) { return a.second < b.second; });
    for (const auto& [name, v] : m.order) {
      std::size_t better = 0;
      for (const auto& [n2, v2] : m.order) better += v2 < v ? 1 : 0;
      m.ranks.push_back(better + 1);
    }
    rep.rankings.push_back(std::move(m));
  };
  rank("S_delta", &RunScore::s_delta);
  rank("P_delta", &RunScore::p_delta);
  rank("CK_delta", &RunScore::ck_delta);
  return rep;
}

nlohmann::json metrics_json(const MetricLedger& ledger, const std::vector<double>& fractions,
                            double best_fraction) {
  nlohmann::json j;
  const auto s = stability_gap(ledger);
  const auto p = plasticity_gap(ledger);
  const auto ck = continual_knowledge_gap(ledger);
  j["S_delta"] = s.value;
  j["P_delta"] = p.value;
  j["CK_delta"] = ck.value;
  auto omegas = [](const GapResult& g) {
    nlohmann::json o = nlohmann::json::object();
    for (const auto& [sess, v] : g.omegas) o[std::to_string(sess)] = v;
    return o;
  };
  j["per_session_omegas"] = {{"old", omegas(s)}, {"new", omegas(p)}, {"all", omegas(ck)}};
  nlohmann::json rec = nlohmann::json::object();
  for (double f : fractions) {
    nlohmann::json per = nlohmann::json::object();
    for (auto sess : scored_sessions(ledger)) {
      const auto r = recovery_iterations(old_trace(ledger, sess), ledger.joint(sess).acc_old, f);
      per[std::to_string(sess)] = r ? nlohmann::json(*r) : nlohmann::json(nullptr);
    }
    std::ostringstream key;
    key << f;
    rec[key.str()] = std::move(per);
  }
  j["recovery"] = std::move(rec);
  nlohmann::json upd = nlohmann::json::object();
  for (auto sess : scored_sessions(ledger)) {
    upd[std::to_string(sess)] = updates_to_fraction_best(new_trace(ledger, sess), best_fraction);
  }
  j["updates_to_99"] = std::move(upd);
  j["best_reference"] = ledger.self_referenced_best() ? "self" : "cohort";
  return j;
}

}  // namespace sgmlab
