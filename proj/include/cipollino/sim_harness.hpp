#pragma once

// Measurement methodology at desk scale: workload generation (web and mixed
// application models), deterministic replay of client models over a
// consensus snapshot, vulnerability and relay-usage metrics, adversary-model
// comparison, and path-prediction accuracy reports.

#include <algorithm>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cipollino/as_topology.hpp"
#include "cipollino/bgp_risk.hpp"
#include "cipollino/cipollino_core.hpp"
#include "cipollino/net_types.hpp"
#include "cipollino/path_oracle.hpp"
#include "cipollino/rng.hpp"
#include "cipollino/tor_net.hpp"

namespace cipollino {

enum class WorkloadLabel { Web, Mixed };

struct WorkloadStream {
  WorkloadLabel label = WorkloadLabel::Web;
  std::vector<ConnectionRequest> requests;  // timestamps non-decreasing
};

struct WebWorkloadOptions {
  Timestamp start = 0;
  double gap_mean_seconds = 10.0;  // exponential inter-site gap
  AsNumber client_asn = 0;
};

// Site list: CSV `site,rank`. DNS map: CSV `site,ip,port`, one row per
// endpoint (primary plus third parties). One burst of requests per site in
// list order.
inline WorkloadStream generate_web_workload(std::istream& site_list,
                                            std::istream& dns_map,
                                            const WebWorkloadOptions& options,
                                            SeededRng& rng) {
  std::map<std::string, std::vector<std::pair<std::uint32_t, int>>> endpoints;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(dns_map, line)) {
    ++lineno;
    std::string t = detail::strip(line);
    if (t.empty() || t[0] == '#') continue;
    auto parts = detail::split(t, ',');
    if (parts.size() != 3) throw ParseError("expected site,ip,port", lineno);
    auto ip = parse_ipv4(detail::strip(parts[1]));
    auto port = detail::parse_u64(detail::strip(parts[2]));
    if (!ip) throw ParseError("bad endpoint address", lineno);
    if (!port || *port < 1 || *port > 65535) throw ParseError("bad endpoint port", lineno);
    endpoints[detail::strip(parts[0])].push_back({*ip, static_cast<int>(*port)});
  }

  std::vector<std::string> sites;
  lineno = 0;
  while (std::getline(site_list, line)) {
    ++lineno;
    std::string t = detail::strip(line);
    if (t.empty() || t[0] == '#') continue;
    auto parts = detail::split(t, ',');
    if (parts.empty() || detail::strip(parts[0]).empty())
      throw ParseError("expected site,rank", lineno);
    sites.push_back(detail::strip(parts[0]));
  }
  if (sites.empty()) throw GenerationError("site list is empty");

  WorkloadStream stream;
  stream.label = WorkloadLabel::Web;
  Timestamp now = options.start;
  bool first = true;
  for (const std::string& site : sites) {
    auto it = endpoints.find(site);
    if (it == endpoints.end() || it->second.empty())
      throw GenerationError("no resolution entry for site '" + site + "'");
    if (!first)
      now += 1 + static_cast<Timestamp>(rng.exponential(options.gap_mean_seconds));
    first = false;
    for (const auto& [ip, port] : it->second) {
      ConnectionRequest req;
      req.at = now;
      req.dest_ip = ip;
      req.dest_port = port;
      req.client_asn = options.client_asn;
      stream.requests.push_back(req);
    }
  }
  return stream;
}

struct MixedProfileRow {
  std::string app;
  int port = 0;
  double rate_per_hour = 0.0;
  std::vector<std::uint32_t> ips;
};

// Profile: CSV `app,port,rate_per_hour,ips` with destination addresses
// semicolon-separated.
inline std::vector<MixedProfileRow> parse_mixed_profile(std::istream& in) {
  std::vector<MixedProfileRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = detail::strip(line);
    if (t.empty() || t[0] == '#') continue;
    auto parts = detail::split(t, ',');
    if (parts.size() != 4) throw ParseError("expected app,port,rate_per_hour,ips", lineno);
    MixedProfileRow row;
    row.app = detail::strip(parts[0]);
    auto port = detail::parse_u64(detail::strip(parts[1]));
    if (!port || *port < 1 || *port > 65535) throw ParseError("bad port", lineno);
    row.port = static_cast<int>(*port);
    try {
      row.rate_per_hour = std::stod(detail::strip(parts[2]));
    } catch (...) {
      throw ParseError("bad rate", lineno);
    }
    if (row.rate_per_hour < 0) throw ParseError("negative rate", lineno);
    for (const std::string& s : detail::split(detail::strip(parts[3]), ';')) {
      auto ip = parse_ipv4(detail::strip(s));
      if (!ip) throw ParseError("bad destination address '" + s + "'", lineno);
      row.ips.push_back(*ip);
    }
    if (row.ips.empty()) throw ParseError("row needs at least one address", lineno);
    rows.push_back(std::move(row));
  }
  return rows;
}

// Poisson-mixed request stream over the duration; per-application arrivals
// are independent processes at the profiled rates.
inline WorkloadStream generate_mixed_workload(std::istream& profile,
                                              int duration_seconds, Timestamp start,
                                              AsNumber client_asn, SeededRng& rng) {
  auto rows = parse_mixed_profile(profile);
  double total_rate = 0.0;
  for (const auto& r : rows) total_rate += r.rate_per_hour;
  if (total_rate <= 0.0)
    throw ArgumentError("generate_mixed_workload: total rate is zero");
  WorkloadStream stream;
  stream.label = WorkloadLabel::Mixed;
  if (duration_seconds <= 0) return stream;
  for (const auto& row : rows) {
    if (row.rate_per_hour <= 0.0) continue;
    double mean_gap = 3600.0 / row.rate_per_hour;
    double t = rng.exponential(mean_gap);
    while (t < static_cast<double>(duration_seconds)) {
      ConnectionRequest req;
      req.at = start + static_cast<Timestamp>(t);
      req.dest_ip = row.ips[rng.below(row.ips.size())];
      req.dest_port = row.port;
      req.client_asn = client_asn;
      stream.requests.push_back(req);
      t += rng.exponential(mean_gap);
    }
  }
  std::stable_sort(stream.requests.begin(), stream.requests.end(),
                   [](const ConnectionRequest& a, const ConnectionRequest& b) {
                     return a.at < b.at;
                   });
  return stream;
}

enum class ClientKind { Vanilla, PerDestination, Cipollino };

struct ClientModel {
  ClientKind kind = ClientKind::Vanilla;
  ClientConfig config;
};

struct RequestTrace {
  std::size_t index = 0;
  std::uint64_t circuit_id = 0;
  bool reused = false;
  bool safe = false;
  AsSet adversaries;
  bool failed = false;  // no-exit, request unserved
};

struct SimReport {
  double vulnerable_circuit_fraction = 0.0;
  double vulnerable_request_fraction = 0.0;
  std::size_t unique_relays = 0;
  std::map<std::string, int> per_relay_load;  // fingerprint -> selections
  std::size_t allocations_reused = 0;
  std::size_t allocations_built = 0;
  std::size_t requests_failed = 0;
  std::vector<RequestTrace> traces;
};

namespace detail {

// Alerts become visible at feed ticks, not at their own timestamps.
inline std::vector<MoasAlert> visible_alerts(const std::vector<MoasAlert>& alerts,
                                             Timestamp now, int interval) {
  if (interval <= 0) return alerts;
  Timestamp tick = (now / interval) * interval;
  std::vector<MoasAlert> out;
  for (const MoasAlert& a : alerts)
    if (a.observed_at <= tick) out.push_back(a);
  return out;
}

struct ReplayRecord {
  ConnectionRequest request;
  Circuit circuit;  // snapshot of the serving circuit
  bool failed = false;
};

class ReplayDriver {
 public:
  ReplayDriver(const ClientModel& model, const ConsensusSnapshot& snapshot,
               const GraphUpdateBundle& bundle, const AsTopology& topology,
               const std::vector<MoasAlert>& alerts, SeededRng& rng)
      : model_(model),
        snapshot_(snapshot),
        bundle_(bundle),
        topology_(topology),
        alerts_(alerts),
        rng_(rng) {
    guards_.size = model.config.guard_list_size;
    pool_.target_size = model.config.pool_target;
  }

  void run(const WorkloadStream& workload, SimReport& report,
           std::vector<ReplayRecord>& records) {
    if (model_.kind == ClientKind::Cipollino) {
      sync_alerts(workload.requests.empty() ? 0 : workload.requests.front().at);
      replenish(pool_, snapshot_, guards_, rng_, 0, ids_, model_.config.pool_entry_guard);
      for (const Circuit& c : pool_.circuits) note_built(c);
    }
    for (std::size_t i = 0; i < workload.requests.size(); ++i) {
      const ConnectionRequest& req = workload.requests[i];
      sync_alerts(req.at);
      age_circuits(req.at);
      RequestTrace trace;
      trace.index = i;
      ReplayRecord record;
      record.request = req;
      try {
        Circuit* chosen = nullptr;
        switch (model_.kind) {
          case ClientKind::Vanilla:
            chosen = serve_vanilla(req, trace);
            break;
          case ClientKind::PerDestination:
            chosen = serve_per_destination(req, trace);
            break;
          case ClientKind::Cipollino:
            chosen = serve_cipollino(req, trace);
            break;
        }
        if (!chosen->first_used_at) chosen->first_used_at = req.at;
        trace.circuit_id = chosen->id;
        SafetyContext ctx = context();
        try {
          SafetyVerdict v = mark_safety(compute_exposure(*chosen, req, ctx));
          trace.safe = v.safe;
          trace.adversaries = v.adversaries;
        } catch (const ExposureError&) {
          trace.safe = false;
        }
        if (trace.reused)
          ++report.allocations_reused;
        else
          ++report.allocations_built;
        circuit_served_[chosen->id] = circuit_served_[chosen->id] || !trace.safe;
        record.circuit = *chosen;
      } catch (const NoExitError&) {
        trace.failed = true;
        record.failed = true;
        ++report.requests_failed;
      }
      report.traces.push_back(trace);
      records.push_back(std::move(record));
      if (model_.kind == ClientKind::Vanilla) {
        // Ports nothing can serve are not worth pre-building for.
        if (!trace.failed) recent_ports_[req.dest_port] = req.at;
        std::size_t before = pool_.circuits.size();
        try {
          vanilla_pool_maintain(snapshot_, pool_, recent_ports_, req.at, guards_, rng_,
                                ids_);
        } catch (const NoExitError&) {
        }
        for (std::size_t k = before; k < pool_.circuits.size(); ++k)
          note_built(pool_.circuits[k]);
      } else if (model_.kind == ClientKind::Cipollino) {
        std::uint64_t id_watermark = ids_.next;
        replenish(pool_, snapshot_, guards_, rng_, req.at, ids_,
                  model_.config.pool_entry_guard);
        for (const Circuit& c : pool_.circuits)
          if (c.id >= id_watermark) note_built(c);
      }
    }
    finalize(report);
  }

 private:
  SafetyContext context() {
    ctx_storage_ = visible_alerts(alerts_, clock_, model_.config.feed_interval_seconds);
    return SafetyContext{&topology_, &bundle_, &ctx_storage_};
  }

  void sync_alerts(Timestamp now) {
    clock_ = now;
    std::uint64_t epoch =
        visible_alerts(alerts_, now, model_.config.feed_interval_seconds).size();
    if (epoch != cache_.epoch) reverify_pool(pool_, cache_, epoch);
  }

  void age_circuits(Timestamp now) {
    auto age = [&](Circuit& c) {
      if (c.state == CircuitState::Live && c.first_used_at &&
          now - *c.first_used_at > model_.config.dirty_timeout_seconds)
        c.state = CircuitState::Dirty;
    };
    for (Circuit& c : pool_.circuits) age(c);
    for (auto& [_, c] : per_dest_) age(c);
  }

  void note_built(const Circuit& c) {
    for (const Relay* r : {&c.entry, &c.middle, &c.exit}) {
      relays_used_.insert(r->fingerprint);
      ++relay_load_[r->fingerprint];
    }
  }

  Circuit* serve_vanilla(const ConnectionRequest& req, RequestTrace& trace) {
    // Aggressive reuse: most recently built live circuit whose exit carries
    // the request.
    Circuit* best = nullptr;
    for (Circuit& c : pool_.circuits) {
      if (c.state != CircuitState::Live) continue;
      if (!exit_supports(c.exit, req.dest_ip, req.dest_port)) continue;
      if (!best || c.built_at > best->built_at ||
          (c.built_at == best->built_at && c.id > best->id))
        best = &c;
    }
    if (best) {
      trace.reused = true;
      return best;
    }
    pool_.circuits.push_back(
        vanilla_build(snapshot_, guards_, req.dest_ip, req.dest_port, rng_, req.at, ids_));
    note_built(pool_.circuits.back());
    trace.reused = false;
    return &pool_.circuits.back();
  }

  Circuit* serve_per_destination(const ConnectionRequest& req, RequestTrace& trace) {
    auto dst = ip_to_asn(topology_, req.dest_ip);
    std::uint64_t key = dst ? static_cast<std::uint64_t>(*dst)
                            : (0x100000000ULL | req.dest_ip);
    auto it = per_dest_.find(key);
    if (it != per_dest_.end() && it->second.state == CircuitState::Live &&
        exit_supports(it->second.exit, req.dest_ip, req.dest_port)) {
      trace.reused = true;
      return &it->second;
    }
    SafetyContext ctx = context();
    OnDemandResult result = build_on_demand(snapshot_, req, ctx, model_.config, rng_,
                                            req.at, ids_);
    note_built(result.circuit);
    trace.reused = false;
    auto [slot, _] = per_dest_.insert_or_assign(key, std::move(result.circuit));
    return &slot->second;
  }

  Circuit* serve_cipollino(const ConnectionRequest& req, RequestTrace& trace) {
    SafetyContext ctx = context();
    Circuit* reuse = allocate(pool_, req, ctx, rng_, &cache_);
    if (reuse) {
      trace.reused = true;
      return reuse;
    }
    OnDemandResult result = build_on_demand(snapshot_, req, ctx, model_.config, rng_,
                                            req.at, ids_);
    note_built(result.circuit);
    trace.reused = false;
    pool_.circuits.push_back(std::move(result.circuit));
    return &pool_.circuits.back();
  }

  void finalize(SimReport& report) {
    report.unique_relays = relays_used_.size();
    report.per_relay_load =
        std::map<std::string, int>(relay_load_.begin(), relay_load_.end());
    std::size_t served = 0, vulnerable_requests = 0;
    for (const RequestTrace& t : report.traces) {
      if (t.failed) continue;
      ++served;
      if (!t.safe) ++vulnerable_requests;
    }
    report.vulnerable_request_fraction =
        served == 0 ? 0.0 : static_cast<double>(vulnerable_requests) / served;
    std::size_t used_circuits = circuit_served_.size(), vulnerable_circuits = 0;
    for (const auto& [_, vulnerable] : circuit_served_)
      if (vulnerable) ++vulnerable_circuits;
    report.vulnerable_circuit_fraction =
        used_circuits == 0 ? 0.0
                           : static_cast<double>(vulnerable_circuits) / used_circuits;
  }

  const ClientModel& model_;
  const ConsensusSnapshot& snapshot_;
  const GraphUpdateBundle& bundle_;
  const AsTopology& topology_;
  const std::vector<MoasAlert>& alerts_;
  SeededRng& rng_;
  GuardState guards_;
  CircuitPool pool_;
  std::map<std::uint64_t, Circuit> per_dest_;
  std::map<int, Timestamp> recent_ports_;
  CircuitIdGen ids_;
  VerdictCache cache_;
  std::vector<MoasAlert> ctx_storage_;
  Timestamp clock_ = 0;
  std::map<std::uint64_t, bool> circuit_served_;  // id -> served a vulnerable request
  std::set<std::string> relays_used_;
  std::map<std::string, int> relay_load_;
};

}  // namespace detail

// Deterministic replay of one client model over a workload. Safety of every
// served request is recorded under the full asymmetric, hijack-augmented
// adversary, regardless of whether the model itself considered it.
inline SimReport run_simulation(const ClientModel& model, const WorkloadStream& workload,
                                const ConsensusSnapshot& snapshot,
                                const GraphUpdateBundle& bundle,
                                const AsTopology& topology,
                                const std::vector<MoasAlert>& alerts, SeededRng& rng) {
  SimReport report;
  std::vector<detail::ReplayRecord> records;
  detail::ReplayDriver driver(model, snapshot, bundle, topology, alerts, rng);
  driver.run(workload, report, records);
  return report;
}

enum class AdversaryMode { ForwardOnly, Asymmetric };

struct AdversaryComparison {
  double forward_fraction = 0.0;
  double asymmetric_fraction = 0.0;
  double underestimation_gap = 0.0;
  std::size_t forward_safe_asym_vulnerable = 0;
};

// Replay once, then judge the same circuits under the forward-only adversary
// and under the full bidirectional one.
inline AdversaryComparison compare_adversary_models(
    const ClientModel& model, const WorkloadStream& workload,
    const ConsensusSnapshot& snapshot, const GraphUpdateBundle& bundle,
    const AsTopology& topology, const std::vector<MoasAlert>& alerts, SeededRng& rng) {
  SimReport report;
  std::vector<detail::ReplayRecord> records;
  detail::ReplayDriver driver(model, snapshot, bundle, topology, alerts, rng);
  driver.run(workload, report, records);
  AdversaryComparison cmp;
  std::size_t served = 0, fwd_vulnerable = 0, asym_vulnerable = 0;
  SafetyContext ctx{&topology, &bundle, &alerts};
  for (const auto& rec : records) {
    if (rec.failed) continue;
    ++served;
    bool fwd_safe = true, asym_safe = true;
    try {
      fwd_safe = mark_safety(compute_exposure(rec.circuit, rec.request, ctx,
                                              ExposureMode::ForwardOnly))
                     .safe;
    } catch (const ExposureError&) {
      fwd_safe = false;
    }
    try {
      asym_safe = mark_safety(compute_exposure(rec.circuit, rec.request, ctx,
                                               ExposureMode::Bidirectional))
                      .safe;
    } catch (const ExposureError&) {
      asym_safe = false;
    }
    if (!fwd_safe) ++fwd_vulnerable;
    if (!asym_safe) ++asym_vulnerable;
    if (fwd_safe && !asym_safe) ++cmp.forward_safe_asym_vulnerable;
  }
  if (served > 0) {
    cmp.forward_fraction = static_cast<double>(fwd_vulnerable) / served;
    cmp.asymmetric_fraction = static_cast<double>(asym_vulnerable) / served;
  }
  cmp.underestimation_gap = cmp.asymmetric_fraction - cmp.forward_fraction;
  return cmp;
}

struct AccuracyRow {
  AsNumber src = 0;
  AsNumber dst = 0;
  PredictionBasis basis = PredictionBasis::SimulatedFallback;
  std::size_t over = 0;   // predicted but not on the true path
  std::size_t under = 0;  // on the true path but missed
};

struct PathAccuracyReport {
  std::vector<AccuracyRow> rows;
  std::vector<std::string> warnings;
  // (basis, over, under) -> row count
  std::map<std::tuple<PredictionBasis, std::size_t, std::size_t>, std::size_t> histogram;
};

inline const char* basis_token(PredictionBasis b) {
  switch (b) {
    case PredictionBasis::Measured: return "measured";
    case PredictionBasis::SimulatedFallback: return "simulated";
    case PredictionBasis::MixedAugmented: return "mixed";
  }
  return "simulated";
}

// Truth file: CSV `src_asn,dst_asn,path` with the exact AS path
// hyphen-separated. Rows whose endpoints the topology does not know are
// skipped with a warning.
inline PathAccuracyReport path_accuracy_report(const GraphUpdateBundle& bundle,
                                               const AsTopology& topology,
                                               std::istream& truth) {
  PathAccuracyReport report;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(truth, line)) {
    ++lineno;
    std::string t = detail::strip(line);
    if (t.empty() || t[0] == '#') continue;
    auto parts = detail::split(t, ',');
    if (parts.size() != 3) throw ParseError("expected src_asn,dst_asn,path", lineno);
    auto src = parse_asn(detail::strip(parts[0]));
    auto dst = parse_asn(detail::strip(parts[1]));
    if (!src || !dst) throw ParseError("bad AS number", lineno);
    AsSet truth_set;
    for (const std::string& hop : detail::split(detail::strip(parts[2]), '-')) {
      auto asn = parse_asn(detail::strip(hop));
      if (!asn) throw ParseError("bad AS number in path", lineno);
      truth_set.insert(*asn);
    }
    if (!topology.contains(*src) || !topology.contains(*dst)) {
      report.warnings.push_back("line " + std::to_string(lineno) +
                                ": endpoints unknown to topology, row skipped");
      continue;
    }
    PathPrediction pred = predict(bundle, topology, *src, *dst);
    AccuracyRow row;
    row.src = *src;
    row.dst = *dst;
    row.basis = pred.basis;
    for (AsNumber as : pred.ases)
      if (!truth_set.count(as)) ++row.over;
    for (AsNumber as : truth_set)
      if (!pred.ases.count(as)) ++row.under;
    ++report.histogram[{row.basis, row.over, row.under}];
    report.rows.push_back(row);
  }
  return report;
}

inline void write_accuracy_csv(const PathAccuracyReport& report, std::ostream& out) {
  out << "basis,over,under,count\n";
  for (const auto& [key, count] : report.histogram) {
    out << basis_token(std::get<0>(key)) << "," << std::get<1>(key) << ","
        << std::get<2>(key) << "," << count << "\n";
  }
}

inline void write_summary_csv(const SimReport& report, std::ostream& out) {
  char buf[64];
  out << "metric,value\n";
  std::snprintf(buf, sizeof(buf), "%.6f", report.vulnerable_circuit_fraction);
  out << "vulnerable_circuit_fraction," << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.6f", report.vulnerable_request_fraction);
  out << "vulnerable_request_fraction," << buf << "\n";
  out << "unique_relays," << report.unique_relays << "\n";
  out << "allocations_reused," << report.allocations_reused << "\n";
  out << "allocations_built," << report.allocations_built << "\n";
  out << "requests_failed," << report.requests_failed << "\n";
  for (const auto& [fp, count] : report.per_relay_load)
    out << "relay_load." << fp << "," << count << "\n";
}

inline void write_trace_jsonl(const SimReport& report, std::ostream& out) {
  for (const RequestTrace& t : report.traces) {
    nlohmann::json rec;
    rec["request_index"] = t.index;
    rec["circuit_id"] = t.circuit_id;
    rec["reused"] = t.reused;
    rec["safe"] = t.safe;
    rec["adversaries"] = std::vector<AsNumber>(t.adversaries.begin(), t.adversaries.end());
    rec["failed"] = t.failed;
    out << rec.dump() << "\n";
  }
}

}  // namespace cipollino
