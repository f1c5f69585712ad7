#pragma once

// The AS-aware defense: hijack-augmented exposure sets, circuit safety
// marking (a circuit is safe iff no AS can observe both of its ends),
// bandwidth-product load-balanced allocation from a pre-built pool, and
// on-demand construction with a minimum-exposure fallback.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cipollino/as_topology.hpp"
#include "cipollino/bgp_risk.hpp"
#include "cipollino/net_types.hpp"
#include "cipollino/path_oracle.hpp"
#include "cipollino/rng.hpp"
#include "cipollino/tor_net.hpp"

namespace cipollino {

enum class PoolEntryGuardMode { Head, Weighted };

struct ClientConfig {
  int pool_target = 4;
  int candidate_budget = 64;
  int feed_interval_seconds = 3600;
  int guard_list_size = 3;
  std::uint64_t rng_seed = 0;
  int dirty_timeout_seconds = 600;
  PoolEntryGuardMode pool_entry_guard = PoolEntryGuardMode::Head;
};

// Key-value text file, `key=value` per line, `#` comments.
inline ClientConfig parse_client_config(std::istream& in) {
  ClientConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = detail::strip(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value", lineno);
    std::string key = detail::strip(t.substr(0, eq));
    std::string value = detail::strip(t.substr(eq + 1));
    auto as_int = [&]() {
      auto v = detail::parse_u64(value);
      if (!v) throw ParseError("bad integer for " + key, lineno);
      return static_cast<int>(*v);
    };
    if (key == "pool_target")
      cfg.pool_target = as_int();
    else if (key == "candidate_budget")
      cfg.candidate_budget = as_int();
    else if (key == "feed_interval_seconds")
      cfg.feed_interval_seconds = as_int();
    else if (key == "guard_list_size")
      cfg.guard_list_size = as_int();
    else if (key == "dirty_timeout_seconds")
      cfg.dirty_timeout_seconds = as_int();
    else if (key == "rng_seed") {
      auto v = detail::parse_u64(value);
      if (!v) throw ParseError("bad integer for rng_seed", lineno);
      cfg.rng_seed = *v;
    } else if (key == "pool_entry_guard") {
      if (value == "head")
        cfg.pool_entry_guard = PoolEntryGuardMode::Head;
      else if (value == "weighted")
        cfg.pool_entry_guard = PoolEntryGuardMode::Weighted;
      else
        throw ParseError("pool_entry_guard must be head or weighted", lineno);
    } else {
      throw ParseError("unknown configuration key '" + key + "'", lineno);
    }
  }
  return cfg;
}

struct ConnectionRequest {
  Timestamp at = 0;
  std::uint32_t dest_ip = 0;
  int dest_port = 0;
  AsNumber client_asn = 0;
};

enum class ExposureMode { Bidirectional, ForwardOnly };

struct ExposureSets {
  AsSet src_en;  // ASes able to observe the client<->entry end, hijack-augmented
  AsSet ex_dst;  // ASes able to observe the exit<->destination end
  PredictionBasis src_en_basis = PredictionBasis::SimulatedFallback;
  PredictionBasis ex_dst_basis = PredictionBasis::SimulatedFallback;
  int augmented_suspects = 0;
};

struct SafetyVerdict {
  bool safe = false;
  AsSet adversaries;  // src_en intersect ex_dst
};

// Everything safety evaluation needs besides the circuit and the request.
struct SafetyContext {
  const AsTopology* topology = nullptr;
  const GraphUpdateBundle* bundle = nullptr;
  const std::vector<MoasAlert>* alerts = nullptr;

  const std::vector<MoasAlert>& alert_list() const {
    static const std::vector<MoasAlert> kNone;
    return alerts ? *alerts : kNone;
  }
};

namespace detail {

inline AsSet predicted_ases(const SafetyContext& ctx, AsNumber a, AsNumber b,
                            ExposureMode mode, PredictionBasis* basis_out = nullptr) {
  if (mode == ExposureMode::Bidirectional) {
    PathPrediction p = bidirectional_exposure(*ctx.bundle, *ctx.topology, a, b);
    if (basis_out) *basis_out = p.basis;
    return std::move(p.ases);
  }
  PathPrediction p = predict(*ctx.bundle, *ctx.topology, a, b);
  if (basis_out) *basis_out = p.basis;
  return std::move(p.ases);
}

}  // namespace detail

// Exposure at both ends of a circuit for one request, augmented by suspected
// hijackers: for each suspect h around an endpoint pair (a, b), the ASes on
// a<->h and h<->b join the exposure, covering what an interceptor of either
// endpoint's prefix could observe. Unresolvable destination fails closed.
inline ExposureSets compute_exposure(const Circuit& circuit,
                                     const ConnectionRequest& request,
                                     const SafetyContext& ctx,
                                     ExposureMode mode = ExposureMode::Bidirectional) {
  if (!circuit.entry.asn)
    throw ExposureError("entry relay address resolves to no AS");
  if (!circuit.exit.asn)
    throw ExposureError("exit relay address resolves to no AS");
  auto dst_asn = ip_to_asn(*ctx.topology, request.dest_ip);
  if (!dst_asn)
    throw ExposureError("destination address " + format_ipv4(request.dest_ip) +
                        " resolves to no AS");
  const AsNumber src = request.client_asn;
  const AsNumber en = *circuit.entry.asn;
  const AsNumber ex = *circuit.exit.asn;
  const AsNumber dst = *dst_asn;
  const auto& alerts = ctx.alert_list();

  AsSet h_en, h_ex, h_dst, h_src;
  if (!alerts.empty()) {
    auto en_prefix = ctx.topology->match_prefix(circuit.entry.address);
    auto ex_prefix = ctx.topology->match_prefix(circuit.exit.address);
    auto dst_prefix = ctx.topology->match_prefix(request.dest_ip);
    if (en_prefix) h_en = suspects_for(alerts, *en_prefix);
    if (ex_prefix) h_ex = suspects_for(alerts, *ex_prefix);
    if (dst_prefix) h_dst = suspects_for(alerts, *dst_prefix);
    // Only the client's ASN is known, not its address; attribute alerts on
    // any prefix registered to that AS.
    h_src = suspects_for_origin(alerts, src);
  }

  ExposureSets out;
  out.src_en = detail::predicted_ases(ctx, src, en, mode, &out.src_en_basis);
  AsSet en_side_suspects = h_en;
  en_side_suspects.insert(h_src.begin(), h_src.end());
  for (AsNumber h : en_side_suspects) {
    AsSet a = detail::predicted_ases(ctx, src, h, mode);
    AsSet b = detail::predicted_ases(ctx, h, en, mode);
    out.src_en.insert(a.begin(), a.end());
    out.src_en.insert(b.begin(), b.end());
    out.src_en.insert(h);
  }
  out.src_en.insert(src);
  out.src_en.insert(en);

  out.ex_dst = detail::predicted_ases(ctx, ex, dst, mode, &out.ex_dst_basis);
  AsSet ex_side_suspects = h_ex;
  ex_side_suspects.insert(h_dst.begin(), h_dst.end());
  for (AsNumber h : ex_side_suspects) {
    AsSet a = detail::predicted_ases(ctx, ex, h, mode);
    AsSet b = detail::predicted_ases(ctx, h, dst, mode);
    out.ex_dst.insert(a.begin(), a.end());
    out.ex_dst.insert(b.begin(), b.end());
    out.ex_dst.insert(h);
  }
  out.ex_dst.insert(ex);
  out.ex_dst.insert(dst);

  out.augmented_suspects =
      static_cast<int>(en_side_suspects.size() + ex_side_suspects.size());
  return out;
}

// Safe iff no AS sits on both ends.
inline SafetyVerdict mark_safety(const ExposureSets& exposure) {
  SafetyVerdict v;
  std::set_intersection(exposure.src_en.begin(), exposure.src_en.end(),
                        exposure.ex_dst.begin(), exposure.ex_dst.end(),
                        std::inserter(v.adversaries, v.adversaries.begin()));
  v.safe = v.adversaries.empty();
  return v;
}

// Exact bandwidth-product weighting over safe relay combinations: the i-th
// combination is chosen with probability
// (BW_en_i * BW_ex_i) / sum_j (BW_en_j * BW_ex_j).
struct Eq2Weights {
  std::vector<std::uint64_t> numerators;
  std::uint64_t denominator = 0;
  double probability(std::size_t i) const {
    return denominator == 0
               ? 0.0
               : static_cast<double>(numerators[i]) / static_cast<double>(denominator);
  }
};

inline Eq2Weights eq2_weights(
    const std::vector<std::pair<std::uint64_t, std::uint64_t>>& bandwidths) {
  Eq2Weights w;
  for (const auto& [en, ex] : bandwidths) {
    std::uint64_t product = en * ex;
    w.numerators.push_back(product);
    w.denominator += product;
  }
  return w;
}

inline std::size_t eq2_draw(const Eq2Weights& w, SeededRng& rng) {
  if (w.numerators.empty()) throw ArgumentError("eq2_draw: no candidates");
  if (w.denominator == 0) return rng.below(w.numerators.size());
  std::uint64_t draw = rng.below(w.denominator);
  for (std::size_t i = 0; i < w.numerators.size(); ++i) {
    if (draw < w.numerators[i]) return i;
    draw -= w.numerators[i];
  }
  return w.numerators.size() - 1;  // unreachable
}

// Cached verdicts keyed by (circuit, destination AS); invalidated wholesale
// when the alert feed advances or the bundle is swapped.
struct VerdictCache {
  std::map<std::pair<std::uint64_t, AsNumber>, SafetyVerdict> entries;
  std::uint64_t epoch = 0;
};

namespace detail {

inline SafetyVerdict verdict_for(const Circuit& circuit,
                                 const ConnectionRequest& request,
                                 const SafetyContext& ctx, VerdictCache* cache) {
  std::optional<std::pair<std::uint64_t, AsNumber>> key;
  if (cache) {
    auto dst = ip_to_asn(*ctx.topology, request.dest_ip);
    if (dst) {
      key = std::make_pair(circuit.id, *dst);
      auto it = cache->entries.find(*key);
      if (it != cache->entries.end()) return it->second;
    }
  }
  SafetyVerdict v;
  try {
    v = mark_safety(compute_exposure(circuit, request, ctx));
  } catch (const ExposureError&) {
    v.safe = false;  // fail closed; nothing cached for unverifiable requests
    return v;
  }
  if (cache && key) cache->entries.emplace(*key, v);
  return v;
}

}  // namespace detail

// Pick a live, usable, safe pooled circuit for the request; none is a value
// and the caller escalates to on-demand construction. Candidates are ordered
// by circuit id before the draw so results are reproducible.
inline Circuit* allocate(CircuitPool& pool, const ConnectionRequest& request,
                         const SafetyContext& ctx, SeededRng& rng,
                         VerdictCache* cache = nullptr) {
  std::vector<Circuit*> candidates;
  for (Circuit& c : pool.circuits) {
    if (c.state != CircuitState::Live) continue;
    if (!exit_supports(c.exit, request.dest_ip, request.dest_port)) continue;
    if (!detail::verdict_for(c, request, ctx, cache).safe) continue;
    candidates.push_back(&c);
  }
  if (candidates.empty()) return nullptr;
  std::sort(candidates.begin(), candidates.end(),
            [](const Circuit* a, const Circuit* b) { return a->id < b->id; });
  std::vector<std::pair<std::uint64_t, std::uint64_t>> bw;
  for (const Circuit* c : candidates)
    bw.push_back({c->entry.bandwidth, c->exit.bandwidth});
  return candidates[eq2_draw(eq2_weights(bw), rng)];
}

// Worst case: every candidate is unsafe. Minimize the adversary count;
// break ties by the bandwidth-product weighting.
inline Circuit fallback_select(
    const std::vector<std::pair<Circuit, SafetyVerdict>>& candidates, SeededRng& rng) {
  if (candidates.empty()) throw ArgumentError("fallback_select: no candidates");
  std::size_t best = candidates[0].second.adversaries.size();
  for (const auto& [_, verdict] : candidates)
    best = std::min(best, verdict.adversaries.size());
  std::vector<const std::pair<Circuit, SafetyVerdict>*> tied;
  for (const auto& cand : candidates)
    if (cand.second.adversaries.size() == best) tied.push_back(&cand);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> bw;
  for (const auto* cand : tied)
    bw.push_back({cand->first.entry.bandwidth, cand->first.exit.bandwidth});
  return tied[eq2_draw(eq2_weights(bw), rng)]->first;
}

struct OnDemandResult {
  Circuit circuit;
  SafetyVerdict verdict;
  bool unsafe_fallback = false;
};

// Destination-aware construction: sample (entry, exit) combinations, entries
// bandwidth-weighted over guards and exits over supporting exit relays, and
// return the first safe one. Within the candidate budget the untried
// combinations are swept deterministically once sampling stops finding new
// ones, so small fixtures are searched exhaustively.
inline OnDemandResult build_on_demand(const ConsensusSnapshot& snapshot,
                                      const ConnectionRequest& request,
                                      const SafetyContext& ctx,
                                      const ClientConfig& config, SeededRng& rng,
                                      Timestamp now, CircuitIdGen& ids) {
  std::vector<const Relay*> exits;
  for (const Relay* r : snapshot.with_flag(RelayFlag::Exit))
    if (exit_supports(*r, request.dest_ip, request.dest_port)) exits.push_back(r);
  if (exits.empty()) throw NoExitError("no exit relay supports the destination");
  std::vector<const Relay*> guards = snapshot.with_flag(RelayFlag::Guard);
  if (guards.empty()) throw SelectionError("no guard relays in consensus");

  auto materialize = [&](const Relay* entry, const Relay* exit) -> std::optional<Circuit> {
    const Relay* middle = detail::pick_middle(snapshot, entry, exit, rng);
    if (!middle) return std::nullopt;
    Circuit c;
    c.id = ids();
    c.entry = *entry;
    c.middle = *middle;
    c.exit = *exit;
    c.built_at = now;
    return c;
  };

  std::set<std::pair<std::string, std::string>> tried;
  std::vector<std::pair<const Relay*, const Relay*>> unsafe_combos;
  std::vector<SafetyVerdict> unsafe_verdicts;
  bool exposure_ok_somewhere = false;

  auto evaluate = [&](const Relay* entry, const Relay* exit) -> std::optional<OnDemandResult> {
    if (!tried.insert({entry->fingerprint, exit->fingerprint}).second)
      return std::nullopt;
    if (entry->fingerprint == exit->fingerprint) return std::nullopt;
    Circuit probe;
    probe.entry = *entry;
    probe.exit = *exit;
    SafetyVerdict verdict;
    try {
      verdict = mark_safety(compute_exposure(probe, request, ctx));
    } catch (const ExposureError&) {
      return std::nullopt;  // unverifiable combination, treated unsafe
    }
    exposure_ok_somewhere = true;
    if (verdict.safe) {
      auto circuit = materialize(entry, exit);
      if (!circuit) return std::nullopt;
      OnDemandResult result;
      result.circuit = std::move(*circuit);
      result.verdict = verdict;
      return result;
    }
    unsafe_combos.push_back({entry, exit});
    unsafe_verdicts.push_back(std::move(verdict));
    return std::nullopt;
  };

  const std::size_t budget = static_cast<std::size_t>(std::max(1, config.candidate_budget));
  std::size_t draws = 0;
  while (tried.size() < budget && draws < budget * 8) {
    ++draws;
    const Relay* exit = weighted_select(exits, rng);
    const Relay* entry = weighted_select(guards, rng);
    if (auto hit = evaluate(entry, exit)) return std::move(*hit);
  }
  if (tried.size() < budget) {
    // Deterministic sweep of whatever sampling missed.
    auto by_weight = [](const Relay* a, const Relay* b) {
      return a->bandwidth != b->bandwidth ? a->bandwidth > b->bandwidth
                                          : a->fingerprint < b->fingerprint;
    };
    std::sort(guards.begin(), guards.end(), by_weight);
    std::sort(exits.begin(), exits.end(), by_weight);
    for (const Relay* entry : guards) {
      for (const Relay* exit : exits) {
        if (tried.size() >= budget) break;
        if (auto hit = evaluate(entry, exit)) return std::move(*hit);
      }
    }
  }

  // No safe combination within budget.
  std::vector<std::pair<Circuit, SafetyVerdict>> fallback_candidates;
  for (std::size_t i = 0; i < unsafe_combos.size(); ++i) {
    auto circuit = materialize(unsafe_combos[i].first, unsafe_combos[i].second);
    if (circuit)
      fallback_candidates.push_back({std::move(*circuit), unsafe_verdicts[i]});
  }
  OnDemandResult result;
  result.unsafe_fallback = true;
  if (!fallback_candidates.empty()) {
    Circuit chosen = fallback_select(fallback_candidates, rng);
    for (auto& [circuit, verdict] : fallback_candidates) {
      if (circuit.id == chosen.id) {
        result.verdict = verdict;
        break;
      }
    }
    result.circuit = std::move(chosen);
    return result;
  }
  (void)exposure_ok_somewhere;
  // Every combination was unverifiable; build vanilla-style and fail closed.
  const Relay* exit = weighted_select(exits, rng);
  const Relay* entry = weighted_select(guards, rng);
  auto circuit = materialize(entry, exit);
  if (!circuit)
    throw SelectionError("on-demand construction failed: constraints unsatisfiable");
  result.circuit = std::move(*circuit);
  result.verdict.safe = false;
  return result;
}

// Refill the reserve to its target with vanilla-style construction (entry
// from the guard list, bandwidth-weighted exit and middle). Dirty and closed
// circuits are evicted first; live circuits beyond the target are closed
// oldest-built first. Returns the number of circuits built.
inline int replenish(CircuitPool& pool, const ConsensusSnapshot& snapshot,
                     GuardState& guards, SeededRng& rng, Timestamp now,
                     CircuitIdGen& ids,
                     PoolEntryGuardMode entry_mode = PoolEntryGuardMode::Head) {
  auto& circuits = pool.circuits;
  circuits.erase(std::remove_if(circuits.begin(), circuits.end(),
                                [](const Circuit& c) {
                                  return c.state != CircuitState::Live;
                                }),
                 circuits.end());
  if (static_cast<int>(circuits.size()) > pool.target_size) {
    std::sort(circuits.begin(), circuits.end(), [](const Circuit& a, const Circuit& b) {
      return a.built_at != b.built_at ? a.built_at < b.built_at : a.id < b.id;
    });
    circuits.erase(circuits.begin(),
                   circuits.begin() + (circuits.size() - pool.target_size));
  }
  int built = 0;
  while (static_cast<int>(circuits.size()) < pool.target_size) {
    try {
      if (entry_mode == PoolEntryGuardMode::Head) {
        circuits.push_back(detail::build_circuit(
            snapshot, guards, [](const Relay&) { return true; }, rng, now, ids));
      } else {
        // Weighted-guard variant: fresh draw per circuit instead of the
        // sticky list head.
        std::vector<const Relay*> gs = snapshot.with_flag(RelayFlag::Guard);
        if (gs.empty()) throw SelectionError("no guard relays in consensus");
        const Relay* entry = weighted_select(gs, rng);
        std::vector<const Relay*> exits = snapshot.with_flag(RelayFlag::Exit);
        if (exits.empty()) throw NoExitError("no exit relays in consensus");
        const Relay* exit = nullptr;
        for (int attempt = 0; attempt < 100 && !exit; ++attempt) {
          const Relay* candidate = weighted_select(exits, rng);
          if (candidate->fingerprint != entry->fingerprint) exit = candidate;
        }
        if (!exit) break;
        const Relay* middle = detail::pick_middle(snapshot, entry, exit, rng);
        if (!middle) break;
        Circuit c;
        c.id = ids();
        c.entry = *entry;
        c.middle = *middle;
        c.exit = *exit;
        c.built_at = now;
        circuits.push_back(std::move(c));
      }
      ++built;
    } catch (const NoExitError&) {
      break;
    } catch (const SelectionError&) {
      break;
    }
  }
  return built;
}

// New alerts can change suspect sets while circuits are live: drop cached
// verdicts so the next allocate re-marks per destination. Circuits are not
// torn down eagerly.
inline void reverify_pool(CircuitPool& pool, VerdictCache& cache,
                          std::uint64_t alerts_epoch) {
  (void)pool;
  if (alerts_epoch != cache.epoch) {
    cache.entries.clear();
    cache.epoch = alerts_epoch;
  }
}

}  // namespace cipollino
