#pragma once

// Relay network model: consensus ingestion, exit policies, relay
// constraints (family, /16, guards), bandwidth-weighted selection, and the
// vanilla client's pre-emptive circuit behavior.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cipollino/as_topology.hpp"
#include "cipollino/net_types.hpp"
#include "cipollino/rng.hpp"

namespace cipollino {

enum class RelayFlag { Guard, Exit, Stable, Fast };

inline std::optional<RelayFlag> parse_relay_flag(const std::string& s) {
  if (s == "Guard") return RelayFlag::Guard;
  if (s == "Exit") return RelayFlag::Exit;
  if (s == "Stable") return RelayFlag::Stable;
  if (s == "Fast") return RelayFlag::Fast;
  return std::nullopt;
}

struct PolicyRule {
  bool accept = false;
  std::optional<Prefix> pattern;  // nullopt matches any address
  int port_lo = 1;
  int port_hi = 65535;
};

// First-match evaluation; an address/port not matched by any rule is
// accepted (fixtures carry explicit catch-all tails).
struct ExitPolicy {
  std::vector<PolicyRule> rules;
};

struct Relay {
  std::string fingerprint;
  std::uint32_t address = 0;
  std::optional<AsNumber> asn;  // unresolvable addresses stay flagged
  std::uint64_t bandwidth = 0;
  std::set<RelayFlag> flags;
  std::optional<std::string> family;
  ExitPolicy exit_policy;

  bool has_flag(RelayFlag f) const { return flags.count(f) != 0; }
  std::uint32_t slash16() const { return address >> 16; }
};

struct ConsensusSnapshot {
  Timestamp valid_at = 0;
  std::vector<Relay> relays;

  const Relay* find(const std::string& fingerprint) const {
    for (const Relay& r : relays)
      if (r.fingerprint == fingerprint) return &r;
    return nullptr;
  }
  std::vector<const Relay*> with_flag(RelayFlag f) const {
    std::vector<const Relay*> out;
    for (const Relay& r : relays)
      if (r.has_flag(f)) out.push_back(&r);
    return out;
  }
  std::vector<const Relay*> all() const {
    std::vector<const Relay*> out;
    for (const Relay& r : relays) out.push_back(&r);
    return out;
  }
  bool usable() const {
    bool guard = false, exit = false;
    for (const Relay& r : relays) {
      guard = guard || r.has_flag(RelayFlag::Guard);
      exit = exit || r.has_flag(RelayFlag::Exit);
    }
    return !relays.empty() && guard && exit;
  }
};

// Consensus file: JSON-lines with header `{"valid_at": "<RFC3339>"}` then per
// relay: `{"fp": "<hex>", "ip": "<dotted>", "bw": <int>, "flags": [...],
// "family": "<id or null>", "policy": [["reject","*",25,25], ...]}`.
inline ConsensusSnapshot load_consensus(std::istream& in, const AsTopology& topology) {
  ConsensusSnapshot snap;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  std::set<std::string> fingerprints;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = detail::strip(line);
    if (t.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(t);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad JSON record: ") + e.what(), lineno);
    }
    if (!header_seen) {
      if (!rec.contains("valid_at"))
        throw ParseError("first record must be the consensus header", lineno);
      auto ts = parse_rfc3339_utc(rec["valid_at"].get<std::string>());
      if (!ts) throw ParseError("bad valid_at timestamp", lineno);
      snap.valid_at = *ts;
      header_seen = true;
      continue;
    }
    Relay r;
    try {
      r.fingerprint = rec.at("fp").get<std::string>();
      auto ip = parse_ipv4(rec.at("ip").get<std::string>());
      if (!ip) throw ParseError("bad relay address", lineno);
      r.address = *ip;
      r.bandwidth = rec.at("bw").get<std::uint64_t>();
      for (const auto& jf : rec.at("flags")) {
        auto f = parse_relay_flag(jf.get<std::string>());
        if (!f) throw ParseError("unknown flag '" + jf.get<std::string>() + "'", lineno);
        r.flags.insert(*f);
      }
      if (rec.contains("family") && !rec["family"].is_null())
        r.family = rec["family"].get<std::string>();
      for (const auto& jr : rec.at("policy")) {
        if (!jr.is_array() || jr.size() != 4)
          throw ParseError("policy rule must be [action, pattern, lo, hi]", lineno);
        PolicyRule rule;
        std::string action = jr[0].get<std::string>();
        if (action == "accept")
          rule.accept = true;
        else if (action == "reject")
          rule.accept = false;
        else
          throw ParseError("policy action must be accept or reject", lineno);
        std::string pattern = jr[1].get<std::string>();
        if (pattern != "*") {
          auto pfx = parse_prefix(pattern);
          if (!pfx) throw ParseError("bad policy pattern '" + pattern + "'", lineno);
          rule.pattern = *pfx;
        }
        rule.port_lo = jr[2].get<int>();
        rule.port_hi = jr[3].get<int>();
        if (rule.port_lo < 1 || rule.port_lo > rule.port_hi || rule.port_hi > 65535)
          throw ParseError("bad policy port range", lineno);
        r.exit_policy.rules.push_back(rule);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad relay record: ") + e.what(), lineno);
    }
    if (r.fingerprint.empty()) throw ParseError("empty fingerprint", lineno);
    if (!fingerprints.insert(r.fingerprint).second)
      throw IntegrityError("duplicate relay fingerprint " + r.fingerprint);
    r.asn = ip_to_asn(topology, r.address);
    snap.relays.push_back(std::move(r));
  }
  if (!header_seen) throw ParseError("consensus is empty, header record required", 1);
  if (snap.relays.empty()) throw IntegrityError("consensus contains no relays");
  return snap;
}

inline bool exit_supports(const Relay& relay, std::uint32_t ip, int port) {
  if (port < 1 || port > 65535)
    throw ArgumentError("exit_supports: port out of range");
  for (const PolicyRule& rule : relay.exit_policy.rules) {
    if (port < rule.port_lo || port > rule.port_hi) continue;
    if (rule.pattern && !rule.pattern->contains(ip)) continue;
    return rule.accept;
  }
  return true;
}

// Port-only variant used for pre-emptive building, where no concrete
// destination address exists yet: evaluates the policy for a generic
// address, skipping rules scoped to specific prefixes.
inline bool exit_supports_port(const Relay& relay, int port) {
  if (port < 1 || port > 65535)
    throw ArgumentError("exit_supports_port: port out of range");
  for (const PolicyRule& rule : relay.exit_policy.rules) {
    if (port < rule.port_lo || port > rule.port_hi) continue;
    if (rule.pattern) continue;
    return rule.accept;
  }
  return true;
}

// Bandwidth-proportional draw. Integer prefix-sum walk on the raw weights,
// so probabilities are exact.
inline const Relay* weighted_select(const std::vector<const Relay*>& relays,
                                    SeededRng& rng) {
  std::uint64_t total = 0;
  for (const Relay* r : relays) total += r->bandwidth;
  if (total == 0)
    throw SelectionError("weighted_select: all candidate bandwidths are zero");
  std::uint64_t draw = rng.below(total);
  for (const Relay* r : relays) {
    if (draw < r->bandwidth) return r;
    draw -= r->bandwidth;
  }
  return relays.back();  // unreachable
}

// Tor's per-circuit constraints: three distinct relays, pairwise distinct
// declared families, pairwise distinct /16s.
inline bool constraints_ok(const std::vector<const Relay*>& candidate) {
  if (candidate.size() != 3)
    throw ArgumentError("constraints_ok: candidate must have exactly 3 relays");
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = i + 1; j < 3; ++j) {
      const Relay* a = candidate[i];
      const Relay* b = candidate[j];
      if (a->fingerprint == b->fingerprint) return false;
      if (a->family && b->family && *a->family == *b->family) return false;
      if (a->slash16() == b->slash16()) return false;
    }
  }
  return true;
}

enum class CircuitState { Live, Dirty, Closed };

struct Circuit {
  std::uint64_t id = 0;
  Relay entry, middle, exit;
  Timestamp built_at = 0;
  std::optional<Timestamp> first_used_at;
  CircuitState state = CircuitState::Live;
};

struct CircuitPool {
  std::vector<Circuit> circuits;
  int target_size = 4;
};

struct GuardState {
  std::vector<std::string> ordered_guards;
  int size = 3;
};

struct CircuitIdGen {
  std::uint64_t next = 1;
  std::uint64_t operator()() { return next++; }
};

namespace detail {

inline void seed_guard_list(const ConsensusSnapshot& snapshot, GuardState& guards,
                            SeededRng& rng) {
  auto pool = snapshot.with_flag(RelayFlag::Guard);
  while (static_cast<int>(guards.ordered_guards.size()) < guards.size) {
    std::vector<const Relay*> fresh;
    for (const Relay* g : pool) {
      if (std::find(guards.ordered_guards.begin(), guards.ordered_guards.end(),
                    g->fingerprint) == guards.ordered_guards.end())
        fresh.push_back(g);
    }
    if (fresh.empty()) break;
    guards.ordered_guards.push_back(weighted_select(fresh, rng)->fingerprint);
  }
}

// Entry = first usable guard compatible with the chosen exit; the list is
// extended by a weighted draw over Guard relays when exhausted.
inline const Relay* pick_guard_for(const ConsensusSnapshot& snapshot,
                                   GuardState& guards, const Relay* exit,
                                   SeededRng& rng) {
  seed_guard_list(snapshot, guards, rng);
  auto compatible = [&](const Relay* g) {
    if (g->fingerprint == exit->fingerprint) return false;
    if (g->family && exit->family && *g->family == *exit->family) return false;
    return g->slash16() != exit->slash16();
  };
  for (const std::string& fp : guards.ordered_guards) {
    const Relay* g = snapshot.find(fp);
    if (g && g->has_flag(RelayFlag::Guard) && compatible(g)) return g;
  }
  std::vector<const Relay*> fresh;
  for (const Relay* g : snapshot.with_flag(RelayFlag::Guard)) {
    if (!compatible(g)) continue;
    if (std::find(guards.ordered_guards.begin(), guards.ordered_guards.end(),
                  g->fingerprint) == guards.ordered_guards.end())
      fresh.push_back(g);
  }
  if (fresh.empty()) return nullptr;
  const Relay* g = weighted_select(fresh, rng);
  guards.ordered_guards.push_back(g->fingerprint);
  return g;
}

// Middle drawn over all relays, retried alone on a constraint conflict so
// the entry/exit marginals keep their bandwidth shares.
inline const Relay* pick_middle(const ConsensusSnapshot& snapshot, const Relay* entry,
                                const Relay* exit, SeededRng& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    const Relay* middle = weighted_select(snapshot.all(), rng);
    if (constraints_ok({entry, middle, exit})) return middle;
  }
  return nullptr;
}

template <typename ExitPred>
inline Circuit build_circuit(const ConsensusSnapshot& snapshot, GuardState& guards,
                             ExitPred&& exit_ok, SeededRng& rng, Timestamp now,
                             CircuitIdGen& ids) {
  std::vector<const Relay*> exits;
  for (const Relay* r : snapshot.with_flag(RelayFlag::Exit))
    if (exit_ok(*r)) exits.push_back(r);
  if (exits.empty()) throw NoExitError("no exit relay supports the destination");
  const int kMaxAttempts = 10;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const Relay* exit = weighted_select(exits, rng);
    const Relay* entry = pick_guard_for(snapshot, guards, exit, rng);
    if (!entry) continue;
    const Relay* middle = pick_middle(snapshot, entry, exit, rng);
    if (!middle) continue;
    Circuit c;
    c.id = ids();
    c.entry = *entry;
    c.middle = *middle;
    c.exit = *exit;
    c.built_at = now;
    c.state = CircuitState::Live;
    return c;
  }
  throw SelectionError("circuit construction failed: constraints unsatisfiable");
}

}  // namespace detail

// The vanilla client's circuit construction: sticky guard entry,
// bandwidth-weighted exit among supporting exits, bandwidth-weighted middle.
inline Circuit vanilla_build(const ConsensusSnapshot& snapshot, GuardState& guards,
                             std::uint32_t dest_ip, int dest_port, SeededRng& rng,
                             Timestamp now, CircuitIdGen& ids) {
  return detail::build_circuit(
      snapshot, guards,
      [&](const Relay& r) { return exit_supports(r, dest_ip, dest_port); }, rng, now,
      ids);
}

// Keep at least two live circuits for every port seen within the last hour.
// Existing circuits are never torn down here.
inline void vanilla_pool_maintain(const ConsensusSnapshot& snapshot, CircuitPool& pool,
                                  const std::map<int, Timestamp>& recent_ports,
                                  Timestamp now, GuardState& guards, SeededRng& rng,
                                  CircuitIdGen& ids) {
  constexpr Timestamp kWindow = 3600;
  for (const auto& [port, last_seen] : recent_ports) {
    if (now - last_seen > kWindow) continue;
    int live = 0;
    for (const Circuit& c : pool.circuits)
      if (c.state == CircuitState::Live && exit_supports_port(c.exit, port)) ++live;
    while (live < 2) {
      pool.circuits.push_back(detail::build_circuit(
          snapshot, guards, [&](const Relay& r) { return exit_supports_port(r, port); },
          rng, now, ids));
      ++live;
    }
  }
}

}  // namespace cipollino
