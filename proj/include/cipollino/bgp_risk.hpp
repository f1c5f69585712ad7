#pragma once

// Active-adversary modeling: MOAS anomaly ingestion, per-prefix suspect
// sets, and hijack/interception feasibility under exact-prefix origination
// against the routing model. Decision ties are resolved in the attacker's
// favor throughout.

#include <algorithm>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cipollino/as_topology.hpp"
#include "cipollino/net_types.hpp"

namespace cipollino {

struct MoasAlert {
  Timestamp observed_at = 0;
  Prefix prefix;
  AsSet origins;  // >= 2 announced origins
  std::optional<AsNumber> registered_origin;
  bool unverifiable = false;  // prefix absent from the table

  // Announced origins minus the registered one; with no registered origin
  // every announcer is suspect.
  AsSet suspects() const {
    AsSet out = origins;
    if (registered_origin) out.erase(*registered_origin);
    return out;
  }
};

// Feed: CSV `timestamp,prefix,origins` with origins semicolon-separated,
// e.g. `2016-03-01T10:00:00Z,10.0.0.0/8,2;666`.
inline std::vector<MoasAlert> ingest_moas(std::istream& in, const AsTopology& topology) {
  std::vector<MoasAlert> alerts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = detail::strip(line);
    if (t.empty() || t[0] == '#') continue;
    auto parts = detail::split(t, ',');
    if (parts.size() != 3) throw ParseError("expected timestamp,prefix,origins", lineno);
    MoasAlert alert;
    auto ts = parse_rfc3339_utc(detail::strip(parts[0]));
    if (!ts) throw ParseError("bad timestamp '" + parts[0] + "'", lineno);
    alert.observed_at = *ts;
    auto pfx = parse_prefix(detail::strip(parts[1]));
    if (!pfx) throw ParseError("bad prefix '" + parts[1] + "'", lineno);
    alert.prefix = *pfx;
    for (const std::string& o : detail::split(detail::strip(parts[2]), ';')) {
      auto asn = parse_asn(detail::strip(o));
      if (!asn) throw ParseError("bad origin ASN '" + o + "'", lineno);
      alert.origins.insert(*asn);
    }
    if (alert.origins.size() < 2)
      throw ParseError("MOAS alert needs at least two distinct origins", lineno);
    alert.registered_origin = topology.origin_of(alert.prefix);
    alert.unverifiable = !alert.registered_origin.has_value();
    alerts.push_back(std::move(alert));
  }
  return alerts;
}

// Union of suspects over alerts whose prefix equals or covers the query.
inline AsSet suspects_for(const std::vector<MoasAlert>& alerts, const Prefix& prefix) {
  AsSet out;
  for (const MoasAlert& a : alerts) {
    if (!a.prefix.covers(prefix)) continue;
    AsSet s = a.suspects();
    out.insert(s.begin(), s.end());
  }
  return out;
}

// Suspects attributable to an AS: alerts on any prefix whose registered
// origin is that AS. Used when only the ASN of an endpoint is known.
inline AsSet suspects_for_origin(const std::vector<MoasAlert>& alerts, AsNumber origin) {
  AsSet out;
  for (const MoasAlert& a : alerts) {
    if (!a.registered_origin || *a.registered_origin != origin) continue;
    AsSet s = a.suspects();
    out.insert(s.begin(), s.end());
  }
  return out;
}

struct SuspectSets {
  AsSet h_en, h_ex, h_src, h_dst;
};

enum class AttackKind { Hijack, Interception };

struct HijackScenario {
  AsNumber attacker = 0;
  Prefix victim_prefix;
  AsNumber observer = 0;
  AttackKind kind = AttackKind::Hijack;
};

namespace detail {

inline void require_known(const AsTopology& topo, AsNumber as, const char* role) {
  if (!topo.contains(as))
    throw LookupError(std::string("unknown ") + role + " AS " + std::to_string(as));
}

constexpr unsigned kVictimBit = 1u;
constexpr unsigned kAttackerBit = 2u;

}  // namespace detail

// True iff the source's post-attack decision (customer > peer > provider,
// then path length, ties to the attacker) selects a route ending at the
// attacker when the attacker originates the victim's prefix. The victim
// and the attacker both keep their own announcements, so source == victim
// is never captured and source == attacker trivially is.
inline bool hijack_feasible(const AsTopology& topology, AsNumber attacker,
                            AsNumber source, AsNumber victim) {
  if (attacker == victim)
    throw ArgumentError("hijack_feasible: attacker must differ from victim");
  detail::require_known(topology, attacker, "attacker");
  detail::require_known(topology, source, "source");
  detail::require_known(topology, victim, "victim");
  RouteTable post = compute_routes(topology, {victim, attacker});
  const RouteEntry* e = post.find(source);
  if (!e) return false;
  return (e->origin_mask & detail::kAttackerBit) != 0;
}

// A hijack the attacker can forward onward: some pre-attack best next hop of
// the attacker still delivers to the victim after the attack converges.
inline bool intercept_feasible(const AsTopology& topology, AsNumber attacker,
                               AsNumber source, AsNumber victim) {
  if (!hijack_feasible(topology, attacker, source, victim)) return false;
  RouteTable pre = compute_routes(topology, {victim});
  const RouteEntry* at = pre.find(attacker);
  if (!at || at->cls == RouteClass::Origin) return false;
  RouteTable post = compute_routes(topology, {victim, attacker});
  for (AsNumber nh : at->next_hops) {
    const RouteEntry* pe = post.find(nh);
    if (pe && (pe->origin_mask & detail::kVictimBit)) return true;
  }
  return false;
}

struct AttackerRow {
  AsNumber attacker = 0;
  std::size_t attempts = 0;
  std::size_t hijacks = 0;
  std::size_t interceptions = 0;
  double hijack_fraction() const {
    return attempts == 0 ? 0.0 : static_cast<double>(hijacks) / attempts;
  }
  double intercept_fraction() const {
    return attempts == 0 ? 0.0 : static_cast<double>(interceptions) / attempts;
  }
};

struct VictimRow {
  AsNumber victim = 0;
  std::size_t attempts = 0;
  std::size_t successes = 0;  // successful hijacks
  double success_fraction() const {
    return attempts == 0 ? 0.0 : static_cast<double>(successes) / attempts;
  }
};

struct AttackMatrix {
  std::vector<AttackerRow> attackers;  // sorted by ASN
  std::vector<VictimRow> victims;      // sorted by ASN
};

// Degenerate combinations (attacker equals source or victim) are excluded
// from the attempt counts.
inline AttackMatrix attack_success_matrix(
    const AsTopology& topology, const AsSet& attackers,
    const std::vector<std::pair<AsNumber, AsNumber>>& pairs) {
  if (attackers.empty() || pairs.empty())
    throw ArgumentError("attack_success_matrix: attackers and pairs must be non-empty");
  std::map<AsNumber, AttackerRow> by_attacker;
  std::map<AsNumber, VictimRow> by_victim;
  for (AsNumber a : attackers) {
    AttackerRow& row = by_attacker[a];
    row.attacker = a;
    for (const auto& [source, victim] : pairs) {
      VictimRow& vrow = by_victim[victim];
      vrow.victim = victim;
      if (a == victim || a == source) continue;
      ++row.attempts;
      ++vrow.attempts;
      if (hijack_feasible(topology, a, source, victim)) {
        ++row.hijacks;
        ++vrow.successes;
        if (intercept_feasible(topology, a, source, victim)) ++row.interceptions;
      }
    }
  }
  AttackMatrix m;
  for (auto& [_, row] : by_attacker) m.attackers.push_back(row);
  for (auto& [_, row] : by_victim) m.victims.push_back(row);
  return m;
}

inline void write_attacker_csv(const AttackMatrix& m, std::ostream& out) {
  out << "attacker_asn,hijack_fraction,intercept_fraction\n";
  for (const auto& r : m.attackers) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%u,%.6f,%.6f", r.attacker, r.hijack_fraction(),
                  r.intercept_fraction());
    out << buf << "\n";
  }
}

inline void write_victim_csv(const AttackMatrix& m, std::ostream& out) {
  out << "victim_asn,attempts,success_fraction\n";
  for (const auto& r : m.victims) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%u,%zu,%.6f", r.victim, r.attempts,
                  r.success_fraction());
    out << buf << "\n";
  }
}

}  // namespace cipollino
