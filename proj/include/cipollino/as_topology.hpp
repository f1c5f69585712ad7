#pragma once

// AS-level topology: CAIDA serial-1 style relationship ingestion, a
// longest-prefix-match prefix table, interdomain route simulation under the
// Gao-Rexford decision model, and an exhaustive valley-free path enumerator
// for cross-checking the simulator at desk scale.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cipollino/net_types.hpp"

namespace cipollino {

enum class RelationshipKind { ProviderToCustomer, PeerToPeer };

struct AsRelationship {
  AsNumber a = 0;  // provider when kind == ProviderToCustomer
  AsNumber b = 0;
  RelationshipKind kind = RelationshipKind::PeerToPeer;
};

class AsTopology {
 public:
  void add_relationship(AsNumber a, AsNumber b, RelationshipKind kind) {
    if (a == b) throw ConsistencyError("self relationship for AS " + std::to_string(a));
    auto key = std::minmax(a, b);
    // Kind is keyed on the unordered pair; for p2c the direction matters too.
    int code = kind == RelationshipKind::PeerToPeer ? 0 : (a < b ? 1 : 2);
    auto [it, inserted] = edge_kinds_.try_emplace(key, code);
    if (!inserted) {
      if (it->second != code)
        throw ConsistencyError("conflicting relationship between AS " +
                               std::to_string(a) + " and AS " + std::to_string(b));
      return;  // exact duplicate, dedup silently
    }
    touch(a);
    touch(b);
    if (kind == RelationshipKind::PeerToPeer) {
      peers_[a].push_back(b);
      peers_[b].push_back(a);
    } else {
      customers_[a].push_back(b);
      providers_[b].push_back(a);
    }
  }

  void add_prefix(const Prefix& prefix, AsNumber origin) {
    auto [it, inserted] = prefix_table_.try_emplace(prefix, origin);
    if (!inserted && it->second != origin)
      throw ConsistencyError("conflicting origin for prefix " + prefix.to_string());
  }

  void add_stub(AsNumber stub, AsNumber provider) {
    add_relationship(provider, stub, RelationshipKind::ProviderToCustomer);
    stubs_.insert(stub);
  }

  // An AS with no relationships at all, e.g. an origin seen only in the
  // prefix table.
  void add_node(AsNumber as) { touch(as); }

  bool contains(AsNumber as) const { return nodes_.count(as) != 0; }
  const AsSet& ases() const { return nodes_; }
  std::size_t edge_count() const { return edge_kinds_.size(); }
  const AsSet& stubs() const { return stubs_; }
  const std::map<Prefix, AsNumber>& prefix_table() const { return prefix_table_; }

  const std::vector<AsNumber>& providers_of(AsNumber as) const { return adj(providers_, as); }
  const std::vector<AsNumber>& customers_of(AsNumber as) const { return adj(customers_, as); }
  const std::vector<AsNumber>& peers_of(AsNumber as) const { return adj(peers_, as); }

  // Origin of the exact prefix, if registered.
  std::optional<AsNumber> origin_of(const Prefix& p) const {
    auto it = prefix_table_.find(p);
    if (it == prefix_table_.end()) return std::nullopt;
    return it->second;
  }

  // Longest matching prefix for an address.
  std::optional<Prefix> match_prefix(std::uint32_t ip) const {
    for (int len = 32; len >= 0; --len) {
      Prefix probe{len == 0 ? 0u : (ip & (~std::uint32_t{0} << (32 - len))), len};
      if (prefix_table_.count(probe)) return probe;
    }
    return std::nullopt;
  }

 private:
  static const std::vector<AsNumber>& adj(
      const std::unordered_map<AsNumber, std::vector<AsNumber>>& m, AsNumber as) {
    static const std::vector<AsNumber> kEmpty;
    auto it = m.find(as);
    return it == m.end() ? kEmpty : it->second;
  }
  void touch(AsNumber as) { nodes_.insert(as); }

  AsSet nodes_;
  AsSet stubs_;
  std::map<std::pair<AsNumber, AsNumber>, int> edge_kinds_;
  std::unordered_map<AsNumber, std::vector<AsNumber>> providers_;
  std::unordered_map<AsNumber, std::vector<AsNumber>> customers_;
  std::unordered_map<AsNumber, std::vector<AsNumber>> peers_;
  std::map<Prefix, AsNumber> prefix_table_;
};

namespace detail {

inline std::string strip(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    std::size_t next = s.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(s.substr(pos));
      break;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

}  // namespace detail

// Relationships: lines `<asn1>|<asn2>|<rel>`, rel -1 = asn1 provider of asn2,
// 0 = peers. Prefixes: lines `<a.b.c.d/len>|<asn>`. Optional stubs:
// `<stub_asn>|<provider_asn>`. `#` starts a comment in all three.
inline AsTopology load_topology(std::istream& relationships, std::istream& prefixes,
                                std::istream* stubs = nullptr) {
  AsTopology topo;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(relationships, line)) {
    ++lineno;
    std::string t = detail::strip(line);
    if (t.empty() || t[0] == '#') continue;
    auto parts = detail::split(t, '|');
    if (parts.size() != 3) throw ParseError("expected <asn>|<asn>|<rel>", lineno);
    auto a = parse_asn(detail::strip(parts[0]));
    auto b = parse_asn(detail::strip(parts[1]));
    std::string rel = detail::strip(parts[2]);
    if (!a || !b) throw ParseError("bad AS number in relationship", lineno);
    RelationshipKind kind;
    if (rel == "-1")
      kind = RelationshipKind::ProviderToCustomer;
    else if (rel == "0")
      kind = RelationshipKind::PeerToPeer;
    else
      throw ParseError("relationship must be -1 or 0, got '" + rel + "'", lineno);
    topo.add_relationship(*a, *b, kind);
  }
  lineno = 0;
  while (std::getline(prefixes, line)) {
    ++lineno;
    std::string t = detail::strip(line);
    if (t.empty() || t[0] == '#') continue;
    auto parts = detail::split(t, '|');
    if (parts.size() != 2) throw ParseError("expected <prefix>|<asn>", lineno);
    auto pfx = parse_prefix(detail::strip(parts[0]));
    auto origin = parse_asn(detail::strip(parts[1]));
    if (!pfx) throw ParseError("bad prefix '" + parts[0] + "'", lineno);
    if (!origin) throw ParseError("bad origin ASN", lineno);
    topo.add_prefix(*pfx, *origin);
  }
  if (stubs) {
    lineno = 0;
    while (std::getline(*stubs, line)) {
      ++lineno;
      std::string t = detail::strip(line);
      if (t.empty() || t[0] == '#') continue;
      auto parts = detail::split(t, '|');
      if (parts.size() != 2) throw ParseError("expected <stub_asn>|<provider_asn>", lineno);
      auto stub = parse_asn(detail::strip(parts[0]));
      auto provider = parse_asn(detail::strip(parts[1]));
      if (!stub || !provider) throw ParseError("bad AS number in stub line", lineno);
      topo.add_stub(*stub, *provider);
    }
  }
  return topo;
}

inline std::optional<AsNumber> ip_to_asn(const AsTopology& topology, std::uint32_t ip) {
  auto p = topology.match_prefix(ip);
  if (!p) return std::nullopt;
  return topology.origin_of(*p);
}

// --- Route simulation ------------------------------------------------------
//
// Decision model: an AS prefers routes learned from customers over peers over
// providers, then shorter AS paths; all remaining ties are retained. Export
// follows valley-free policy: customer-learned (and self-originated) routes
// go to everyone, everything else only to customers.

enum class RouteClass : int { Origin = 0, Customer = 1, Peer = 2, Provider = 3 };

struct RouteEntry {
  RouteClass cls = RouteClass::Origin;
  int length = 0;
  std::vector<AsNumber> next_hops;  // all tied best next hops
  unsigned origin_mask = 0;         // bit i set = origins[i] reachable via a tied route
};

struct RouteTable {
  std::vector<AsNumber> origins;
  std::unordered_map<AsNumber, RouteEntry> entries;

  const RouteEntry* find(AsNumber as) const {
    auto it = entries.find(as);
    return it == entries.end() ? nullptr : &it->second;
  }
};

// All-pairs-to-origin-set route computation. Every origin announces the same
// destination; each origin always keeps its own announcement.
inline RouteTable compute_routes(const AsTopology& topo,
                                 const std::vector<AsNumber>& origins) {
  RouteTable table;
  table.origins = origins;
  constexpr int kInf = std::numeric_limits<int>::max();

  std::unordered_map<AsNumber, int> cust_dist;
  std::deque<AsNumber> queue;
  for (AsNumber o : origins) {
    if (!cust_dist.count(o)) {
      cust_dist[o] = 0;
      queue.push_back(o);
    }
  }
  // Customer routes descend the whole way, so knowledge climbs customer->provider.
  while (!queue.empty()) {
    AsNumber x = queue.front();
    queue.pop_front();
    for (AsNumber p : topo.providers_of(x)) {
      if (!cust_dist.count(p)) {
        cust_dist[p] = cust_dist[x] + 1;
        queue.push_back(p);
      }
    }
  }

  AsSet origin_set(origins.begin(), origins.end());
  auto is_origin = [&](AsNumber x) { return origin_set.count(x) != 0; };

  // Pin the class and length of customer/peer/origin routes.
  std::unordered_map<AsNumber, std::pair<RouteClass, int>> final;
  for (AsNumber x : topo.ases()) {
    if (is_origin(x)) {
      final[x] = {RouteClass::Origin, 0};
      continue;
    }
    auto cd = cust_dist.find(x);
    if (cd != cust_dist.end()) {
      final[x] = {RouteClass::Customer, cd->second};
      continue;
    }
    int best = kInf;
    for (AsNumber y : topo.peers_of(x)) {
      auto yd = cust_dist.find(y);
      if (yd != cust_dist.end()) best = std::min(best, yd->second + 1);
    }
    if (best != kInf) final[x] = {RouteClass::Peer, best};
  }
  for (AsNumber o : origin_set)
    if (!topo.contains(o)) final[o] = {RouteClass::Origin, 0};

  // Provider routes cascade down from every AS that already has a route;
  // each AS exports its best route (any class) to its customers.
  using PqItem = std::pair<int, AsNumber>;
  std::priority_queue<PqItem, std::vector<PqItem>, std::greater<>> pq;
  for (const auto& [as, cl] : final) pq.push({cl.second, as});
  std::unordered_map<AsNumber, int> prov_dist;
  while (!pq.empty()) {
    auto [len, y] = pq.top();
    pq.pop();
    auto fy = final.find(y);
    if (fy == final.end() || fy->second.second != len) continue;  // stale
    for (AsNumber c : topo.customers_of(y)) {
      if (final.count(c) && final[c].first != RouteClass::Provider) continue;
      int cand = len + 1;
      auto pd = prov_dist.find(c);
      if (pd == prov_dist.end() || cand < pd->second) {
        prov_dist[c] = cand;
        final[c] = {RouteClass::Provider, cand};
        pq.push({cand, c});
      }
    }
  }

  // Next hops, then origin masks in ascending route length.
  std::vector<std::pair<int, AsNumber>> by_len;
  for (const auto& [as, cl] : final) by_len.push_back({cl.second, as});
  std::sort(by_len.begin(), by_len.end());

  auto exportable_up = [&](AsNumber n) {
    auto it = final.find(n);
    return it != final.end() && (it->second.first == RouteClass::Origin ||
                                 it->second.first == RouteClass::Customer);
  };
  auto has_len = [&](AsNumber n, int len) {
    auto it = final.find(n);
    return it != final.end() && it->second.second == len;
  };

  for (const auto& [len, x] : by_len) {
    RouteEntry entry;
    entry.cls = final[x].first;
    entry.length = len;
    if (entry.cls == RouteClass::Origin) {
      for (std::size_t i = 0; i < origins.size(); ++i)
        if (origins[i] == x) entry.origin_mask |= 1u << i;
    } else {
      const std::vector<AsNumber>* nbrs = nullptr;
      bool need_exportable = false;
      switch (entry.cls) {
        case RouteClass::Customer:
          nbrs = &topo.customers_of(x);
          need_exportable = true;
          break;
        case RouteClass::Peer:
          nbrs = &topo.peers_of(x);
          need_exportable = true;
          break;
        default:
          nbrs = &topo.providers_of(x);
          break;
      }
      for (AsNumber n : *nbrs) {
        if (need_exportable && !exportable_up(n)) continue;
        if (!has_len(n, len - 1)) continue;
        entry.next_hops.push_back(n);
        entry.origin_mask |= table.entries[n].origin_mask;
      }
      std::sort(entry.next_hops.begin(), entry.next_hops.end());
    }
    table.entries[x] = std::move(entry);
  }
  return table;
}

namespace detail {

inline const PathSet& expand_paths(const RouteTable& table, AsNumber x,
                                   std::unordered_map<AsNumber, PathSet>& memo) {
  auto it = memo.find(x);
  if (it != memo.end()) return it->second;
  PathSet out;
  const RouteEntry* e = table.find(x);
  if (e) {
    if (e->cls == RouteClass::Origin) {
      out.insert(AsPath{x});
    } else {
      for (AsNumber nh : e->next_hops) {
        for (const AsPath& sub : expand_paths(table, nh, memo)) {
          AsPath p;
          p.reserve(sub.size() + 1);
          p.push_back(x);
          p.insert(p.end(), sub.begin(), sub.end());
          out.insert(std::move(p));
        }
      }
    }
  }
  return memo.emplace(x, std::move(out)).first->second;
}

}  // namespace detail

// All equally-most-preferred loop-free valley-free paths from src to dst.
// Empty set when dst is unreachable from src.
inline PathSet simulate_route(const AsTopology& topology, AsNumber src, AsNumber dst) {
  if (!topology.contains(src))
    throw LookupError("unknown source AS " + std::to_string(src));
  if (!topology.contains(dst))
    throw LookupError("unknown destination AS " + std::to_string(dst));
  if (src == dst) return {AsPath{src}};
  RouteTable table = compute_routes(topology, {dst});
  if (!table.find(src)) return {};
  std::unordered_map<AsNumber, PathSet> memo;
  return detail::expand_paths(table, src, memo);
}

// Union of ASes over all tied best paths, without enumerating them: the
// nodes reachable from src along the tied next-hop DAG.
inline AsSet route_as_set(const RouteTable& table, AsNumber src) {
  AsSet seen;
  std::deque<AsNumber> queue;
  if (!table.find(src)) return seen;
  seen.insert(src);
  queue.push_back(src);
  while (!queue.empty()) {
    AsNumber x = queue.front();
    queue.pop_front();
    const RouteEntry* e = table.find(x);
    if (!e) continue;
    for (AsNumber nh : e->next_hops) {
      if (seen.insert(nh).second) queue.push_back(nh);
    }
  }
  return seen;
}

// Exhaustive loop-free valley-free enumeration, exponential; the desk-scale
// cross-check for simulate_route. max_len bounds the number of ASes per path.
inline PathSet enumerate_valley_free_paths(const AsTopology& topology, AsNumber src,
                                           AsNumber dst, int max_len) {
  if (max_len > 10)
    throw ArgumentError("enumerate_valley_free_paths: max_len must be <= 10");
  PathSet out;
  if (max_len < 1 || !topology.contains(src) || !topology.contains(dst)) return out;

  AsPath path{src};
  AsSet on_path{src};
  // ascending = no peer or down step taken yet
  auto dfs = [&](auto&& self, AsNumber x, bool ascending) -> void {
    if (x == dst) out.insert(path);
    if (static_cast<int>(path.size()) >= max_len) return;
    auto step = [&](AsNumber next, bool next_ascending) {
      if (on_path.count(next)) return;
      path.push_back(next);
      on_path.insert(next);
      self(self, next, next_ascending);
      path.pop_back();
      on_path.erase(next);
    };
    if (ascending) {
      for (AsNumber p : topology.providers_of(x)) step(p, true);
      for (AsNumber y : topology.peers_of(x)) step(y, false);
    }
    for (AsNumber c : topology.customers_of(x)) step(c, false);
  };
  dfs(dfs, src, true);
  return out;
}

}  // namespace cipollino
