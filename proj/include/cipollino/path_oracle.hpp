#pragma once

// Local replica of the path aggregator: destination-rooted routing DAGs with
// per-edge measurement provenance, measured-data-first path stitching, a
// simulation fallback, and coverage accounting.

#include <algorithm>
#include <deque>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "cipollino/as_topology.hpp"
#include "cipollino/net_types.hpp"

namespace cipollino {

enum class MeasurementSource {
  TracerouteAtlas,
  TracerouteArk,
  TracerouteIplane,
  ControlPlaneBgp,
  Simulated,
};

inline std::optional<MeasurementSource> parse_measurement_source(const std::string& s) {
  if (s == "atlas") return MeasurementSource::TracerouteAtlas;
  if (s == "ark") return MeasurementSource::TracerouteArk;
  if (s == "iplane") return MeasurementSource::TracerouteIplane;
  if (s == "bgp") return MeasurementSource::ControlPlaneBgp;
  if (s == "simulated") return MeasurementSource::Simulated;
  return std::nullopt;
}

inline const char* measurement_source_token(MeasurementSource s) {
  switch (s) {
    case MeasurementSource::TracerouteAtlas: return "atlas";
    case MeasurementSource::TracerouteArk: return "ark";
    case MeasurementSource::TracerouteIplane: return "iplane";
    case MeasurementSource::ControlPlaneBgp: return "bgp";
    case MeasurementSource::Simulated: return "simulated";
  }
  return "simulated";
}

struct EdgeProvenance {
  MeasurementSource source = MeasurementSource::Simulated;
  std::string measurement_id;  // empty iff source == Simulated
};

struct GraphEdge {
  AsNumber from = 0;
  AsNumber to = 0;
  EdgeProvenance provenance;
};

// Destination-rooted DAG: every edge lies on some path ending at dst.
struct DestinationGraph {
  AsNumber dst = 0;
  std::vector<GraphEdge> edges;

  std::unordered_map<AsNumber, std::vector<AsNumber>> successors() const {
    std::unordered_map<AsNumber, std::vector<AsNumber>> out;
    for (const auto& e : edges) out[e.from].push_back(e.to);
    for (auto& [_, v] : out) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    return out;
  }

  bool has_node(AsNumber as) const {
    if (as == dst && !edges.empty()) return true;
    for (const auto& e : edges)
      if (e.from == as || e.to == as) return true;
    return as == dst;
  }
};

struct GraphUpdateBundle {
  Timestamp generated_at = 0;
  std::string prefix_table_version;
  std::map<AsNumber, DestinationGraph> graphs;  // at most one per dst

  const DestinationGraph* graph_for(AsNumber dst) const {
    auto it = graphs.find(dst);
    return it == graphs.end() ? nullptr : &it->second;
  }
};

enum class PredictionBasis { Measured, SimulatedFallback, MixedAugmented };

struct PathPrediction {
  AsSet ases;
  PredictionBasis basis = PredictionBasis::SimulatedFallback;
};

namespace detail {

// DAG check oriented toward dst: dst has no out-edge, no cycles, and every
// node reaches dst.
inline void verify_destination_graph(const DestinationGraph& g) {
  std::unordered_map<AsNumber, std::vector<AsNumber>> succ;
  std::unordered_set<AsNumber> nodes{g.dst};
  for (const auto& e : g.edges) {
    if (e.from == g.dst)
      throw IntegrityError("destination graph for AS " + std::to_string(g.dst) +
                           " has an out-edge from its destination");
    if (e.from == e.to)
      throw IntegrityError("destination graph for AS " + std::to_string(g.dst) +
                           " has a self-loop");
    succ[e.from].push_back(e.to);
    nodes.insert(e.from);
    nodes.insert(e.to);
  }
  // Cycle detection, iterative three-color DFS.
  std::unordered_map<AsNumber, int> color;  // 0 white, 1 grey, 2 black
  for (AsNumber start : nodes) {
    if (color[start] != 0) continue;
    std::vector<std::pair<AsNumber, std::size_t>> stack{{start, 0}};
    color[start] = 1;
    while (!stack.empty()) {
      auto& [x, i] = stack.back();
      auto it = succ.find(x);
      if (it == succ.end() || i >= it->second.size()) {
        color[x] = 2;
        stack.pop_back();
        continue;
      }
      AsNumber next = it->second[i++];
      if (color[next] == 1)
        throw IntegrityError("cycle in destination graph for AS " +
                             std::to_string(g.dst));
      if (color[next] == 0) {
        color[next] = 1;
        stack.push_back({next, 0});
      }
    }
  }
  // Reverse reachability from dst.
  std::unordered_map<AsNumber, std::vector<AsNumber>> pred;
  for (const auto& e : g.edges) pred[e.to].push_back(e.from);
  std::unordered_set<AsNumber> reaches{g.dst};
  std::deque<AsNumber> queue{g.dst};
  while (!queue.empty()) {
    AsNumber x = queue.front();
    queue.pop_front();
    for (AsNumber p : pred[x])
      if (reaches.insert(p).second) queue.push_back(p);
  }
  for (AsNumber n : nodes) {
    if (!reaches.count(n))
      throw IntegrityError("node AS " + std::to_string(n) +
                           " cannot reach destination AS " + std::to_string(g.dst));
  }
}

}  // namespace detail

// Bundle file: JSON-lines. First record is the header
// `{"generated_at": "<RFC3339>", "prefix_table_version": "<string>"}`,
// then one record per destination graph:
// `{"dst": <asn>, "edges": [{"from": <asn>, "to": <asn>, "src": "<provenance>",
//   "mid": "<id>"}]}`.
inline GraphUpdateBundle load_update(std::istream& in) {
  GraphUpdateBundle bundle;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
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
      if (!rec.contains("generated_at") || !rec.contains("prefix_table_version"))
        throw ParseError("first record must be the bundle header", lineno);
      auto ts = parse_rfc3339_utc(rec["generated_at"].get<std::string>());
      if (!ts) throw ParseError("bad generated_at timestamp", lineno);
      bundle.generated_at = *ts;
      bundle.prefix_table_version = rec["prefix_table_version"].get<std::string>();
      header_seen = true;
      continue;
    }
    if (!rec.contains("dst") || !rec.contains("edges"))
      throw ParseError("graph record needs dst and edges", lineno);
    DestinationGraph g;
    if (!rec["dst"].is_number_unsigned() || rec["dst"].get<std::uint64_t>() == 0)
      throw ParseError("bad dst ASN", lineno);
    g.dst = rec["dst"].get<AsNumber>();
    for (const auto& je : rec["edges"]) {
      GraphEdge e;
      if (!je.contains("from") || !je.contains("to") || !je.contains("src"))
        throw ParseError("edge needs from, to, src", lineno);
      e.from = je["from"].get<AsNumber>();
      e.to = je["to"].get<AsNumber>();
      auto src = parse_measurement_source(je["src"].get<std::string>());
      if (!src) throw ParseError("unknown provenance '" + je["src"].get<std::string>() + "'", lineno);
      e.provenance.source = *src;
      e.provenance.measurement_id = je.value("mid", std::string{});
      bool simulated = e.provenance.source == MeasurementSource::Simulated;
      if (simulated != e.provenance.measurement_id.empty())
        throw ParseError("measurement_id must be empty iff provenance is simulated",
                         lineno);
      g.edges.push_back(std::move(e));
    }
    detail::verify_destination_graph(g);
    auto [it, inserted] = bundle.graphs.emplace(g.dst, std::move(g));
    if (!inserted)
      throw IntegrityError("duplicate destination graph for AS " +
                           std::to_string(it->first));
  }
  if (!header_seen) throw ParseError("bundle is empty, header record required", 1);
  return bundle;
}

// Pluggable transport for bundle updates; the default reads local files.
// Tests and offline runs never need anything else.
using FetchHook = std::function<std::string(const std::string& uri)>;

inline GraphUpdateBundle load_update_from(const std::string& uri,
                                          const FetchHook& fetch) {
  std::istringstream in(fetch(uri));
  return load_update(in);
}

// All simple paths from src to dst inside the destination DAG; nullopt when
// no graph exists for dst or src is not a node of it. src == dst yields the
// trivial single-hop path.
inline std::optional<PathSet> stitch(const GraphUpdateBundle& bundle, AsNumber src,
                                     AsNumber dst) {
  const DestinationGraph* g = bundle.graph_for(dst);
  if (!g) return std::nullopt;
  if (src == dst) return PathSet{AsPath{dst}};
  if (!g->has_node(src)) return std::nullopt;
  auto succ = g->successors();
  PathSet out;
  AsPath path{src};
  auto dfs = [&](auto&& self, AsNumber x) -> void {
    if (x == dst) {
      out.insert(path);
      return;
    }
    auto it = succ.find(x);
    if (it == succ.end()) return;
    for (AsNumber next : it->second) {
      path.push_back(next);
      self(self, next);
      path.pop_back();
    }
  };
  dfs(dfs, src);
  return out;
}

// Measured data first; algorithmic simulation only as fallback.
inline PathPrediction predict(const GraphUpdateBundle& bundle,
                              const AsTopology& topology, AsNumber src,
                              AsNumber dst) {
  PathPrediction pred;
  if (src == dst) {  // identity paths are trivially exact
    pred.basis = PredictionBasis::Measured;
    pred.ases.insert(src);
    return pred;
  }
  auto stitched = stitch(bundle, src, dst);
  if (stitched && !stitched->empty()) {
    pred.basis = PredictionBasis::Measured;
    for (const AsPath& p : *stitched) pred.ases.insert(p.begin(), p.end());
    return pred;
  }
  pred.basis = PredictionBasis::SimulatedFallback;
  if (topology.contains(src) && topology.contains(dst)) {
    RouteTable table = compute_routes(topology, {dst});
    pred.ases = route_as_set(table, src);
  }
  return pred;
}

// Union over forward and reverse predictions, Eq. 1 style.
inline PathPrediction bidirectional_exposure(const GraphUpdateBundle& bundle,
                                             const AsTopology& topology, AsNumber a,
                                             AsNumber b) {
  PathPrediction fwd = predict(bundle, topology, a, b);
  PathPrediction rev = predict(bundle, topology, b, a);
  PathPrediction out;
  out.ases = fwd.ases;
  out.ases.insert(rev.ases.begin(), rev.ases.end());
  if (fwd.basis == rev.basis)
    out.basis = fwd.basis;
  else
    out.basis = PredictionBasis::MixedAugmented;
  return out;
}

struct CoverageBucket {
  std::string bucket;
  std::size_t queries = 0;
  std::size_t measured = 0;
  double fraction() const {
    return queries == 0 ? 0.0 : static_cast<double>(measured) / static_cast<double>(queries);
  }
};

struct CoverageReport {
  std::vector<CoverageBucket> buckets;
};

// Fraction of pairs answerable from measured data (stitch succeeds). The
// optional bucketer groups pairs, e.g. by relay bandwidth percentile.
inline CoverageReport coverage_stats(
    const GraphUpdateBundle& bundle,
    const std::vector<std::pair<AsNumber, AsNumber>>& query_pairs,
    const std::function<std::string(const std::pair<AsNumber, AsNumber>&)>& bucket_of =
        nullptr) {
  if (query_pairs.empty())
    throw ArgumentError("coverage_stats: empty query list");
  std::map<std::string, CoverageBucket> acc;
  for (const auto& pair : query_pairs) {
    std::string name = bucket_of ? bucket_of(pair) : std::string("all");
    CoverageBucket& b = acc[name];
    b.bucket = name;
    ++b.queries;
    auto paths = stitch(bundle, pair.first, pair.second);
    if (paths && !paths->empty()) ++b.measured;
  }
  CoverageReport report;
  for (auto& [_, b] : acc) report.buckets.push_back(std::move(b));
  return report;
}

inline void write_coverage_csv(const CoverageReport& report, std::ostream& out) {
  out << "bucket,queries,measured,fraction\n";
  for (const auto& b : report.buckets) {
    char frac[32];
    std::snprintf(frac, sizeof(frac), "%.6f", b.fraction());
    out << b.bucket << "," << b.queries << "," << b.measured << "," << frac << "\n";
  }
}

}  // namespace cipollino
