#pragma once

// Shared fixture builders: random topologies for oracle cross-checks and the
// constructed scenarios used by the integration and acceptance suites.

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cipollino/as_topology.hpp"
#include "cipollino/net_types.hpp"
#include "cipollino/path_oracle.hpp"
#include "cipollino/rng.hpp"
#include "cipollino/sim_harness.hpp"
#include "cipollino/tor_net.hpp"

namespace fixtures {

using cipollino::AsNumber;
using cipollino::AsTopology;
using cipollino::Prefix;
using cipollino::RelationshipKind;
using cipollino::SeededRng;

// Random AS graph over ASNs 1..n. Provider edges are mostly oriented by
// index (larger = closer to the core), with a small fraction flipped to
// exercise provider cycles; some pairs peer, the rest stay unconnected.
inline AsTopology random_topology(int n, SeededRng& rng) {
  AsTopology topo;
  for (AsNumber a = 1; a <= static_cast<AsNumber>(n); ++a) {
    for (AsNumber b = a + 1; b <= static_cast<AsNumber>(n); ++b) {
      std::uint64_t roll = rng.below(100);
      if (roll < 55) continue;  // no edge
      if (roll < 70) {
        topo.add_relationship(a, b, RelationshipKind::PeerToPeer);
      } else if (roll < 95) {
        topo.add_relationship(b, a, RelationshipKind::ProviderToCustomer);
      } else {
        topo.add_relationship(a, b, RelationshipKind::ProviderToCustomer);
      }
    }
  }
  // Keep the node set complete even when a node drew no edges.
  for (AsNumber a = 1; a <= static_cast<AsNumber>(n); ++a) {
    if (!topo.contains(a)) {
      AsNumber other = a == 1 ? 2 : 1;
      topo.add_relationship(a, other, RelationshipKind::PeerToPeer);
    }
  }
  return topo;
}

// One /24 per AS, arranged so distinct ASes always land in distinct /16s
// (the relay constraints care about that): AS n owns
// (1 + n%200).(n/200).(0).0/24 and hosts live at .h.
inline Prefix prefix_for_as(AsNumber asn) {
  return Prefix{((1 + asn % 200) << 24) | (((asn / 200) % 256) << 16), 24};
}

inline std::uint32_t host_in_as(AsNumber asn, int host) {
  return prefix_for_as(asn).network | static_cast<std::uint32_t>(host);
}

inline void register_prefixes(AsTopology& topo, const std::vector<AsNumber>& ases) {
  for (AsNumber a : ases) topo.add_prefix(prefix_for_as(a), a);
}

// JSON-lines bundle assembly.
class BundleBuilder {
 public:
  explicit BundleBuilder(const std::string& generated_at = "2016-03-01T00:00:00Z")
      : header_("{\"generated_at\": \"" + generated_at +
                "\", \"prefix_table_version\": \"test\"}") {}

  // Adds edge from->to on the destination graph for dst.
  BundleBuilder& edge(AsNumber dst, AsNumber from, AsNumber to,
                      const std::string& src = "atlas",
                      const std::string& mid = "") {
    std::string id = mid;
    if (src != "simulated" && id.empty())
      id = "m" + std::to_string(dst) + "-" + std::to_string(from) + "-" +
           std::to_string(to);
    edges_[dst].push_back("{\"from\": " + std::to_string(from) +
                          ", \"to\": " + std::to_string(to) + ", \"src\": \"" + src +
                          "\", \"mid\": \"" + id + "\"}");
    return *this;
  }

  // Adds a measured chain a -> b -> ... -> dst on dst's graph.
  BundleBuilder& chain(AsNumber dst, const std::vector<AsNumber>& hops) {
    for (std::size_t i = 0; i + 1 < hops.size(); ++i) edge(dst, hops[i], hops[i + 1]);
    return *this;
  }

  std::string text() const {
    std::string out = header_ + "\n";
    for (const auto& [dst, edges] : edges_) {
      out += "{\"dst\": " + std::to_string(dst) + ", \"edges\": [";
      for (std::size_t i = 0; i < edges.size(); ++i) {
        if (i) out += ", ";
        out += edges[i];
      }
      out += "]}\n";
    }
    return out;
  }

  cipollino::GraphUpdateBundle load() const {
    std::istringstream in(text());
    return cipollino::load_update(in);
  }

 private:
  std::string header_;
  std::map<AsNumber, std::vector<std::string>> edges_;
};

// JSON-lines consensus assembly.
class ConsensusBuilder {
 public:
  explicit ConsensusBuilder(const std::string& valid_at = "2016-03-01T00:00:00Z")
      : header_("{\"valid_at\": \"" + valid_at + "\"}") {}

  ConsensusBuilder& relay(const std::string& fp, const std::string& ip,
                          std::uint64_t bw, const std::vector<std::string>& flags,
                          const std::string& family = "",
                          const std::string& policy =
                              "[[\"accept\",\"*\",1,65535]]") {
    std::string flag_json;
    for (std::size_t i = 0; i < flags.size(); ++i) {
      if (i) flag_json += ",";
      flag_json += "\"" + flags[i] + "\"";
    }
    std::string family_json = family.empty() ? "null" : "\"" + family + "\"";
    lines_.push_back("{\"fp\": \"" + fp + "\", \"ip\": \"" + ip +
                     "\", \"bw\": " + std::to_string(bw) + ", \"flags\": [" +
                     flag_json + "], \"family\": " + family_json +
                     ", \"policy\": " + policy + "}");
    return *this;
  }

  // Relay placed inside an AS from the 10.x.y.0/24 scheme.
  ConsensusBuilder& relay_in_as(const std::string& fp, AsNumber asn, int host,
                                std::uint64_t bw, const std::vector<std::string>& flags,
                                const std::string& family = "",
                                const std::string& policy =
                                    "[[\"accept\",\"*\",1,65535]]") {
    return relay(fp, cipollino::format_ipv4(host_in_as(asn, host)), bw, flags, family,
                 policy);
  }

  std::string text() const {
    std::string out = header_ + "\n";
    for (const auto& l : lines_) out += l + "\n";
    return out;
  }

  cipollino::ConsensusSnapshot load(const AsTopology& topo) const {
    std::istringstream in(text());
    return cipollino::load_consensus(in, topo);
  }

 private:
  std::string header_;
  std::vector<std::string> lines_;
};

// A replayable world with a single traffic-correlation adversary (AS 666).
// Every client<->guard path crosses 666; exit<->destination paths cross it
// for the vulnerable exits and a clean transit AS (8) for the others. Safe
// combinations therefore exist for every destination through clean exits.
struct AdversaryWorld {
  static constexpr AsNumber kClient = 1;
  static constexpr AsNumber kAdversary = 666;
  static constexpr AsNumber kCleanTransit = 8;
  static constexpr AsNumber kEntryTransit = 7;

  cipollino::AsTopology topo;
  cipollino::GraphUpdateBundle bundle;
  cipollino::ConsensusSnapshot snapshot;
  std::vector<AsNumber> guard_ases, exit_ases, middle_ases, dest_ases;
  std::size_t clean_exits = 0;

  struct Options {
    int guards = 4;
    int exits = 6;
    int clean_exits = 3;
    int middles = 4;
    int dests = 5;
    bool entry_through_adversary = true;  // false: clean world end to end
    bool vulnerable_exits_exist = true;
    std::uint64_t guard_bw = 200;
    std::uint64_t exit_bw = 200;
    std::uint64_t middle_bw = 100;
  };

  explicit AdversaryWorld(const Options& opt) {
    clean_exits = static_cast<std::size_t>(opt.clean_exits);
    for (int i = 0; i < opt.guards; ++i) guard_ases.push_back(201 + i);
    for (int i = 0; i < opt.exits; ++i) exit_ases.push_back(301 + i);
    for (int i = 0; i < opt.middles; ++i) middle_ases.push_back(101 + i);
    for (int i = 0; i < opt.dests; ++i) dest_ases.push_back(401 + i);

    std::vector<AsNumber> all{kClient, kAdversary, kCleanTransit, kEntryTransit};
    for (auto v : {&guard_ases, &exit_ases, &middle_ases, &dest_ases})
      all.insert(all.end(), v->begin(), v->end());
    for (std::size_t i = 0; i + 1 < all.size(); ++i)
      topo.add_relationship(all[i], all[i + 1],
                            cipollino::RelationshipKind::PeerToPeer);
    register_prefixes(topo, all);

    BundleBuilder b;
    AsNumber entry_mid = opt.entry_through_adversary ? kAdversary : kEntryTransit;
    for (AsNumber g : guard_ases) {
      b.chain(g, {kClient, entry_mid, g});
      b.edge(kClient, g, entry_mid);
    }
    b.edge(kClient, entry_mid, kClient);
    for (AsNumber d : dest_ases) {
      for (std::size_t i = 0; i < exit_ases.size(); ++i) {
        AsNumber x = exit_ases[i];
        AsNumber mid = exit_is_clean(i) ? kCleanTransit : kAdversary;
        b.edge(d, x, mid);
        b.edge(d, mid, d);
        b.edge(x, d, mid == kAdversary ? kAdversary : kCleanTransit);
        b.edge(x, mid == kAdversary ? kAdversary : kCleanTransit, x);
      }
    }
    bundle = b.load();

    ConsensusBuilder cb;
    for (std::size_t i = 0; i < guard_ases.size(); ++i)
      cb.relay_in_as("g" + std::to_string(i), guard_ases[i], 1,
                     opt.guard_bw + 10 * i, {"Guard", "Fast"});
    for (std::size_t i = 0; i < exit_ases.size(); ++i)
      cb.relay_in_as("x" + std::to_string(i), exit_ases[i], 1, opt.exit_bw + 5 * i,
                     {"Exit", "Fast"});
    for (std::size_t i = 0; i < middle_ases.size(); ++i)
      cb.relay_in_as("m" + std::to_string(i), middle_ases[i], 1,
                     opt.middle_bw + 3 * i, {"Fast"});
    snapshot = cb.load(topo);
  }

  bool exit_is_clean(std::size_t index) const { return index < clean_exits; }

  std::uint32_t dest_ip(std::size_t i, int host = 50) const {
    return host_in_as(dest_ases[i % dest_ases.size()], host);
  }

  // Web workload over the destinations, one endpoint per site.
  cipollino::WorkloadStream web_workload(int sites, cipollino::SeededRng& rng,
                                         int port = 443) const {
    std::string site_csv, dns_csv;
    for (int s = 0; s < sites; ++s) {
      std::string name = "site" + std::to_string(s);
      site_csv += name + "," + std::to_string(s + 1) + "\n";
      dns_csv += name + "," + cipollino::format_ipv4(dest_ip(s)) + "," +
                 std::to_string(port) + "\n";
    }
    std::istringstream site_in(site_csv), dns_in(dns_csv);
    cipollino::WebWorkloadOptions opt;
    opt.start = 1000000;
    opt.gap_mean_seconds = 5;
    opt.client_asn = kClient;
    return cipollino::generate_web_workload(site_in, dns_in, opt, rng);
  }
};

}  // namespace fixtures
