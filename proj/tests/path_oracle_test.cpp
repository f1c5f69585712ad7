#include "cipollino/path_oracle.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "cipollino/as_topology.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace cipollino;

namespace {

GraphUpdateBundle load_text(const std::string& text) {
  std::istringstream in(text);
  return load_update(in);
}

const char* kHeader =
    "{\"generated_at\": \"2016-03-01T00:00:00Z\", \"prefix_table_version\": \"v1\"}\n";

TEST(LoadUpdate, ChainGraphLoadsAndStitches) {
  GraphUpdateBundle bundle = load_text(
      std::string(kHeader) +
      "{\"dst\": 5, \"edges\": [{\"from\": 3, \"to\": 5, \"src\": \"atlas\", "
      "\"mid\": \"a1\"}, {\"from\": 2, \"to\": 3, \"src\": \"bgp\", \"mid\": "
      "\"b1\"}]}\n");
  EXPECT_EQ(bundle.generated_at, *parse_rfc3339_utc("2016-03-01T00:00:00Z"));
  EXPECT_EQ(bundle.prefix_table_version, "v1");
  ASSERT_NE(bundle.graph_for(5), nullptr);
  auto paths = stitch(bundle, 2, 5);
  ASSERT_TRUE(paths.has_value());
  EXPECT_EQ(*paths, (PathSet{AsPath{2, 3, 5}}));
}

TEST(LoadUpdate, DestinationOutEdgeIsIntegrityError) {
  try {
    load_text(std::string(kHeader) +
              "{\"dst\": 5, \"edges\": [{\"from\": 5, \"to\": 6, \"src\": "
              "\"atlas\", \"mid\": \"a1\"}]}\n");
    FAIL() << "expected IntegrityError";
  } catch (const IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find("5"), std::string::npos);
  }
}

TEST(LoadUpdate, CycleIsIntegrityErrorNamingDst) {
  try {
    load_text(std::string(kHeader) +
              "{\"dst\": 9, \"edges\": ["
              "{\"from\": 1, \"to\": 2, \"src\": \"atlas\", \"mid\": \"a\"},"
              "{\"from\": 2, \"to\": 1, \"src\": \"atlas\", \"mid\": \"b\"},"
              "{\"from\": 2, \"to\": 9, \"src\": \"atlas\", \"mid\": \"c\"}]}\n");
    FAIL() << "expected IntegrityError";
  } catch (const IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find("9"), std::string::npos);
  }
}

TEST(LoadUpdate, NodeNotReachingDstIsIntegrityError) {
  EXPECT_THROW(load_text(std::string(kHeader) +
                         "{\"dst\": 5, \"edges\": ["
                         "{\"from\": 2, \"to\": 5, \"src\": \"atlas\", \"mid\": \"a\"},"
                         "{\"from\": 2, \"to\": 7, \"src\": \"atlas\", \"mid\": \"b\"}]}\n"),
               IntegrityError);
}

TEST(LoadUpdate, MalformedRecordCarriesLineNumber) {
  try {
    load_text(std::string(kHeader) + "{\"dst\": 5}\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadUpdate, SimulatedProvenanceMustNotCarryMeasurementId) {
  EXPECT_THROW(
      load_text(std::string(kHeader) +
                "{\"dst\": 5, \"edges\": [{\"from\": 2, \"to\": 5, \"src\": "
                "\"simulated\", \"mid\": \"x\"}]}\n"),
      ParseError);
  EXPECT_THROW(
      load_text(std::string(kHeader) +
                "{\"dst\": 5, \"edges\": [{\"from\": 2, \"to\": 5, \"src\": "
                "\"atlas\", \"mid\": \"\"}]}\n"),
      ParseError);
}

TEST(LoadUpdate, DuplicateDestinationIsIntegrityError) {
  EXPECT_THROW(
      load_text(std::string(kHeader) +
                "{\"dst\": 5, \"edges\": [{\"from\": 2, \"to\": 5, \"src\": "
                "\"atlas\", \"mid\": \"a\"}]}\n"
                "{\"dst\": 5, \"edges\": [{\"from\": 3, \"to\": 5, \"src\": "
                "\"atlas\", \"mid\": \"b\"}]}\n"),
      IntegrityError);
}

TEST(LoadUpdate, FiftyGraphFixtureMatchesManifest) {
  // Manifest: dst 100+i carries i+1 chain edges.
  fixtures::BundleBuilder builder;
  std::map<AsNumber, std::size_t> manifest;
  for (int i = 0; i < 50; ++i) {
    AsNumber dst = 100 + i;
    std::vector<AsNumber> hops;
    for (int h = i + 1; h >= 1; --h) hops.push_back(dst + 1000 * h);
    hops.push_back(dst);
    builder.chain(dst, hops);
    manifest[dst] = static_cast<std::size_t>(i) + 1;
  }
  GraphUpdateBundle bundle = builder.load();
  EXPECT_EQ(bundle.graphs.size(), 50u);
  for (const auto& [dst, expected_edges] : manifest) {
    ASSERT_NE(bundle.graph_for(dst), nullptr);
    EXPECT_EQ(bundle.graph_for(dst)->edges.size(), expected_edges);
  }
}

TEST(LoadUpdateFrom, FetchHookSuppliesBytes) {
  std::string text = std::string(kHeader);
  auto hook = [&](const std::string& uri) {
    EXPECT_EQ(uri, "bundle://today");
    return text;
  };
  GraphUpdateBundle bundle = load_update_from("bundle://today", hook);
  EXPECT_EQ(bundle.prefix_table_version, "v1");
}

TEST(Stitch, MissingSourceIsNone) {
  GraphUpdateBundle bundle =
      fixtures::BundleBuilder().chain(5, {2, 3, 5}).load();
  EXPECT_FALSE(stitch(bundle, 9, 5).has_value());
  EXPECT_FALSE(stitch(bundle, 2, 6).has_value());
}

TEST(Stitch, DiamondMatchesSimplePathOracle) {
  GraphUpdateBundle bundle = fixtures::BundleBuilder()
                                 .edge(5, 1, 2)
                                 .edge(5, 1, 3)
                                 .edge(5, 2, 5)
                                 .edge(5, 3, 5)
                                 .load();
  auto got = stitch(bundle, 1, 5);
  ASSERT_TRUE(got.has_value());
  EXPECT_EQ(*got, (PathSet{AsPath{1, 2, 5}, AsPath{1, 3, 5}}));
  std::vector<std::pair<AsNumber, AsNumber>> edges{{1, 2}, {1, 3}, {2, 5}, {3, 5}};
  EXPECT_EQ(*got, oracle::all_simple_paths(edges, 1, 5));
}

TEST(Stitch, MatchesSimplePathOracleOnRandomDags) {
  SeededRng rng(17);
  for (int trial = 0; trial < 15; ++trial) {
    // Random layered DAG toward dst 50.
    fixtures::BundleBuilder builder;
    std::vector<std::pair<AsNumber, AsNumber>> edges;
    int layers = 3 + static_cast<int>(rng.below(3));
    std::vector<std::vector<AsNumber>> nodes(layers);
    AsNumber next_id = 1;
    for (int l = 0; l < layers; ++l)
      for (int k = 0; k < 1 + static_cast<int>(rng.below(3)); ++k)
        nodes[l].push_back(next_id++);
    AsNumber dst = 50;
    for (int l = 0; l < layers; ++l) {
      for (AsNumber from : nodes[l]) {
        bool connected = false;
        std::vector<AsNumber> targets =
            l + 1 < layers ? nodes[l + 1] : std::vector<AsNumber>{dst};
        for (AsNumber to : targets) {
          if (rng.below(100) < 70 || !connected) {
            builder.edge(dst, from, to);
            edges.push_back({from, to});
            connected = true;
          }
        }
      }
    }
    GraphUpdateBundle bundle = builder.load();
    for (AsNumber src : nodes[0]) {
      auto got = stitch(bundle, src, dst);
      ASSERT_TRUE(got.has_value());
      EXPECT_EQ(*got, oracle::all_simple_paths(edges, src, dst));
    }
  }
}

AsTopology tiny_topology() {
  // 8 and 9 form a component unreachable from the rest.
  std::istringstream rel("1|4|-1\n4|7|-1\n1|2|-1\n2|5|-1\n8|9|0\n");
  std::istringstream pfx("");
  return load_topology(rel, pfx);
}

TEST(Predict, MeasuredWhenStitchable) {
  GraphUpdateBundle bundle = fixtures::BundleBuilder().chain(5, {2, 3, 5}).load();
  AsTopology topo = tiny_topology();
  PathPrediction p = predict(bundle, topo, 2, 5);
  EXPECT_EQ(p.basis, PredictionBasis::Measured);
  EXPECT_EQ(p.ases, (AsSet{2, 3, 5}));
}

TEST(Predict, SimulatedFallbackWhenUnstitchable) {
  GraphUpdateBundle bundle = fixtures::BundleBuilder().chain(9, {8, 9}).load();
  AsTopology topo = tiny_topology();
  PathPrediction p = predict(bundle, topo, 1, 7);
  EXPECT_EQ(p.basis, PredictionBasis::SimulatedFallback);
  EXPECT_EQ(p.ases, (AsSet{1, 4, 7}));
}

TEST(Predict, MeasuredTakesPrecedenceOverDisagreeingSimulation) {
  // Simulation would say 1->4->7; the measured graph says 1->9->7.
  GraphUpdateBundle bundle = fixtures::BundleBuilder().chain(7, {1, 9, 7}).load();
  AsTopology topo = tiny_topology();
  PathPrediction p = predict(bundle, topo, 1, 7);
  EXPECT_EQ(p.basis, PredictionBasis::Measured);
  EXPECT_EQ(p.ases, (AsSet{1, 9, 7}));
}

TEST(Predict, NeverMeasuredWhenStitchReturnsNone) {
  GraphUpdateBundle bundle = fixtures::BundleBuilder().chain(7, {4, 7}).load();
  AsTopology topo = tiny_topology();
  for (AsNumber src : {1u, 2u, 5u}) {
    auto stitched = stitch(bundle, src, 7);
    PathPrediction p = predict(bundle, topo, src, 7);
    if (!stitched.has_value())
      EXPECT_NE(p.basis, PredictionBasis::Measured) << "src " << src;
  }
}

TEST(Predict, EmptyOnlyWhenBothSourcesFail) {
  GraphUpdateBundle bundle = fixtures::BundleBuilder().chain(6, {3, 6}).load();
  AsTopology topo = tiny_topology();
  PathPrediction p = predict(bundle, topo, 5, 9);  // unreachable in simulation
  EXPECT_EQ(p.basis, PredictionBasis::SimulatedFallback);
  EXPECT_TRUE(p.ases.empty());
}

TEST(BidirectionalExposure, UnionOfDirections) {
  GraphUpdateBundle bundle = fixtures::BundleBuilder()
                                 .chain(5, {1, 2, 5})
                                 .chain(1, {5, 9, 1})
                                 .load();
  AsTopology topo = tiny_topology();
  PathPrediction p = bidirectional_exposure(bundle, topo, 1, 5);
  EXPECT_EQ(p.ases, (AsSet{1, 2, 5, 9}));
  EXPECT_EQ(p.basis, PredictionBasis::Measured);
}

TEST(BidirectionalExposure, IdentityPair) {
  GraphUpdateBundle bundle = fixtures::BundleBuilder().chain(5, {2, 5}).load();
  AsTopology topo = tiny_topology();
  PathPrediction p = bidirectional_exposure(bundle, topo, 3, 3);
  EXPECT_EQ(p.ases, AsSet{3});
}

TEST(BidirectionalExposure, SymmetricInArguments) {
  GraphUpdateBundle bundle = fixtures::BundleBuilder()
                                 .chain(5, {1, 2, 5})
                                 .chain(1, {5, 9, 1})
                                 .load();
  AsTopology topo = tiny_topology();
  std::vector<std::pair<AsNumber, AsNumber>> pairs{{1, 5}, {2, 5}, {1, 7}, {4, 4}};
  for (auto [a, b] : pairs) {
    PathPrediction ab = bidirectional_exposure(bundle, topo, a, b);
    PathPrediction ba = bidirectional_exposure(bundle, topo, b, a);
    EXPECT_EQ(ab.ases, ba.ases);
  }
}

TEST(BidirectionalExposure, AsymmetricPairIsStrictSupersetOfForward) {
  GraphUpdateBundle bundle = fixtures::BundleBuilder()
                                 .chain(5, {1, 2, 5})  // forward avoids 9
                                 .chain(1, {5, 9, 1})  // reverse crosses 9
                                 .load();
  AsTopology topo = tiny_topology();
  PathPrediction fwd = predict(bundle, topo, 1, 5);
  PathPrediction both = bidirectional_exposure(bundle, topo, 1, 5);
  for (AsNumber as : fwd.ases) EXPECT_TRUE(both.ases.count(as));
  EXPECT_GT(both.ases.size(), fwd.ases.size());
}

TEST(UnderEstimationSafety, MeasuredPredictionsMissNothingOnFixture) {
  // The bundle encodes exactly the true paths, so Measured answers must not
  // miss any AS on them.
  std::map<std::pair<AsNumber, AsNumber>, AsSet> truth;
  fixtures::BundleBuilder builder;
  for (AsNumber dst = 60; dst < 70; ++dst) {
    for (AsNumber src = 1; src <= 3; ++src) {
      AsNumber mid = 10 * dst + src;
      builder.chain(dst, {src, mid, dst});
      truth[{src, dst}] = AsSet{src, mid, dst};
    }
  }
  GraphUpdateBundle bundle = builder.load();
  AsTopology topo = tiny_topology();
  for (const auto& [pair, expect] : truth) {
    PathPrediction p = predict(bundle, topo, pair.first, pair.second);
    ASSERT_EQ(p.basis, PredictionBasis::Measured);
    for (AsNumber as : expect)
      EXPECT_TRUE(p.ases.count(as)) << "missing AS " << as;
  }
}

TEST(CoverageStats, AllNoneAndPartial) {
  fixtures::BundleBuilder builder;
  builder.chain(5, {2, 3, 5}).chain(6, {2, 6});
  GraphUpdateBundle bundle = builder.load();

  std::vector<std::pair<AsNumber, AsNumber>> all{{2, 5}, {3, 5}, {2, 6}};
  CoverageReport r = coverage_stats(bundle, all);
  ASSERT_EQ(r.buckets.size(), 1u);
  EXPECT_DOUBLE_EQ(r.buckets[0].fraction(), 1.0);

  std::vector<std::pair<AsNumber, AsNumber>> none{{9, 5}, {2, 77}};
  r = coverage_stats(bundle, none);
  EXPECT_DOUBLE_EQ(r.buckets[0].fraction(), 0.0);

  // Exactly 30 of 100 pairs answerable.
  std::vector<std::pair<AsNumber, AsNumber>> mixed;
  for (int i = 0; i < 30; ++i) mixed.push_back({2, 5});
  for (int i = 0; i < 70; ++i) mixed.push_back({9, 5});
  r = coverage_stats(bundle, mixed);
  EXPECT_DOUBLE_EQ(r.buckets[0].fraction(), 0.30);

  EXPECT_THROW(coverage_stats(bundle, {}), ArgumentError);
}

TEST(CoverageStats, BucketedReportAndCsv) {
  GraphUpdateBundle bundle = fixtures::BundleBuilder().chain(5, {2, 3, 5}).load();
  std::vector<std::pair<AsNumber, AsNumber>> pairs{{2, 5}, {9, 5}, {3, 5}, {8, 5}};
  auto bucket = [](const std::pair<AsNumber, AsNumber>& p) {
    return p.first < 5 ? std::string("top10") : std::string("rest");
  };
  CoverageReport r = coverage_stats(bundle, pairs, bucket);
  ASSERT_EQ(r.buckets.size(), 2u);
  std::ostringstream csv;
  write_coverage_csv(r, csv);
  EXPECT_EQ(csv.str(),
            "bucket,queries,measured,fraction\n"
            "rest,2,0,0.000000\n"
            "top10,2,2,1.000000\n");
}

}  // namespace
