/*
 * Copyright 2026 The cowbif Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "cowbif/error.hpp"
#include "cowbif/graph.hpp"
#include "cowbif/phantom.hpp"
#include "cowbif/skeleton.hpp"
#include "shapes.hpp"

using namespace cowbif;
using namespace cowbif::skel;
using namespace cowbif::testing;

namespace {

Skeleton from_voxels(Dims3 dims, std::vector<Index3> voxels) {
  const MaskVolume probe(dims, {1, 1, 1}, 0);
  std::sort(voxels.begin(), voxels.end(),
            [&](const Index3& a, const Index3& b) { return probe.index(a) < probe.index(b); });
  voxels.erase(std::unique(voxels.begin(), voxels.end()), voxels.end());
  return Skeleton{dims, {1, 1, 1}, std::move(voxels)};
}

int endpoint_voxels(const MaskVolume& m) {
  int n = 0;
  for (int z = 0; z < m.dims().nz; ++z)
    for (int y = 0; y < m.dims().ny; ++y)
      for (int x = 0; x < m.dims().nx; ++x)
        if (m(x, y, z) && neighbor_count(m, {x, y, z}) == 1) ++n;
  return n;
}

// Unordered 26-adjacent voxel pairs.
int adjacency_pairs(const Skeleton& s) {
  const MaskVolume m = s.to_mask();
  int pairs = 0;
  for (const Index3& p : s.voxels) pairs += neighbor_count(m, p);
  return pairs / 2;
}

void expect_covers(const Skeleton& s, const VesselGraph& g) {
  std::map<Index3, int> claims;
  for (const auto& n : g.nodes)
    for (const auto& v : n.voxels) ++claims[v];
  for (const auto& e : g.edges)
    for (const auto& v : e.polyline) ++claims[v];
  EXPECT_EQ(claims.size(), s.voxels.size());
  for (const auto& v : s.voxels) {
    auto it = claims.find(v);
    ASSERT_NE(it, claims.end());
    EXPECT_EQ(it->second, 1);
  }
}

void expect_handshake(const VesselGraph& g) {
  int degree_sum = 0;
  for (const auto& n : g.nodes) degree_sum += n.degree;
  EXPECT_EQ(degree_sum, 2 * static_cast<int>(g.edges.size()));
  for (const auto& n : g.nodes) {
    if (n.kind == NodeKind::kJunction) EXPECT_GE(n.degree, 3);
    if (n.kind == NodeKind::kEndpoint) EXPECT_LE(n.degree, 1);
  }
}

}  // namespace

TEST(SimplePoint, IsolatedAndInteriorAreNotSimple) {
  Neighborhood n{};
  n[13] = true;
  EXPECT_FALSE(is_simple_point(n));  // removing it deletes a component
  n.fill(true);
  EXPECT_FALSE(is_simple_point(n));  // removing it opens a cavity
  Neighborhood tip{};
  tip[13] = tip[12] = true;
  EXPECT_TRUE(is_simple_point(tip));
  Neighborhood bridge{};
  bridge[13] = bridge[12] = bridge[14] = true;
  EXPECT_FALSE(is_simple_point(bridge));
}

TEST(Skeletonize, StraightTube) {
  MaskVolume m = empty_mask(56);
  paint_capsule(m, {28, 28, 8}, {28, 28, 48}, 3.0);
  const Skeleton s = skeletonize(m);
  const MaskVolume sm = s.to_mask();
  EXPECT_EQ(count_components(sm, Connectivity::k26), 1);
  EXPECT_EQ(endpoint_voxels(sm), 2);
  for (const auto& v : s.voxels) EXPECT_LE(neighbor_count(sm, v), 2);
}

TEST(Skeletonize, TorusIsOneCycle) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const MaskVolume m = random_torus(rng);
    const Skeleton s = skeletonize(m);
    const MaskVolume sm = s.to_mask();
    EXPECT_EQ(endpoint_voxels(sm), 0);
    EXPECT_EQ(count_components(sm, Connectivity::k26), 1);
    EXPECT_EQ(static_cast<int>(s.voxels.size()), adjacency_pairs(s));
  }
}

TEST(Skeletonize, SingleVoxelUnchanged) {
  MaskVolume m = empty_mask(8);
  m(4, 4, 4) = 1;
  const Skeleton s = skeletonize(m);
  ASSERT_EQ(s.voxels.size(), 1u);
  EXPECT_EQ(s.voxels[0], (Index3{4, 4, 4}));
}

TEST(Skeletonize, RejectsNonBinary) {
  MaskVolume m = empty_mask(8);
  m(1, 1, 1) = 2;
  EXPECT_THROW(skeletonize(m), InvalidArgument);
}

TEST(Skeletonize, EmptyMaskGivesEmptySkeleton) {
  EXPECT_TRUE(skeletonize(empty_mask(8)).voxels.empty());
}

TEST(Skeletonize, TopologySubsetAndFixpoint) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 8; ++trial) {
    MaskVolume m = trial % 3 == 0 ? random_tube(rng) : trial % 3 == 1 ? random_y(rng) : random_torus(rng);
    const Skeleton s = skeletonize(m);
    const MaskVolume sm = s.to_mask();
    EXPECT_EQ(count_components(sm, Connectivity::k26), count_components(m, Connectivity::k26));
    for (const auto& v : s.voxels) EXPECT_EQ(m(v), 1);
    EXPECT_EQ(skeletonize(sm).voxels, s.voxels);
  }
}

TEST(Skeletonize, SeparateObjectsKeepTheirCount) {
  MaskVolume m = empty_mask(48);
  paint_capsule(m, {10, 10, 6}, {10, 10, 40}, 2.5);
  paint_capsule(m, {34, 34, 6}, {34, 30, 40}, 2.0);
  paint_capsule(m, {24, 8, 24}, {24, 12, 24}, 1.5);
  EXPECT_EQ(count_components(skeletonize(m).to_mask(), Connectivity::k26), 3);
}

TEST(BuildGraph, StraightPath) {
  std::vector<Index3> v;
  for (int z = 2; z < 30; ++z) v.push_back({5, 5, z});
  const Skeleton s = from_voxels({10, 10, 32}, v);
  const VesselGraph g = build_graph(s);
  EXPECT_EQ(g.count(NodeKind::kEndpoint), 2);
  EXPECT_EQ(g.count(NodeKind::kJunction), 0);
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0].length_voxels, 27);
  EXPECT_DOUBLE_EQ(g.edges[0].length_mm, 27.0);
  expect_covers(s, g);
  EXPECT_TRUE(candidate_centers(prune_spurs(g)).empty());
}

TEST(BuildGraph, EmptySkeleton) {
  const VesselGraph g = build_graph(Skeleton{{4, 4, 4}, {1, 1, 1}, {}});
  EXPECT_TRUE(g.nodes.empty());
  EXPECT_TRUE(g.edges.empty());
}

TEST(BuildGraph, IsolatedVoxelIsEndpointWithoutEdges) {
  const VesselGraph g = build_graph(from_voxels({6, 6, 6}, {{3, 3, 3}}));
  ASSERT_EQ(g.nodes.size(), 1u);
  EXPECT_EQ(g.nodes[0].degree, 0);
  EXPECT_TRUE(g.edges.empty());
}

TEST(BuildGraph, DiagonalStepsMeasureInMillimetres) {
  std::vector<Index3> v;
  for (int i = 0; i < 10; ++i) v.push_back({i + 1, i + 1, 2});
  Skeleton s = from_voxels({14, 14, 4}, v);
  s.spacing = {0.5, 0.5, 0.5};
  const VesselGraph g = build_graph(s);
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0].length_voxels, 9);
  EXPECT_NEAR(g.edges[0].length_mm, 9 * std::sqrt(2.0) * 0.5, 1e-9);
}

TEST(BuildGraph, YCensus) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 6; ++trial) {
    const MaskVolume m = random_y(rng);
    const Skeleton s = skeletonize(m);
    const VesselGraph g = build_graph(s);
    EXPECT_EQ(g.count(NodeKind::kJunction), 1) << "trial " << trial;
    EXPECT_EQ(g.count(NodeKind::kEndpoint), 3) << "trial " << trial;
    EXPECT_EQ(g.edges.size(), 3u) << "trial " << trial;
    expect_covers(s, g);
    expect_handshake(g);
    const auto centers = candidate_centers(g);
    ASSERT_EQ(centers.size(), 1u);
    for (const auto& n : g.nodes) {
      if (n.kind == NodeKind::kJunction) {
        EXPECT_EQ(n.degree, 3);
        EXPECT_EQ(centers[0], n.coords);
      }
    }
    // All branches are long, so pruning changes nothing.
    const VesselGraph p = prune_spurs(g, 3);
    EXPECT_EQ(p.nodes.size(), g.nodes.size());
    EXPECT_EQ(p.edges.size(), g.edges.size());
  }
}

TEST(BuildGraph, TorusIsOneAnchoredLoop) {
  std::mt19937_64 rng(5);
  const Skeleton s = skeletonize(random_torus(rng));
  const VesselGraph g = build_graph(s);
  ASSERT_EQ(g.nodes.size(), 1u);
  EXPECT_EQ(g.nodes[0].kind, NodeKind::kCycleAnchor);
  EXPECT_EQ(g.nodes[0].degree, 2);
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0].a, g.edges[0].b);
  expect_covers(s, g);
  EXPECT_TRUE(candidate_centers(g).empty());
}

TEST(BuildGraph, LoopWithStub) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 4; ++trial) {
    const Skeleton s = skeletonize(loop_with_stub(rng));
    const VesselGraph g = prune_spurs(build_graph(s), 3);
    EXPECT_EQ(g.count(NodeKind::kJunction), 1) << "trial " << trial;
    EXPECT_EQ(g.count(NodeKind::kEndpoint), 1) << "trial " << trial;
    ASSERT_EQ(g.edges.size(), 2u) << "trial " << trial;
    int loops = 0;
    for (const auto& e : g.edges) loops += e.a == e.b;
    EXPECT_EQ(loops, 1);
    for (const auto& n : g.nodes)
      if (n.kind == NodeKind::kJunction) EXPECT_EQ(n.degree, 3);
    expect_handshake(g);
  }
}

TEST(PruneSpurs, ShortSpurIsRemovedAndJunctionDissolved) {
  std::vector<Index3> v;
  for (int x = 2; x <= 40; ++x) v.push_back({x, 10, 10});
  v.push_back({20, 11, 10});
  v.push_back({20, 12, 10});
  const Skeleton s = from_voxels({44, 20, 20}, v);
  const VesselGraph raw = build_graph(s);
  EXPECT_EQ(raw.count(NodeKind::kJunction), 1);
  expect_covers(s, raw);
  expect_handshake(raw);
  const VesselGraph g = prune_spurs(raw, 3);
  EXPECT_EQ(g.count(NodeKind::kJunction), 0);
  EXPECT_EQ(g.count(NodeKind::kEndpoint), 2);
  ASSERT_EQ(g.edges.size(), 1u);
  expect_handshake(g);
}

TEST(PruneSpurs, ZeroThresholdIsIdentity) {
  std::mt19937_64 rng(21);
  const VesselGraph g = build_graph(skeletonize(random_y(rng)));
  const VesselGraph p = prune_spurs(g, 0);
  EXPECT_EQ(dump_graph(p), dump_graph(g));
}

TEST(GraphExport, DumpNamesKinds) {
  std::mt19937_64 rng(2);
  const std::string json = dump_graph(build_graph(skeletonize(random_y(rng))));
  EXPECT_NE(json.find("junction"), std::string::npos);
  EXPECT_NE(json.find("endpoint"), std::string::npos);
}

TEST(PhantomGraph, CandidatesNearEveryTruthCenter) {
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
    phantom::PhantomSpec spec;
    spec.seed = seed;
    const auto c = phantom::generate_phantom(spec);
    const Skeleton s = skeletonize(c.mask);
    const VesselGraph raw = build_graph(s);
    expect_covers(s, raw);
    expect_handshake(raw);
    const auto centers = candidate_centers(prune_spurs(raw, 3));
    EXPECT_GE(centers.size(), 13u);
    for (int i = 0; i < kNumBoi; ++i) {
      const auto& g = c.truth.centers[static_cast<std::size_t>(i)];
      if (!g) continue;
      double best = 1e9;
      for (const auto& q : centers) {
        const double dx = q.x - g->x, dy = q.y - g->y, dz = q.z - g->z;
        best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
      }
      EXPECT_LE(best, 3.0) << "seed " << seed << " label " << label_name(from_index(i));
    }
  }
}
