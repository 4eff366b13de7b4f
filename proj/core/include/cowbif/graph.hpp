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

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cowbif/skeleton.hpp"

namespace cowbif::skel {

// kCycleAnchor marks the single node placed on a skeleton component that is
// a pure loop (no endpoint or junction); it carries one self-loop edge.
enum class NodeKind { kEndpoint, kJunction, kCycleAnchor };

struct Node {
  int id = 0;
  Index3 coords;  // cluster voxel nearest to the cluster centroid
  NodeKind kind = NodeKind::kEndpoint;
  int degree = 0;  // edge incidences; a self-loop counts twice
  std::vector<Index3> voxels;
};

struct Edge {
  int a = 0;
  int b = 0;
  std::vector<Index3> polyline;  // skeleton voxels strictly between the two nodes
  int length_voxels = 0;         // voxel steps from node a to node b
  double length_mm = 0.0;
};

struct VesselGraph {
  Dims3 dims;
  Spacing3 spacing;
  std::vector<Node> nodes;
  std::vector<Edge> edges;

  int count(NodeKind kind) const;
};

// Classifies skeleton voxels by 26-neighbour count (1 endpoint, 2 path,
// >= 3 junction), merges 26-adjacent junction voxels into one node and traces
// the paths between nodes. Junction clusters that end up with fewer than
// three incidences are demoted or dissolved so every junction has degree >= 3.
VesselGraph build_graph(const Skeleton& skeleton);

// Repeatedly removes the shortest endpoint-to-junction edge shorter than
// min_len_voxels; a junction left with degree 2 is dissolved into one edge.
VesselGraph prune_spurs(VesselGraph graph, int min_len_voxels = 3);

// Junction coordinates, the patch centres handed to the classifier.
std::vector<Index3> candidate_centers(const VesselGraph& graph);

// Structured-text (JSON) export of nodes and edges.
std::string dump_graph(const VesselGraph& graph, bool with_polylines = true);
void write_graph(const std::filesystem::path& path, const VesselGraph& graph);

}  // namespace cowbif::skel
