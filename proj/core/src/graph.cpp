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

#include "cowbif/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <set>
#include <unordered_map>

#include "json.hpp"

namespace cowbif::skel {

int VesselGraph::count(NodeKind kind) const {
  return static_cast<int>(
      std::count_if(nodes.begin(), nodes.end(), [&](const Node& n) { return n.kind == kind; }));
}

namespace {

double step_mm(const Index3& p, const Index3& q, const Spacing3& s) {
  const double dx = (p.x - q.x) * s.sx;
  const double dy = (p.y - q.y) * s.sy;
  const double dz = (p.z - q.z) * s.sz;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

void measure(Edge& e, const std::vector<Node>& nodes, const Spacing3& s) {
  e.length_voxels = static_cast<int>(e.polyline.size()) + 1;
  Index3 prev = nodes[static_cast<std::size_t>(e.a)].coords;
  double mm = 0.0;
  for (const auto& p : e.polyline) {
    mm += step_mm(prev, p, s);
    prev = p;
  }
  e.length_mm = mm + step_mm(prev, nodes[static_cast<std::size_t>(e.b)].coords, s);
}

Index3 representative(const std::vector<Index3>& cluster) {
  double cx = 0, cy = 0, cz = 0;
  for (const auto& v : cluster) {
    cx += v.x;
    cy += v.y;
    cz += v.z;
  }
  const double n = static_cast<double>(cluster.size());
  cx /= n;
  cy /= n;
  cz /= n;
  Index3 best = cluster.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& v : cluster) {
    const double d = (v.x - cx) * (v.x - cx) + (v.y - cy) * (v.y - cy) + (v.z - cz) * (v.z - cz);
    if (d < best_d || (d == best_d && v < best)) {
      best_d = d;
      best = v;
    }
  }
  return best;
}

// Mutable working form shared by graph construction and pruning.
struct Work {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::vector<bool> node_alive;
  std::vector<bool> edge_alive;

  std::vector<int> incident(int n) const {
    std::vector<int> out;
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (!edge_alive[e]) continue;
      if (edges[e].a == n) out.push_back(static_cast<int>(e));
      if (edges[e].b == n) out.push_back(static_cast<int>(e));
    }
    return out;
  }

  int degree(int n) const { return static_cast<int>(incident(n).size()); }

  // Replaces node j (degree 2, two distinct edge slots) with one merged edge.
  void dissolve(int j, const Spacing3& s) {
    const std::vector<int> inc = incident(j);
    const Edge e1 = edges[static_cast<std::size_t>(inc[0])];
    const Edge e2 = edges[static_cast<std::size_t>(inc[1])];
    Edge merged;
    // e1 oriented x -> j, e2 oriented j -> y.
    std::vector<Index3> p1 = e1.polyline;
    int x = e1.a;
    if (e1.a == j) {
      std::reverse(p1.begin(), p1.end());
      x = e1.b;
    }
    std::vector<Index3> p2 = e2.polyline;
    int y = e2.b;
    if (e2.b == j) {
      std::reverse(p2.begin(), p2.end());
      y = e2.a;
    }
    merged.a = x;
    merged.b = y;
    merged.polyline = std::move(p1);
    const Node& node = nodes[static_cast<std::size_t>(j)];
    merged.polyline.push_back(node.coords);
    for (const auto& v : node.voxels) {
      if (!(v == node.coords)) merged.polyline.push_back(v);
    }
    merged.polyline.insert(merged.polyline.end(), p2.begin(), p2.end());
    edge_alive[static_cast<std::size_t>(inc[0])] = false;
    edge_alive[static_cast<std::size_t>(inc[1])] = false;
    node_alive[static_cast<std::size_t>(j)] = false;
    measure(merged, nodes, s);
    edges.push_back(std::move(merged));
    edge_alive.push_back(true);
  }

  // Fixes junctions with fewer than three incidences.
  void normalize_junctions(const Spacing3& s) {
    bool again = true;
    while (again) {
      again = false;
      for (std::size_t n = 0; n < nodes.size(); ++n) {
        if (!node_alive[n] || nodes[n].kind != NodeKind::kJunction) continue;
        const std::vector<int> inc = incident(static_cast<int>(n));
        if (inc.size() >= 3) continue;
        if (inc.size() == 2 && inc[0] == inc[1]) {
          nodes[n].kind = NodeKind::kCycleAnchor;
        } else if (inc.size() == 2) {
          dissolve(static_cast<int>(n), s);
          again = true;
        } else {
          nodes[n].kind = NodeKind::kEndpoint;
        }
      }
    }
  }

  VesselGraph finish(const Dims3& dims, const Spacing3& spacing) const {
    VesselGraph g{dims, spacing, {}, {}};
    std::vector<int> remap(nodes.size(), -1);
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      if (!node_alive[n]) continue;
      remap[n] = static_cast<int>(g.nodes.size());
      Node copy = nodes[n];
      copy.id = remap[n];
      copy.degree = 0;
      g.nodes.push_back(std::move(copy));
    }
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (!edge_alive[e]) continue;
      Edge copy = edges[e];
      copy.a = remap[static_cast<std::size_t>(copy.a)];
      copy.b = remap[static_cast<std::size_t>(copy.b)];
      g.nodes[static_cast<std::size_t>(copy.a)].degree += 1;
      g.nodes[static_cast<std::size_t>(copy.b)].degree += 1;
      g.edges.push_back(std::move(copy));
    }
    return g;
  }
};

Work from_graph(VesselGraph g) {
  Work w;
  w.nodes = std::move(g.nodes);
  w.edges = std::move(g.edges);
  w.node_alive.assign(w.nodes.size(), true);
  w.edge_alive.assign(w.edges.size(), true);
  return w;
}

}  // namespace

VesselGraph build_graph(const Skeleton& skeleton) {
  const auto& vox = skeleton.voxels;
  const std::size_t n_vox = vox.size();
  if (n_vox == 0) return VesselGraph{skeleton.dims, skeleton.spacing, {}, {}};

  const Dims3 d = skeleton.dims;
  auto linear = [&](const Index3& p) {
    return (static_cast<std::size_t>(p.z) * d.ny + p.y) * d.nx + p.x;
  };
  std::unordered_map<std::size_t, int> id_of;
  id_of.reserve(n_vox * 2);
  for (std::size_t i = 0; i < n_vox; ++i) id_of[linear(vox[i])] = static_cast<int>(i);

  std::vector<std::vector<int>> nbrs(n_vox);
  for (std::size_t i = 0; i < n_vox; ++i) {
    const Index3 p = vox[i];
    for (int dz = -1; dz <= 1; ++dz) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const Index3 q{p.x + dx, p.y + dy, p.z + dz};
          if (!d.contains(q)) continue;
          const auto it = id_of.find(linear(q));
          if (it != id_of.end()) nbrs[i].push_back(it->second);
        }
      }
    }
  }

  Work w;
  std::vector<int> node_of(n_vox, -1);
  auto add_node = [&](NodeKind kind, std::vector<int> members) {
    Node node;
    node.id = static_cast<int>(w.nodes.size());
    node.kind = kind;
    for (int m : members) {
      node.voxels.push_back(vox[static_cast<std::size_t>(m)]);
      node_of[static_cast<std::size_t>(m)] = node.id;
    }
    node.coords = representative(node.voxels);
    w.nodes.push_back(std::move(node));
    w.node_alive.push_back(true);
    return w.nodes.back().id;
  };

  // Junction clusters (26-connected runs of voxels with >= 3 neighbours).
  for (std::size_t i = 0; i < n_vox; ++i) {
    if (nbrs[i].size() < 3 || node_of[i] >= 0) continue;
    std::vector<int> members{static_cast<int>(i)};
    node_of[i] = -2;
    for (std::size_t k = 0; k < members.size(); ++k) {
      for (int u : nbrs[static_cast<std::size_t>(members[k])]) {
        if (nbrs[static_cast<std::size_t>(u)].size() >= 3 && node_of[static_cast<std::size_t>(u)] == -1) {
          node_of[static_cast<std::size_t>(u)] = -2;
          members.push_back(u);
        }
      }
    }
    std::sort(members.begin(), members.end());
    add_node(NodeKind::kJunction, members);
  }
  for (std::size_t i = 0; i < n_vox; ++i) {
    if (nbrs[i].size() <= 1) add_node(NodeKind::kEndpoint, {static_cast<int>(i)});
  }

  std::vector<bool> visited(n_vox, false);
  std::set<std::pair<int, int>> direct_pairs;

  auto trace = [&](int from_node, int start_voxel, int first) {
    Edge e;
    e.a = from_node;
    int prev = start_voxel;
    int cur = first;
    for (;;) {
      const int owner = node_of[static_cast<std::size_t>(cur)];
      if (owner >= 0) {
        e.b = owner;
        break;
      }
      visited[static_cast<std::size_t>(cur)] = true;
      e.polyline.push_back(vox[static_cast<std::size_t>(cur)]);
      const auto& nb = nbrs[static_cast<std::size_t>(cur)];
      int next = nb[0] == prev ? nb[1] : nb[0];
      if (visited[static_cast<std::size_t>(next)] && node_of[static_cast<std::size_t>(next)] < 0) {
        // Path closed on itself without reaching a node; cannot happen on a
        // well-formed skeleton but keep the walk finite.
        e.b = from_node;
        break;
      }
      prev = cur;
      cur = next;
    }
    w.edges.push_back(std::move(e));
    w.edge_alive.push_back(true);
  };

  auto trace_from = [&](int node) {
    const std::vector<Index3> members = w.nodes[static_cast<std::size_t>(node)].voxels;
    for (const auto& mv : members) {
      const int v = id_of.at(linear(mv));
      for (int u : nbrs[static_cast<std::size_t>(v)]) {
        const int owner = node_of[static_cast<std::size_t>(u)];
        if (owner == node) continue;
        if (owner >= 0) {
          const auto key = std::minmax(v, u);
          if (direct_pairs.insert({key.first, key.second}).second) {
            w.edges.push_back(Edge{node, owner, {}, 0, 0.0});
            w.edge_alive.push_back(true);
          }
          continue;
        }
        if (visited[static_cast<std::size_t>(u)]) continue;
        trace(node, v, u);
      }
    }
  };

  const std::size_t initial_nodes = w.nodes.size();
  for (std::size_t n = 0; n < initial_nodes; ++n) trace_from(static_cast<int>(n));

  // Components made only of path voxels are closed loops.
  for (std::size_t i = 0; i < n_vox; ++i) {
    if (visited[i] || node_of[i] >= 0) continue;
    const int anchor = add_node(NodeKind::kCycleAnchor, {static_cast<int>(i)});
    visited[i] = true;
    trace(anchor, static_cast<int>(i), nbrs[i][0]);
  }

  for (auto& e : w.edges) measure(e, w.nodes, skeleton.spacing);
  w.normalize_junctions(skeleton.spacing);
  return w.finish(skeleton.dims, skeleton.spacing);
}

VesselGraph prune_spurs(VesselGraph graph, int min_len_voxels) {
  const Dims3 dims = graph.dims;
  const Spacing3 spacing = graph.spacing;
  Work w = from_graph(std::move(graph));
  for (;;) {
    int best = -1;
    for (std::size_t e = 0; e < w.edges.size(); ++e) {
      if (!w.edge_alive[e]) continue;
      const Edge& edge = w.edges[e];
      if (edge.a == edge.b || edge.length_voxels >= min_len_voxels) continue;
      const NodeKind ka = w.nodes[static_cast<std::size_t>(edge.a)].kind;
      const NodeKind kb = w.nodes[static_cast<std::size_t>(edge.b)].kind;
      const bool spur = (ka == NodeKind::kEndpoint && kb == NodeKind::kJunction) ||
                        (ka == NodeKind::kJunction && kb == NodeKind::kEndpoint);
      if (!spur) continue;
      if (best < 0 || edge.length_voxels < w.edges[static_cast<std::size_t>(best)].length_voxels) {
        best = static_cast<int>(e);
      }
    }
    if (best < 0) break;
    const Edge spur = w.edges[static_cast<std::size_t>(best)];
    const bool a_is_end = w.nodes[static_cast<std::size_t>(spur.a)].kind == NodeKind::kEndpoint;
    const int end = a_is_end ? spur.a : spur.b;
    const int junction = a_is_end ? spur.b : spur.a;
    w.edge_alive[static_cast<std::size_t>(best)] = false;
    w.node_alive[static_cast<std::size_t>(end)] = false;
    w.normalize_junctions(spacing);
    (void)junction;
  }
  return w.finish(dims, spacing);
}

std::vector<Index3> candidate_centers(const VesselGraph& graph) {
  std::vector<Index3> out;
  for (const auto& n : graph.nodes) {
    if (n.kind == NodeKind::kJunction) out.push_back(n.coords);
  }
  return out;
}

std::string dump_graph(const VesselGraph& g, bool with_polylines) {
  using nlohmann::json;
  auto kind_name = [](NodeKind k) {
    switch (k) {
      case NodeKind::kEndpoint:
        return "endpoint";
      case NodeKind::kJunction:
        return "junction";
      case NodeKind::kCycleAnchor:
        return "cycle_anchor";
    }
    return "unknown";
  };
  json j;
  j["dims"] = {g.dims.nx, g.dims.ny, g.dims.nz};
  j["spacing"] = {g.spacing.sx, g.spacing.sy, g.spacing.sz};
  j["nodes"] = json::array();
  for (const auto& n : g.nodes) {
    j["nodes"].push_back({{"id", n.id},
                          {"coords", {n.coords.x, n.coords.y, n.coords.z}},
                          {"kind", kind_name(n.kind)},
                          {"degree", n.degree}});
  }
  j["edges"] = json::array();
  for (const auto& e : g.edges) {
    json je{{"a", e.a}, {"b", e.b}, {"length_voxels", e.length_voxels}, {"length_mm", e.length_mm}};
    if (with_polylines) {
      je["polyline"] = json::array();
      for (const auto& p : e.polyline) je["polyline"].push_back({p.x, p.y, p.z});
    }
    j["edges"].push_back(std::move(je));
  }
  return j.dump(1);
}

void write_graph(const std::filesystem::path& path, const VesselGraph& graph) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write graph dump '" + path.string() + "'");
  out << dump_graph(graph) << '\n';
}

}  // namespace cowbif::skel
