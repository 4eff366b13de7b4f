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

#include "cowbif/skeleton.hpp"

#include <algorithm>
#include <deque>

namespace cowbif::skel {

namespace {

constexpr int kCenter = 13;

int pos(int dx, int dy, int dz) { return (dz + 1) * 9 + (dy + 1) * 3 + (dx + 1); }

struct Offsets {
  int dx, dy, dz;
};

Offsets offsets_of(int k) { return {k % 3 - 1, (k / 3) % 3 - 1, k / 9 - 1}; }

int manhattan(const Offsets& o) { return std::abs(o.dx) + std::abs(o.dy) + std::abs(o.dz); }

// Adjacency tables inside the 3x3x3 cube, centre excluded.
struct Tables {
  std::array<std::vector<int>, 27> adj26;  // 26-adjacent positions
  std::array<std::vector<int>, 27> adj6;   // 6-adjacent positions within N18
  std::array<bool, 27> in_n18{};
  std::array<bool, 27> is_face{};

  Tables() {
    for (int k = 0; k < 27; ++k) {
      const Offsets o = offsets_of(k);
      in_n18[k] = k != kCenter && manhattan(o) <= 2;
      is_face[k] = manhattan(o) == 1;
    }
    for (int a = 0; a < 27; ++a) {
      if (a == kCenter) continue;
      const Offsets oa = offsets_of(a);
      for (int b = 0; b < 27; ++b) {
        if (b == kCenter || b == a) continue;
        const Offsets ob = offsets_of(b);
        const Offsets d{oa.dx - ob.dx, oa.dy - ob.dy, oa.dz - ob.dz};
        if (std::abs(d.dx) > 1 || std::abs(d.dy) > 1 || std::abs(d.dz) > 1) continue;
        adj26[a].push_back(b);
        if (manhattan(d) == 1 && in_n18[a] && in_n18[b]) adj6[a].push_back(b);
      }
    }
  }
};

const Tables& tables() {
  static const Tables t;
  return t;
}

}  // namespace

bool is_simple_point(const Neighborhood& n) {
  const Tables& t = tables();
  std::array<int, 27> stack{};
  std::array<bool, 27> seen{};

  // Object: exactly one 26-component in N26*.
  int components = 0;
  for (int s = 0; s < 27; ++s) {
    if (s == kCenter || !n[s] || seen[s]) continue;
    if (++components > 1) return false;
    int top = 0;
    stack[top++] = s;
    seen[s] = true;
    while (top > 0) {
      const int a = stack[--top];
      for (int b : t.adj26[a]) {
        if (n[b] && !seen[b]) {
          seen[b] = true;
          stack[top++] = b;
        }
      }
    }
  }
  if (components != 1) return false;

  // Background: exactly one 6-component of N18 background touching a face.
  seen.fill(false);
  components = 0;
  for (int s = 0; s < 27; ++s) {
    if (!t.is_face[s] || n[s] || seen[s]) continue;
    if (++components > 1) return false;
    int top = 0;
    stack[top++] = s;
    seen[s] = true;
    while (top > 0) {
      const int a = stack[--top];
      for (int b : t.adj6[a]) {
        if (!n[b] && !seen[b]) {
          seen[b] = true;
          stack[top++] = b;
        }
      }
    }
  }
  return components == 1;
}

MaskVolume Skeleton::to_mask() const {
  MaskVolume m(dims, spacing, 0);
  for (const auto& v : voxels) m(v) = 1;
  return m;
}

namespace {

// Zero-bordered working copy so neighbourhood reads never go out of range.
struct Padded {
  int nx, ny, nz;
  std::vector<std::uint8_t> v;
  std::array<std::ptrdiff_t, 27> off{};

  explicit Padded(const MaskVolume& m)
      : nx(m.dims().nx + 2), ny(m.dims().ny + 2), nz(m.dims().nz + 2),
        v(static_cast<std::size_t>(nx) * ny * nz, 0) {
    const Dims3 d = m.dims();
    for (int z = 0; z < d.nz; ++z) {
      for (int y = 0; y < d.ny; ++y) {
        for (int x = 0; x < d.nx; ++x) v[index(x + 1, y + 1, z + 1)] = m(x, y, z);
      }
    }
    for (int k = 0; k < 27; ++k) {
      const Offsets o = offsets_of(k);
      off[k] = (static_cast<std::ptrdiff_t>(o.dz) * ny + o.dy) * nx + o.dx;
    }
  }
  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * ny + y) * nx + x;
  }
  Neighborhood neighborhood(std::size_t i) const {
    Neighborhood n{};
    for (int k = 0; k < 27; ++k) n[k] = v[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + off[k])] != 0;
    return n;
  }
  int count26(std::size_t i) const {
    int c = 0;
    for (int k = 0; k < 27; ++k) {
      if (k != kCenter && v[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + off[k])]) ++c;
    }
    return c;
  }
};

}  // namespace

Skeleton skeletonize(const MaskVolume& mask) {
  if (!is_binary(mask)) throw InvalidArgument("skeletonize expects a binary {0,1} mask");
  Padded img(mask);
  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < img.v.size(); ++i) {
    if (img.v[i]) fg.push_back(i);
  }

  const std::array<int, 6> directions{pos(0, 0, -1), pos(0, 0, 1), pos(0, -1, 0),
                                      pos(0, 1, 0),  pos(-1, 0, 0), pos(1, 0, 0)};
  std::vector<std::size_t> candidates;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int dir : directions) {
      candidates.clear();
      const std::ptrdiff_t step = img.off[dir];
      for (std::size_t i : fg) {
        if (img.v[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + step)]) continue;
        if (img.count26(i) == 1) continue;
        if (!is_simple_point(img.neighborhood(i))) continue;
        candidates.push_back(i);
      }
      bool removed = false;
      for (std::size_t i : candidates) {
        if (img.count26(i) == 1) continue;
        if (!is_simple_point(img.neighborhood(i))) continue;
        img.v[i] = 0;
        removed = true;
      }
      if (removed) {
        changed = true;
        std::erase_if(fg, [&](std::size_t i) { return img.v[i] == 0; });
      }
    }
  }

  Skeleton s{mask.dims(), mask.spacing(), {}};
  s.voxels.reserve(fg.size());
  for (std::size_t i : fg) {
    const int x = static_cast<int>(i % img.nx) - 1;
    const int y = static_cast<int>((i / img.nx) % img.ny) - 1;
    const int z = static_cast<int>(i / (static_cast<std::size_t>(img.nx) * img.ny)) - 1;
    s.voxels.push_back({x, y, z});
  }
  return s;
}

std::vector<int> label_components(const MaskVolume& mask, Connectivity connectivity, int* count) {
  const Dims3 d = mask.dims();
  std::vector<Offsets> nbrs;
  for (int k = 0; k < 27; ++k) {
    if (k == kCenter) continue;
    const Offsets o = offsets_of(k);
    if (manhattan(o) <= (connectivity == Connectivity::k6 ? 1 : connectivity == Connectivity::k18 ? 2 : 3)) {
      nbrs.push_back(o);
    }
  }
  std::vector<int> labels(mask.size(), 0);
  int n = 0;
  std::deque<Index3> queue;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask.data()[i] || labels[i]) continue;
    labels[i] = ++n;
    queue.push_back(mask.coords(i));
    while (!queue.empty()) {
      const Index3 p = queue.front();
      queue.pop_front();
      for (const auto& o : nbrs) {
        const Index3 q{p.x + o.dx, p.y + o.dy, p.z + o.dz};
        if (!d.contains(q)) continue;
        const std::size_t j = mask.index(q);
        if (mask.data()[j] && !labels[j]) {
          labels[j] = n;
          queue.push_back(q);
        }
      }
    }
  }
  if (count != nullptr) *count = n;
  return labels;
}

int count_components(const MaskVolume& mask, Connectivity connectivity) {
  int n = 0;
  label_components(mask, connectivity, &n);
  return n;
}

int neighbor_count(const MaskVolume& mask, const Index3& p) {
  int c = 0;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0 && dz == 0) continue;
        const Index3 q{p.x + dx, p.y + dy, p.z + dz};
        if (mask.dims().contains(q) && mask(q)) ++c;
      }
    }
  }
  return c;
}

}  // namespace cowbif::skel
