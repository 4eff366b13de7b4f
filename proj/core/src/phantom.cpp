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

#include "cowbif/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"

namespace cowbif::phantom {

double Vec3::norm() const { return std::sqrt(dot(*this)); }

int GroundTruth::count() const {
  return static_cast<int>(std::count_if(centers.begin(), centers.end(),
                                        [](const auto& c) { return c.has_value(); }));
}

namespace {

using Rng = std::mt19937_64;

// Independent random streams per generation stage.
enum class Stream : std::uint64_t { kTree = 1, kDistal = 2, kNoise = 3 };

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng make_rng(std::uint64_t seed, Stream stream) {
  return Rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream))));
}

enum class RadiusClass { kLarge, kMedium, kSmall };

std::pair<double, double> radius_range(RadiusClass c) {
  switch (c) {
    case RadiusClass::kLarge:
      return {1.6, 2.0};
    case RadiusClass::kMedium:
      return {1.0, 1.4};
    case RadiusClass::kSmall:
      return {0.4, 0.8};
  }
  return {1.0, 1.0};
}

// Left-hemisphere atlas, mm relative to the grid centre (x: left->right,
// y: posterior->anterior, z: inferior->superior). Right side is the x mirror.
struct PointDef {
  const char* name;
  Vec3 p;
};

const std::vector<PointDef>& lateral_points() {
  static const std::vector<PointDef> kPoints{
      {"VA0", {-5.0, -8.0, -28.0}},   {"VP", {-6.0, -9.0, -21.0}},     // VA x PICA
      {"VA1", {-4.0, -8.5, -17.0}},   {"PICA1", {-11.0, -13.0, -23.0}},
      {"PICA2", {-16.0, -18.0, -20.0}}, {"P1J", {-8.0, -6.0, 7.0}},   // P1/P2 + PCom
      {"P2a", {-14.0, -12.0, 9.0}},   {"P2b", {-19.0, -20.0, 10.0}},
      {"PCJ", {-10.0, 4.0, 4.0}},                                     // ICA x PCom
      {"ICA0", {-12.0, 4.0, -28.0}},  {"ICA1", {-11.5, 6.0, -14.0}},
      {"OAJ", {-11.0, 7.0, -6.0}},                                    // ICA x OA
      {"ICA2", {-10.5, 5.5, -1.0}},   {"ICAT", {-10.0, 7.0, 11.0}},     // ICA terminus
      {"OA1", {-14.0, 15.0, -4.0}},  {"OA2", {-16.0, 24.0, -2.0}},
      {"M1a", {-16.0, 7.0, 12.0}},     {"MB", {-22.0, 7.0, 12.0}},       // M1 -> M2
      {"M2a1", {-26.0, 11.0, 16.0}},  {"M2a2", {-30.0, 15.0, 21.0}},
      {"M2b1", {-26.0, 3.0, 15.0}},    {"M2b2", {-30.0, -2.0, 19.0}},
      {"A1a", {-7.0, 11.0, 12.0}},     {"AA", {-4.0, 15.0, 13.0}},       // A1 x A2
      {"A2a", {-5.0, 19.0, 17.0}},    {"A2b", {-4.0, 21.0, 28.0}},
  };
  return kPoints;
}

const std::vector<PointDef>& midline_points() {
  static const std::vector<PointDef> kPoints{
      {"VB", {0.0, -7.0, -13.0}}, {"BA1", {0.0, -6.0, -5.0}}, {"BAT", {0.0, -5.0, 3.0}}};
  return kPoints;
}

bool is_midline(const std::string& name) {
  const auto& mid = midline_points();
  return std::any_of(mid.begin(), mid.end(), [&](const PointDef& d) { return name == d.name; });
}

struct SegmentDef {
  const char* name;
  std::vector<const char*> points;
  RadiusClass radius;
};

// Bilateral segments; point names get the side suffix unless midline.
const std::vector<SegmentDef>& lateral_segments() {
  static const std::vector<SegmentDef> kSegments{
      {"VA", {"VA0", "VP", "VA1", "VB"}, RadiusClass::kMedium},
      {"PICA", {"VP", "PICA1", "PICA2"}, RadiusClass::kSmall},
      {"P1", {"BAT", "P1J"}, RadiusClass::kMedium},
      {"P2", {"P1J", "P2a", "P2b"}, RadiusClass::kMedium},
      {"PCom", {"P1J", "PCJ"}, RadiusClass::kSmall},
      {"ICA", {"ICA0", "ICA1", "OAJ", "ICA2", "PCJ", "ICAT"}, RadiusClass::kLarge},
      {"OA", {"OAJ", "OA1", "OA2"}, RadiusClass::kSmall},
      {"M1", {"ICAT", "M1a", "MB"}, RadiusClass::kMedium},
      {"M2a", {"MB", "M2a1", "M2a2"}, RadiusClass::kMedium},
      {"M2b", {"MB", "M2b1", "M2b2"}, RadiusClass::kMedium},
      {"A1", {"ICAT", "A1a", "AA"}, RadiusClass::kMedium},
      {"A2", {"AA", "A2a", "A2b"}, RadiusClass::kMedium},
  };
  return kSegments;
}

// Junction point of every BoI, in label order A..M.
const std::array<const char*, kNumBoi>& boi_point_names() {
  static const std::array<const char*, kNumBoi> kNames{
      "AA_L", "AA_R", "ICAT_L", "ICAT_R", "MB_L", "MB_R", "PCJ_L",
      "PCJ_R", "OAJ_L", "OAJ_R", "BAT", "VP_L", "VP_R"};
  return kNames;
}

// Endpoints that seed distal subtrees.
const std::vector<std::string>& distal_roots() {
  static const std::vector<std::string> kRoots{"M2a2_L", "M2a2_R", "M2b2_L", "M2b2_R",
                                               "A2b_L",  "A2b_R",  "P2b_L",  "P2b_R"};
  return kRoots;
}

Vec3 mirror(const Vec3& p) { return {-p.x, p.y, p.z}; }

std::string with_side(const std::string& base, char side) {
  if (is_midline(base)) return base;
  return base + "_" + side;
}

// Half-extent of the grid in mm.
Vec3 half_extent(const Dims3& d, const Spacing3& s) {
  return {0.5 * d.nx * s.sx, 0.5 * d.ny * s.sy, 0.5 * d.nz * s.sz};
}

// Digital tubes never get thinner than the half-diagonal of a voxel, so every
// voxel containing a centerline point is set and thin vessels stay connected.
double min_raster_radius(const Spacing3& s) {
  return 0.5 * std::sqrt(s.sx * s.sx + s.sy * s.sy + s.sz * s.sz) * 1.0001;
}

double point_segment_distance(const Vec3& q, const Vec3& a, const Vec3& b, double* t_out = nullptr) {
  const Vec3 ab = b - a;
  const double len2 = ab.dot(ab);
  double t = len2 > 0.0 ? (q - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  if (t_out != nullptr) *t_out = t;
  const Vec3 c = a + ab * t;
  return (q - c).norm();
}

double distance_to_tree(const Vec3& q, const std::vector<Segment>& segments) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : segments) {
    for (std::size_t i = 0; i + 1 < s.centerline.size(); ++i) {
      best = std::min(best, point_segment_distance(q, s.centerline[i], s.centerline[i + 1]));
    }
  }
  return best;
}

Vec3 normalized(const Vec3& v) {
  const double n = v.norm();
  return n > 0.0 ? v * (1.0 / n) : Vec3{0.0, 0.0, 1.0};
}

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

// Rotates v about the unit axis k by angle (Rodrigues).
Vec3 rotate(const Vec3& v, const Vec3& k, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return v * c + cross(k, v) * s + k * (k.dot(v) * (1.0 - c));
}

Vec3 any_perpendicular(const Vec3& d, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  for (;;) {
    const Vec3 r{n01(rng), n01(rng), n01(rng)};
    const Vec3 p = cross(d, r);
    if (p.norm() > 1e-6) return normalized(p);
  }
}

bool inside_grid(const Vec3& p, double r, const Vec3& half, double margin) {
  return std::fabs(p.x) + r + margin <= half.x && std::fabs(p.y) + r + margin <= half.y &&
         std::fabs(p.z) + r + margin <= half.z;
}

}  // namespace

void PhantomSpec::validate() const {
  if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0) throw InvalidArgument("phantom dims must be positive");
  validate_spacing(spacing);
  for (double p : {p_missing_pcom_left, p_missing_pcom_right, p_missing_acom, p_hypoplastic_pcom,
                   p_truncated_posterior}) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("phantom probabilities must lie in [0,1]");
  }
  if (!(hypoplastic_scale > 0.0 && hypoplastic_scale < 1.0)) {
    throw InvalidArgument("hypoplastic_scale must lie in (0,1)");
  }
  if (distal_branch_count < 0) throw InvalidArgument("distal_branch_count must be >= 0");
  if (!(noise_sigma >= 0.0) || !(jitter_mm >= 0.0)) {
    throw InvalidArgument("noise_sigma and jitter_mm must be >= 0");
  }
  // The atlas spans |x| <= 30, |y| <= 24, |z| <= 28 mm plus radii and jitter.
  const Vec3 half = half_extent(dims, spacing);
  const double slack = 2.0 + 4.0 * jitter_mm + 1.0;
  if (half.x < 30.0 + slack || half.y < 24.0 + slack || half.z < 28.0 + slack) {
    throw InvalidArgument("phantom grid is too small for the Circle-of-Willis template");
  }
}

Index3 to_voxel(const Vec3& p, const Dims3& d, const Spacing3& s) {
  auto axis = [](double v, double spacing, int n) {
    const int i = static_cast<int>(std::floor(v / spacing + 0.5 * n));
    return std::clamp(i, 0, n - 1);
  };
  return {axis(p.x, s.sx, d.nx), axis(p.y, s.sy, d.ny), axis(p.z, s.sz, d.nz)};
}

Vec3 to_millimetres(const Index3& v, const Dims3& d, const Spacing3& s) {
  return {(v.x + 0.5 - 0.5 * d.nx) * s.sx, (v.y + 0.5 - 0.5 * d.ny) * s.sy,
          (v.z + 0.5 - 0.5 * d.nz) * s.sz};
}

namespace {

// Branch roots flare to the widest vessel meeting at their junction and
// taper back to their own radius over flare_mm.
void flare_junctions(ArteryTree& tree, double flare_mm) {
  auto widest_at = [&](const Vec3& p) {
    double r = 0.0;
    for (const auto& seg : tree.segments) {
      for (std::size_t k = 0; k < seg.centerline.size(); ++k) {
        if (seg.centerline[k] == p) r = std::max(r, seg.radius[k]);
      }
    }
    return r;
  };
  std::vector<std::pair<double, double>> wide(tree.segments.size());
  for (std::size_t i = 0; i < tree.segments.size(); ++i) {
    wide[i] = {widest_at(tree.segments[i].centerline.front()), widest_at(tree.segments[i].centerline.back())};
  }
  for (std::size_t i = 0; i < tree.segments.size(); ++i) {
    Segment& seg = tree.segments[i];
    for (bool front : {true, false}) {
      const std::size_t n = seg.centerline.size();
      const std::size_t end = front ? 0 : n - 1;
      const std::size_t next = front ? 1 : n - 2;
      const double own = seg.radius[end];
      const double target = front ? wide[i].first : wide[i].second;
      const Vec3 a = seg.centerline[end];
      const Vec3 b = seg.centerline[next];
      const double len = (b - a).norm();
      if (target <= own || len <= 2.0 * flare_mm) continue;
      const auto at = static_cast<std::ptrdiff_t>(front ? 1 : n - 1);
      seg.centerline.insert(seg.centerline.begin() + at, a + (b - a) * (flare_mm / len));
      seg.radius.insert(seg.radius.begin() + at, own);
      seg.radius[front ? 0 : n] = target;
    }
  }
}

}  // namespace

std::pair<ArteryTree, GroundTruth> generate_tree(const PhantomSpec& spec) {
  spec.validate();
  Rng rng = make_rng(spec.seed, Stream::kTree);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  ArteryTree tree;
  VariationFlags& f = tree.flags;
  f.missing_pcom_left = u01(rng) < spec.p_missing_pcom_left;
  f.missing_pcom_right = u01(rng) < spec.p_missing_pcom_right;
  f.missing_acom = u01(rng) < spec.p_missing_acom;
  f.hypoplastic_pcom_left = u01(rng) < spec.p_hypoplastic_pcom;
  f.hypoplastic_pcom_right = u01(rng) < spec.p_hypoplastic_pcom;
  f.truncated_posterior = u01(rng) < spec.p_truncated_posterior;

  // Named points, jittered once each so shared junctions stay shared.
  std::map<std::string, Vec3> points;
  std::normal_distribution<double> jitter(0.0, 1.0);
  auto jittered = [&](const Vec3& p) {
    if (spec.jitter_mm == 0.0) return p;
    const Vec3 d{jitter(rng), jitter(rng), jitter(rng)};
    return p + d * spec.jitter_mm;
  };
  for (const auto& def : lateral_points()) {
    points[std::string(def.name) + "_L"] = jittered(def.p);
    points[std::string(def.name) + "_R"] = jittered(mirror(def.p));
  }
  for (const auto& def : midline_points()) points[def.name] = jittered(def.p);

  auto add_segment = [&](const std::string& name, const std::vector<std::string>& names,
                         RadiusClass cls, double scale) {
    const auto [lo, hi] = radius_range(cls);
    const double r = std::uniform_real_distribution<double>(lo, hi)(rng) * scale;
    Segment s;
    s.name = name;
    for (const auto& n : names) {
      s.centerline.push_back(points.at(n));
      s.radius.push_back(r);
    }
    tree.segments.push_back(std::move(s));
  };

  for (char side : {'L', 'R'}) {
    const bool missing_pcom = side == 'L' ? f.missing_pcom_left : f.missing_pcom_right;
    const bool hypo_pcom = side == 'L' ? f.hypoplastic_pcom_left : f.hypoplastic_pcom_right;
    for (const auto& def : lateral_segments()) {
      const std::string base = def.name;
      if (base == "PICA" && f.truncated_posterior) continue;
      if (base == "PCom" && missing_pcom) continue;
      std::vector<std::string> names;
      for (const char* p : def.points) {
        if (base == "VA" && f.truncated_posterior && std::string(p) == "VA0") continue;
        names.push_back(with_side(p, side));
      }
      const double scale = (base == "PCom" && hypo_pcom) ? spec.hypoplastic_scale : 1.0;
      add_segment(base + "_" + side, names, def.radius, scale);
    }
  }
  add_segment("BA", {"VB", "BA1", "BAT"}, RadiusClass::kLarge, 1.0);
  if (!f.missing_acom) add_segment("ACom", {"AA_L", "AA_R"}, RadiusClass::kSmall, 1.0);

  GroundTruth gt;
  for (int i = 0; i < kNumBoi; ++i) {
    const Label l = from_index(i);
    bool present = true;
    if (l == Label::G) present = !f.missing_pcom_left;
    if (l == Label::H) present = !f.missing_pcom_right;
    if (l == Label::L || l == Label::M) present = !f.truncated_posterior;
    if (!present) continue;
    const Vec3 p = points.at(boi_point_names()[static_cast<std::size_t>(i)]);
    tree.boi_points[static_cast<std::size_t>(i)] = p;
    gt.centers[static_cast<std::size_t>(i)] = to_voxel(p, spec.dims, spec.spacing);
  }
  flare_junctions(tree, 1.5);
  return {std::move(tree), gt};
}

ArteryTree add_distal_branches(ArteryTree tree, const PhantomSpec& spec) {
  if (spec.distal_branch_count == 0) return tree;
  Rng rng = make_rng(spec.seed, Stream::kDistal);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  const Vec3 half = half_extent(spec.dims, spec.spacing);

  struct Tip {
    Vec3 p;
    Vec3 dir;
    double radius;
  };
  std::vector<Tip> tips;
  for (const auto& name : distal_roots()) {
    for (const auto& s : tree.segments) {
      const std::string base = name.substr(0, name.size() - 2);
      const char side = name.back();
      const bool matches = (base == "M2a2" && s.name == std::string("M2a_") + side) ||
                           (base == "M2b2" && s.name == std::string("M2b_") + side) ||
                           (base == "A2b" && s.name == std::string("A2_") + side) ||
                           (base == "P2b" && s.name == std::string("P2_") + side);
      if (!matches) continue;
      const auto& c = s.centerline;
      tips.push_back({c.back(), normalized(c.back() - c[c.size() - 2]), s.radius.back()});
    }
  }

  std::vector<Vec3> protected_points;
  for (const auto& p : tree.boi_points) {
    if (p) protected_points.push_back(*p);
  }

  constexpr double kClearance = 2.5;  // mm between the new tube axis and others
  constexpr double kBoiClearance = 9.0;
  constexpr int kAttempts = 400;

  for (int b = 0; b < spec.distal_branch_count && !tips.empty(); ++b) {
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
      const std::size_t ti = static_cast<std::size_t>(u01(rng) * static_cast<double>(tips.size())) %
                             tips.size();
      const Tip root = tips[ti];
      const Vec3 dir = normalized(root.dir + Vec3{n01(rng), n01(rng), n01(rng)} * 0.6);
      const double trunk_len = 5.0 + 3.0 * u01(rng);
      const Vec3 junction = root.p + dir * trunk_len;
      const Vec3 axis = any_perpendicular(dir, rng);
      const double spread = (25.0 + 20.0 * u01(rng)) * std::numbers::pi / 180.0;
      const Vec3 d1 = normalized(rotate(dir, axis, spread));
      const Vec3 d2 = normalized(rotate(dir, axis, -spread));
      const Vec3 e1 = junction + d1 * (4.0 + 3.0 * u01(rng));
      const Vec3 e2 = junction + d2 * (4.0 + 3.0 * u01(rng));
      const double r_trunk = std::max(0.5, root.radius * 0.85);
      const double r_child = std::max(0.45, r_trunk * 0.8);

      bool ok = true;
      for (const Vec3& p : {junction, e1, e2}) {
        ok = ok && inside_grid(p, r_trunk, half, 1.5);
      }
      for (const Vec3& q : protected_points) {
        ok = ok && (junction - q).norm() >= kBoiClearance && (e1 - q).norm() >= 6.0 &&
             (e2 - q).norm() >= 6.0;
      }
      // Sample the new axes; skip the first millimetres next to the root.
      auto clear = [&](const Vec3& a, const Vec3& c, double skip) {
        const double len = (c - a).norm();
        for (double s = skip; s <= len; s += 0.5) {
          const Vec3 q = a + (c - a) * (s / len);
          if (distance_to_tree(q, tree.segments) < kClearance + r_trunk) return false;
        }
        return true;
      };
      ok = ok && clear(root.p, junction, kClearance + r_trunk + 0.5) && clear(junction, e1, 0.0) && clear(junction, e2, 0.0);
      if (!ok) continue;

      const std::string prefix = "distal" + std::to_string(b);
      tree.segments.push_back({prefix + "_trunk", {root.p, junction}, {r_trunk, r_trunk}});
      tree.segments.push_back({prefix + "_a", {junction, e1}, {r_child, r_child}});
      tree.segments.push_back({prefix + "_b", {junction, e2}, {r_child, r_child}});
      tips.erase(tips.begin() + static_cast<std::ptrdiff_t>(ti));
      tips.push_back({e1, d1, r_child});
      tips.push_back({e2, d2, r_child});
      break;
    }
  }
  return tree;
}

MaskVolume rasterize_mask(const ArteryTree& tree, const PhantomSpec& spec) {
  const Dims3 d = spec.dims;
  const Spacing3 s = spec.spacing;
  const Vec3 half = half_extent(d, s);
  const double r_min = min_raster_radius(s);
  MaskVolume mask(d, s, 0);

  for (const auto& seg : tree.segments) {
    for (std::size_t k = 0; k + 1 < seg.centerline.size(); ++k) {
      const Vec3 a = seg.centerline[k];
      const Vec3 b = seg.centerline[k + 1];
      const double ra = std::max(seg.radius[k], r_min);
      const double rb = std::max(seg.radius[k + 1], r_min);
      const double r = std::max(ra, rb);
      for (const Vec3& p : {a, b}) {
        if (!inside_grid(p, r, half, 0.0)) {
          throw GeometryError("segment '" + seg.name + "' extends outside the " +
                              std::to_string(d.nx) + "x" + std::to_string(d.ny) + "x" +
                              std::to_string(d.nz) + " grid");
        }
      }
      // Voxel range of the capsule's bounding box, padded by one voxel.
      auto range = [&](double lo, double hi, double sp, int n) {
        const int i0 = std::max(0, static_cast<int>(std::floor(lo / sp + 0.5 * n - 0.5)) - 1);
        const int i1 = std::min(n - 1, static_cast<int>(std::ceil(hi / sp + 0.5 * n - 0.5)) + 1);
        return std::pair{i0, i1};
      };
      const auto [x0, x1] = range(std::min(a.x, b.x) - r, std::max(a.x, b.x) + r, s.sx, d.nx);
      const auto [y0, y1] = range(std::min(a.y, b.y) - r, std::max(a.y, b.y) + r, s.sy, d.ny);
      const auto [z0, z1] = range(std::min(a.z, b.z) - r, std::max(a.z, b.z) + r, s.sz, d.nz);
      for (int z = z0; z <= z1; ++z) {
        for (int y = y0; y <= y1; ++y) {
          for (int x = x0; x <= x1; ++x) {
            if (mask(x, y, z)) continue;
            const Vec3 q = to_millimetres({x, y, z}, d, s);
            double t = 0.0;
            const double dist = point_segment_distance(q, a, b, &t);
            const double rt = ra + t * (rb - ra);
            if (dist <= rt) mask(x, y, z) = 1;
          }
        }
      }
    }
  }
  return mask;
}

std::pair<Volume3D, MaskVolume> rasterize(const ArteryTree& tree, const PhantomSpec& spec) {
  MaskVolume mask = rasterize_mask(tree, spec);
  Volume3D image(spec.dims, spec.spacing, 0.0f);
  Rng rng = make_rng(spec.seed, Stream::kNoise);
  std::normal_distribution<float> noise(0.0f, static_cast<float>(spec.noise_sigma));
  const auto bg = static_cast<float>(spec.background_level);
  const auto fg = static_cast<float>(spec.vessel_intensity);
  auto out = image.data();
  auto m = mask.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = m[i] ? fg : bg;
    if (spec.noise_sigma > 0.0) out[i] += noise(rng);
  }
  return {std::move(image), std::move(mask)};
}

ArteryTree mirror_tree(const ArteryTree& tree) {
  ArteryTree out;
  for (const auto& s : tree.segments) {
    Segment m = s;
    if (m.name.size() > 2 && m.name[m.name.size() - 2] == '_') {
      char& side = m.name.back();
      if (side == 'L') {
        side = 'R';
      } else if (side == 'R') {
        side = 'L';
      }
    }
    for (auto& p : m.centerline) p = mirror(p);
    out.segments.push_back(std::move(m));
  }
  out.flags = tree.flags;
  std::swap(out.flags.missing_pcom_left, out.flags.missing_pcom_right);
  std::swap(out.flags.hypoplastic_pcom_left, out.flags.hypoplastic_pcom_right);
  for (int i = 0; i < kNumBoi; ++i) {
    const auto& p = tree.boi_points[static_cast<std::size_t>(i)];
    if (p) out.boi_points[static_cast<std::size_t>(swap_left_right(i))] = mirror(*p);
  }
  return out;
}

PhantomCase generate_phantom(const PhantomSpec& spec) {
  auto [tree, gt] = generate_tree(spec);
  tree = add_distal_branches(std::move(tree), spec);
  auto [image, mask] = rasterize(tree, spec);
  return {spec, tree.flags, gt, std::move(image), std::move(mask)};
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index) {
  return splitmix64(splitmix64(base_seed) + index);
}

std::vector<PhantomRecord> sample_manifest(int n, const PhantomSpec& base, std::uint64_t base_seed) {
  if (n <= 0) throw InvalidArgument("phantom count must be > 0");
  std::vector<PhantomRecord> records;
  records.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    PhantomRecord r;
    r.id = i;
    r.spec = base;
    r.spec.seed = derive_seed(base_seed, static_cast<std::uint64_t>(i));
    auto [tree, gt] = generate_tree(r.spec);
    r.flags = tree.flags;
    r.truth = gt;
    records.push_back(std::move(r));
  }
  return records;
}

PhantomCase render(const PhantomRecord& record) {
  PhantomCase c = generate_phantom(record.spec);
  if (!(c.truth == record.truth) || !(c.flags == record.flags)) {
    throw FormatError("manifest record " + std::to_string(record.id) +
                      " does not match the phantom regenerated from its spec");
  }
  return c;
}

std::vector<PhantomCase> sample_dataset(int n, const PhantomSpec& base, std::uint64_t base_seed) {
  std::vector<PhantomCase> out;
  for (const auto& r : sample_manifest(n, base, base_seed)) out.push_back(render(r));
  return out;
}

namespace {

using nlohmann::json;

json spec_to_json(const PhantomSpec& s) {
  return json{{"seed", s.seed},
              {"dims", {s.dims.nx, s.dims.ny, s.dims.nz}},
              {"spacing", {s.spacing.sx, s.spacing.sy, s.spacing.sz}},
              {"p_missing_pcom_left", s.p_missing_pcom_left},
              {"p_missing_pcom_right", s.p_missing_pcom_right},
              {"p_missing_acom", s.p_missing_acom},
              {"p_hypoplastic_pcom", s.p_hypoplastic_pcom},
              {"hypoplastic_scale", s.hypoplastic_scale},
              {"p_truncated_posterior", s.p_truncated_posterior},
              {"distal_branch_count", s.distal_branch_count},
              {"background_level", s.background_level},
              {"vessel_intensity", s.vessel_intensity},
              {"noise_sigma", s.noise_sigma},
              {"jitter_mm", s.jitter_mm}};
}

PhantomSpec spec_from_json(const json& j) {
  PhantomSpec s;
  s.seed = j.at("seed").get<std::uint64_t>();
  const auto& d = j.at("dims");
  s.dims = {d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>()};
  const auto& sp = j.at("spacing");
  s.spacing = {sp.at(0).get<double>(), sp.at(1).get<double>(), sp.at(2).get<double>()};
  s.p_missing_pcom_left = j.at("p_missing_pcom_left").get<double>();
  s.p_missing_pcom_right = j.at("p_missing_pcom_right").get<double>();
  s.p_missing_acom = j.at("p_missing_acom").get<double>();
  s.p_hypoplastic_pcom = j.at("p_hypoplastic_pcom").get<double>();
  s.hypoplastic_scale = j.at("hypoplastic_scale").get<double>();
  s.p_truncated_posterior = j.at("p_truncated_posterior").get<double>();
  s.distal_branch_count = j.at("distal_branch_count").get<int>();
  s.background_level = j.at("background_level").get<double>();
  s.vessel_intensity = j.at("vessel_intensity").get<double>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.jitter_mm = j.at("jitter_mm").get<double>();
  return s;
}

}  // namespace

std::string to_manifest_line(const PhantomRecord& r) {
  json gt = json::object();
  for (int i = 0; i < kNumBoi; ++i) {
    const auto& c = r.truth.centers[static_cast<std::size_t>(i)];
    if (c) gt[std::string(label_name(from_index(i)))] = {c->x, c->y, c->z};
  }
  json j{{"id", r.id},
         {"spec", spec_to_json(r.spec)},
         {"flags",
          {{"missing_pcom_left", r.flags.missing_pcom_left},
           {"missing_pcom_right", r.flags.missing_pcom_right},
           {"missing_acom", r.flags.missing_acom},
           {"hypoplastic_pcom_left", r.flags.hypoplastic_pcom_left},
           {"hypoplastic_pcom_right", r.flags.hypoplastic_pcom_right},
           {"truncated_posterior", r.flags.truncated_posterior}}},
         {"ground_truth", gt}};
  if (!r.image_file.empty()) j["image"] = r.image_file;
  if (!r.mask_file.empty()) j["mask"] = r.mask_file;
  return j.dump();
}

PhantomRecord parse_manifest_line(const std::string& line) {
  try {
    const json j = json::parse(line);
    PhantomRecord r;
    r.id = j.at("id").get<int>();
    r.spec = spec_from_json(j.at("spec"));
    const auto& f = j.at("flags");
    r.flags.missing_pcom_left = f.at("missing_pcom_left").get<bool>();
    r.flags.missing_pcom_right = f.at("missing_pcom_right").get<bool>();
    r.flags.missing_acom = f.at("missing_acom").get<bool>();
    r.flags.hypoplastic_pcom_left = f.at("hypoplastic_pcom_left").get<bool>();
    r.flags.hypoplastic_pcom_right = f.at("hypoplastic_pcom_right").get<bool>();
    r.flags.truncated_posterior = f.at("truncated_posterior").get<bool>();
    for (const auto& [key, value] : j.at("ground_truth").items()) {
      const auto label = parse_label(key);
      if (!label || *label == Label::BoNI) throw FormatError("unknown ground-truth label '" + key + "'");
      r.truth.centers[static_cast<std::size_t>(to_index(*label))] =
          Index3{value.at(0).get<int>(), value.at(1).get<int>(), value.at(2).get<int>()};
    }
    if (j.contains("image")) r.image_file = j.at("image").get<std::string>();
    if (j.contains("mask")) r.mask_file = j.at("mask").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest line: ") + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const std::vector<PhantomRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write manifest '" + path.string() + "'");
  for (const auto& r : records) out << to_manifest_line(r) << '\n';
}

std::vector<PhantomRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read manifest '" + path.string() + "'");
  std::vector<PhantomRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    records.push_back(parse_manifest_line(line));
  }
  return records;
}

}  // namespace cowbif::phantom
