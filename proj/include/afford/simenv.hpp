#pragma once

#include <array>
#include <optional>
#include <set>

#include "afford/config.hpp"
#include "afford/image.hpp"

namespace afford {

// Deterministic 2.5-D tabletop: planar object positions plus integer stack
// heights on a unit-square workspace, z in [0, 0.4]. reset/step/render/parse
// are pure functions of their inputs.

enum class ObjShape : int { Cube = 0, Sphere = 1, Bottle = 2 };

inline const char* shape_name(ObjShape s) {
  switch (s) {
    case ObjShape::Cube: return "cube";
    case ObjShape::Sphere: return "sphere";
    default: return "bottle";
  }
}

struct Rgb {
  float r, g, b;
};

// Fixed object palette: near-saturated colors with pairwise RGB distance
// >= 1, so color identity survives reconstruction error. Background and
// gripper sit far from every entry.
inline const std::array<Rgb, 6>& object_palette() {
  static const std::array<Rgb, 6> p = {{
      {1.f, 0.f, 0.f},     // red
      {0.f, 0.75f, 0.f},   // green
      {0.f, 0.f, 1.f},     // blue
      {1.f, 0.9f, 0.f},    // yellow
      {1.f, 0.f, 1.f},     // magenta
      {0.f, 0.85f, 0.9f},  // cyan
  }};
  return p;
}
inline Rgb background_color() { return {245 / 255.f, 245 / 255.f, 245 / 255.f}; }
inline Rgb gripper_color() { return {40 / 255.f, 40 / 255.f, 40 / 255.f}; }

struct SceneObject {
  int id = 0;
  ObjShape shape = ObjShape::Cube;
  int color = 0;  // palette index
  double x = 0, y = 0;
  int stack_height = 0;
};

struct SceneState {
  double gx = 0, gy = 0, gz = 0;
  bool gripper_open = true;
  int held = -1;  // object id, -1 = none
  std::vector<SceneObject> objects;

  const SceneObject* find(int id) const {
    for (const auto& o : objects)
      if (o.id == id) return &o;
    return nullptr;
  }
  SceneObject* find(int id) {
    for (auto& o : objects)
      if (o.id == id) return &o;
    return nullptr;
  }
};

struct Action {
  double dx = 0, dy = 0, dz = 0, grip = -1;
};

struct EnvConfig {
  int objects_min = 2, objects_max = 3;
  int horizon = 25;
  double obj_radius = 0.06;
  double grasp_radius = 0.08;
  double grasp_height = 0.15;
  double push_radius = 0.08;
  double success_radius = 0.08;
  double step_cap = 0.12;
  double stack_tol = 0.05;
  double place_margin = 0.16;
  double min_separation = 0.18;
  int max_place_attempts = 200;
  int image_size = 32;
  bool draw_gripper = true;

  // fixed geometry
  static constexpr double kZMax = 0.4;
  static constexpr double kObjHeight = 0.08;  // push contact requires gz <= this
  static constexpr double kHomeX = 0.08, kHomeY = 0.08, kHomeZ = 0.30;

  static EnvConfig from(const RunConfig& c) {
    EnvConfig e;
    e.objects_min = c.geti("env.objects_min");
    e.objects_max = c.geti("env.objects_max");
    e.horizon = c.geti("env.horizon");
    e.obj_radius = c.getf("env.obj_radius");
    e.grasp_radius = c.getf("env.grasp_radius");
    e.grasp_height = c.getf("env.grasp_height");
    e.push_radius = c.getf("env.push_radius");
    e.success_radius = c.getf("env.success_radius");
    e.step_cap = c.getf("env.step_cap");
    e.stack_tol = c.getf("env.stack_tol");
    e.place_margin = c.getf("env.place_margin");
    e.min_separation = c.getf("env.min_separation");
    e.max_place_attempts = c.geti("env.max_place_attempts");
    e.image_size = c.geti("env.image_size");
    e.draw_gripper = c.getb("env.draw_gripper");
    check(e.objects_min >= 0 && e.objects_max >= e.objects_min, "env: bad object count range");
    check(e.objects_max <= int(object_palette().size()), "env: more objects than palette colors");
    check(e.horizon >= 2, "env: horizon must be >= 2");
    check(e.obj_radius > 0 && e.grasp_radius > 0 && e.push_radius > 0 && e.success_radius > 0 &&
              e.stack_tol > 0,
          "env: radii must be positive");
    return e;
  }
};

namespace envdetail {

inline double clampd(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }
inline double dist2d(double ax, double ay, double bx, double by) {
  return std::sqrt((ax - bx) * (ax - bx) + (ay - by) * (ay - by));
}

// true when another object rests directly on `o`
inline bool is_covered(const SceneState& s, const SceneObject& o, double stack_tol) {
  for (const auto& p : s.objects) {
    if (p.id == o.id || p.id == s.held) continue;
    if (p.stack_height == o.stack_height + 1 && dist2d(p.x, p.y, o.x, o.y) <= stack_tol)
      return true;
  }
  return false;
}

// indices of the column resting on top of objects[base] (inclusive), height order
inline std::vector<size_t> column_of(const SceneState& s, size_t base, double stack_tol) {
  std::vector<size_t> col = {base};
  int h = s.objects[base].stack_height;
  double cx = s.objects[base].x, cy = s.objects[base].y;
  bool grew = true;
  while (grew) {
    grew = false;
    for (size_t i = 0; i < s.objects.size(); ++i) {
      const auto& o = s.objects[i];
      if (o.id == s.held) continue;
      if (o.stack_height == h + 1 && dist2d(o.x, o.y, cx, cy) <= stack_tol) {
        col.push_back(i);
        ++h;
        grew = true;
        break;
      }
    }
  }
  return col;
}

}  // namespace envdetail

// Invariant check; returns an explanation for the first violation found.
inline std::optional<std::string> invariant_violation(const SceneState& s, const EnvConfig& cfg) {
  using namespace envdetail;
  if (s.gx < 0 || s.gx > 1 || s.gy < 0 || s.gy > 1 || s.gz < 0 || s.gz > EnvConfig::kZMax)
    return "gripper out of bounds";
  int held_count = 0;
  for (const auto& o : s.objects) {
    if (o.x < 0 || o.x > 1 || o.y < 0 || o.y > 1) return "object out of bounds";
    if (o.stack_height < 0) return "negative stack height";
    if (o.id == s.held) ++held_count;
  }
  if (s.held != -1 && held_count != 1) return "held object id not present";
  if (s.held != -1 && s.gripper_open) return "holding with open gripper";
  for (size_t i = 0; i < s.objects.size(); ++i) {
    const auto& a = s.objects[i];
    if (a.id == s.held) continue;
    if (a.stack_height == 0) {
      for (size_t j = i + 1; j < s.objects.size(); ++j) {
        const auto& b = s.objects[j];
        if (b.id == s.held || b.stack_height != 0) continue;
        if (dist2d(a.x, a.y, b.x, b.y) < 2 * cfg.obj_radius - 1e-9)
          return "stack-0 objects overlap";
      }
    } else {
      int supports = 0;
      for (const auto& b : s.objects) {
        if (b.id == a.id || b.id == s.held) continue;
        if (b.stack_height == a.stack_height - 1 && dist2d(a.x, a.y, b.x, b.y) <= cfg.stack_tol)
          ++supports;
      }
      if (supports != 1) return "stacked object lacks exactly one support";
    }
  }
  return std::nullopt;
}

inline SceneState reset(const EnvConfig& cfg, uint64_t seed) {
  using namespace envdetail;
  Rng rng(derive_seed(seed, 0xE57));
  SceneState s;
  s.gx = EnvConfig::kHomeX;
  s.gy = EnvConfig::kHomeY;
  s.gz = EnvConfig::kHomeZ;
  s.gripper_open = true;
  s.held = -1;
  int n = cfg.objects_min + (cfg.objects_max > cfg.objects_min
                                 ? rng.uniform_int(cfg.objects_max - cfg.objects_min + 1)
                                 : 0);
  // distinct colors so rendered objects never merge into one blob
  std::vector<int> colors(object_palette().size());
  for (size_t i = 0; i < colors.size(); ++i) colors[i] = int(i);
  for (size_t i = colors.size(); i > 1; --i) std::swap(colors[i - 1], colors[size_t(rng.uniform_int(int(i)))]);
  for (int i = 0; i < n; ++i) {
    SceneObject o;
    o.id = i;
    o.shape = ObjShape(rng.uniform_int(3));
    o.color = colors[size_t(i)];
    o.stack_height = 0;
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_place_attempts && !placed; ++attempt) {
      o.x = rng.uniform(cfg.place_margin, 1 - cfg.place_margin);
      o.y = rng.uniform(cfg.place_margin, 1 - cfg.place_margin);
      placed = true;
      for (const auto& p : s.objects)
        if (dist2d(o.x, o.y, p.x, p.y) < cfg.min_separation) placed = false;
    }
    check(placed, "reset: could not place object " + std::to_string(i) + " after " +
                      std::to_string(cfg.max_place_attempts) + " attempts");
    s.objects.push_back(o);
  }
  return s;
}

inline SceneState step(const SceneState& state, const Action& action, const EnvConfig& cfg) {
  using namespace envdetail;
  SceneState s = state;
  const double r = cfg.obj_radius;
  const double lo = r, hi = 1 - r;

  // 1. move gripper by the clamped displacement
  double dx = clampd(action.dx, -cfg.step_cap, cfg.step_cap);
  double dy = clampd(action.dy, -cfg.step_cap, cfg.step_cap);
  double dz = clampd(action.dz, -cfg.step_cap, cfg.step_cap);
  double grip = clampd(action.grip, -1, 1);
  s.gx = clampd(s.gx + dx, 0, 1);
  s.gy = clampd(s.gy + dy, 0, 1);
  s.gz = clampd(s.gz + dz, 0, EnvConfig::kZMax);

  // 2. held object tracks the gripper in (x,y)
  if (s.held != -1) {
    SceneObject* h = s.find(s.held);
    h->x = clampd(s.gx, lo, hi);
    h->y = clampd(s.gy, lo, hi);
  }

  // 3. grasp
  if (grip > 0 && s.gripper_open) {
    s.gripper_open = false;
    if (s.gz <= cfg.grasp_height) {
      int best = -1;
      double best_d = cfg.grasp_radius;
      for (const auto& o : s.objects) {
        if (is_covered(s, o, cfg.stack_tol)) continue;  // covered by another object
        double d = dist2d(o.x, o.y, s.gx, s.gy);
        if (d < best_d - 1e-12 || (std::abs(d - best_d) <= 1e-12 && (best == -1 || o.id < best))) {
          best_d = d;
          best = o.id;
        }
      }
      if (best != -1) {
        s.held = best;
        SceneObject* h = s.find(best);
        h->stack_height = 0;
        h->x = clampd(s.gx, lo, hi);
        h->y = clampd(s.gy, lo, hi);
      }
    }
  }

  // 4. release: settle on a support within stacking tolerance, else on the
  // table; if the spot cannot be cleared, the grip stays closed.
  if (grip <= 0 && s.held != -1) {
    SceneObject* h = s.find(s.held);
    int support = -1;
    double best_d = cfg.stack_tol;
    for (const auto& o : s.objects) {
      if (o.id == s.held || is_covered(s, o, cfg.stack_tol)) continue;
      double d = dist2d(o.x, o.y, h->x, h->y);
      if (d < best_d - 1e-12 || (std::abs(d - best_d) <= 1e-12 && (support == -1 || o.id < support))) {
        best_d = d;
        support = o.id;
      }
    }
    if (support != -1) {
      const SceneObject* sup = s.find(support);
      h->x = sup->x;
      h->y = sup->y;
      h->stack_height = sup->stack_height + 1;
      s.held = -1;
    } else {
      double px = clampd(h->x, lo, hi), py = clampd(h->y, lo, hi);
      bool ok = false;
      for (int iter = 0; iter < 8 && !ok; ++iter) {
        ok = true;
        for (const auto& o : s.objects) {
          if (o.id == s.held || o.stack_height != 0) continue;
          double d = dist2d(o.x, o.y, px, py);
          if (d < 2 * r) {
            double ux = d > 1e-12 ? (px - o.x) / d : 1.0;
            double uy = d > 1e-12 ? (py - o.y) / d : 0.0;
            px = clampd(o.x + ux * 2 * r * (1 + 1e-9), lo, hi);
            py = clampd(o.y + uy * 2 * r * (1 + 1e-9), lo, hi);
            ok = false;
            break;
          }
        }
      }
      if (ok) {
        h->x = px;
        h->y = py;
        h->stack_height = 0;
        s.held = -1;
      }
      // else: spot blocked, object remains held
    }
  }
  if (grip <= 0 && s.held == -1) s.gripper_open = true;

  // 5. push: gripper near table height translates stack bases it contacts;
  // only the final gripper position is tested (per-step caps keep sweeps short)
  if (s.gz <= EnvConfig::kObjHeight) {
    auto before = s.objects;
    bool moved = false;
    for (size_t i = 0; i < s.objects.size(); ++i) {
      auto& o = s.objects[i];
      if (o.id == s.held || o.stack_height != 0) continue;
      double d = dist2d(o.x, o.y, s.gx, s.gy);
      if (d < cfg.push_radius) {
        double overlap = cfg.push_radius - d;
        double ux = d > 1e-12 ? (o.x - s.gx) / d : 1.0;
        double uy = d > 1e-12 ? (o.y - s.gy) / d : 0.0;
        auto col = column_of(s, i, cfg.stack_tol);
        for (size_t ci : col) {
          s.objects[ci].x = clampd(s.objects[ci].x + ux * overlap, lo, hi);
          s.objects[ci].y = clampd(s.objects[ci].y + uy * overlap, lo, hi);
        }
        moved = true;
      }
    }
    if (moved) {
      // chain resolution between stack bases; on failure revert object motion
      bool ok = false;
      for (int iter = 0; iter < 16 && !ok; ++iter) {
        ok = true;
        for (size_t i = 0; i < s.objects.size() && ok; ++i) {
          auto& a = s.objects[i];
          if (a.id == s.held || a.stack_height != 0) continue;
          for (size_t j = i + 1; j < s.objects.size() && ok; ++j) {
            auto& b = s.objects[j];
            if (b.id == s.held || b.stack_height != 0) continue;
            double d = dist2d(a.x, a.y, b.x, b.y);
            if (d < 2 * r) {
              double ux = d > 1e-12 ? (b.x - a.x) / d : 1.0;
              double uy = d > 1e-12 ? (b.y - a.y) / d : 0.0;
              auto col = column_of(s, j, cfg.stack_tol);
              double nx = clampd(a.x + ux * 2 * r * (1 + 1e-9), lo, hi);
              double ny = clampd(a.y + uy * 2 * r * (1 + 1e-9), lo, hi);
              double sx = nx - b.x, sy = ny - b.y;
              for (size_t ci : col) {
                s.objects[ci].x = clampd(s.objects[ci].x + sx, lo, hi);
                s.objects[ci].y = clampd(s.objects[ci].y + sy, lo, hi);
              }
              ok = false;
            }
          }
        }
      }
      if (!ok) s.objects = before;  // crowded corner: objects refuse to move
    }
  }
  return s;
}

// ---- rendering ----

namespace envdetail {

// Sprite pixel masks. Level-k sprites shrink so a stacked object leaves a
// visible rim of its support; held objects draw at level 2.
inline int level_radius(int r0, int level) {
  int red = r0 >= 3 ? 2 : 1;
  return std::max(1, r0 - red * level);
}

inline std::vector<std::pair<int, int>> sprite_mask(ObjShape shape, int r) {
  std::vector<std::pair<int, int>> px;
  if (shape == ObjShape::Cube) {
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) px.push_back({dy, dx});
  } else if (shape == ObjShape::Sphere) {
    double re = r + (r >= 2 ? 0.7 : 0.4);
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        if (dx * dx + dy * dy <= re * re) px.push_back({dy, dx});
  } else {  // bottle: single-pixel neck on top of a narrower body
    int bw = std::max(1, r - 1);
    px.push_back({-r, 0});
    for (int dy = -r + 1; dy <= r; ++dy)
      for (int dx = -bw; dx <= bw; ++dx) px.push_back({dy, dx});
  }
  return px;
}

inline int to_px(double v, int n) { return int(std::lround(v * (n - 1))); }
inline double from_px(double p, int n) { return p / double(n - 1); }

}  // namespace envdetail

inline Image render(const SceneState& s, const EnvConfig& cfg) {
  using namespace envdetail;
  int n = cfg.image_size;
  Rgb bg = background_color();
  Image im = Image::filled(n, n, bg.r, bg.g, bg.b);
  int r0 = std::max(1, int(std::lround(cfg.obj_radius * n)));

  // occlusion order: stack level ascending, held object, gripper topmost
  std::vector<const SceneObject*> order;
  for (const auto& o : s.objects)
    if (o.id != s.held) order.push_back(&o);
  std::sort(order.begin(), order.end(), [](const SceneObject* a, const SceneObject* b) {
    return a->stack_height != b->stack_height ? a->stack_height < b->stack_height
                                              : a->id < b->id;
  });

  auto draw_obj = [&](const SceneObject& o, int level) {
    Rgb c = object_palette()[size_t(o.color)];
    int cx = to_px(o.x, n), cy = to_px(o.y, n);
    for (auto [dy, dx] : sprite_mask(o.shape, level_radius(r0, level)))
      im.set(cy + dy, cx + dx, c.r, c.g, c.b);
  };
  for (const auto* o : order) draw_obj(*o, o->stack_height);
  if (s.held != -1) draw_obj(*s.find(s.held), 2);

  if (cfg.draw_gripper) {
    Rgb gc = gripper_color();
    int cx = to_px(s.gx, n), cy = to_px(s.gy, n);
    for (int d = -2; d <= 2; ++d) {
      im.set(cy + d, cx, gc.r, gc.g, gc.b);
      im.set(cy, cx + d, gc.r, gc.g, gc.b);
    }
    if (!s.gripper_open)
      for (int dy : {-1, 1})
        for (int dx : {-1, 1}) im.set(cy + dy, cx + dx, gc.r, gc.g, gc.b);
  }
  return im;
}

// ---- scene parsing (color segmentation + template matching) ----

struct Detection {
  ObjShape shape = ObjShape::Cube;
  int color = 0;
  int level = 0;  // estimated stack height from sprite scale
  double x = 0, y = 0;
  double match = 0;  // IoU against the best template
};

struct ParsedScene {
  bool unparseable = false;  // some fragment matched no template
  std::vector<Detection> detections;
};

inline ParsedScene parse(const Image& im, const EnvConfig& cfg) {
  using namespace envdetail;
  check(im.h == cfg.image_size && im.w == cfg.image_size, "parse: unexpected image dimensions");
  int n = im.h;
  constexpr double kClassifyDist2 = 0.16;  // 0.4^2 in rgb space
  constexpr double kMatchMin = 0.5;
  const auto& pal = object_palette();

  // classify pixels: 0..5 palette, -1 background/gripper/unknown
  std::vector<int> label(size_t(n) * n, -1);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      float pr = im.at(y, x, 0), pg = im.at(y, x, 1), pb = im.at(y, x, 2);
      double best = kClassifyDist2;
      int lab = -1;
      auto consider = [&](Rgb c, int l) {
        double d = (pr - c.r) * (pr - c.r) + (pg - c.g) * (pg - c.g) + (pb - c.b) * (pb - c.b);
        if (d < best) {
          best = d;
          lab = l;
        }
      };
      for (int i = 0; i < int(pal.size()); ++i) consider(pal[size_t(i)], i);
      consider(background_color(), -1);
      consider(gripper_color(), -1);
      label[size_t(y) * n + x] = lab;
    }

  // 8-connected components per palette color
  struct Component {
    int color = 0;
    std::vector<std::pair<int, int>> px;
    double cy = 0, cx = 0;
  };
  std::vector<Component> comps;
  std::vector<char> seen(size_t(n) * n, 0);
  int r0 = std::max(1, int(std::lround(cfg.obj_radius * n)));
  for (int sy = 0; sy < n; ++sy)
    for (int sx = 0; sx < n; ++sx) {
      size_t si = size_t(sy) * n + sx;
      if (seen[si] || label[si] < 0) continue;
      Component comp;
      comp.color = label[si];
      std::vector<size_t> stack = {si};
      seen[si] = 1;
      while (!stack.empty()) {
        size_t cur = stack.back();
        stack.pop_back();
        int cy = int(cur) / n, cx = int(cur) % n;
        comp.px.push_back({cy, cx});
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            int ny = cy + dy, nx = cx + dx;
            if (ny < 0 || ny >= n || nx < 0 || nx >= n) continue;
            size_t ni = size_t(ny) * n + nx;
            if (!seen[ni] && label[ni] == comp.color) {
              seen[ni] = 1;
              stack.push_back(ni);
            }
          }
      }
      for (auto [y, x] : comp.px) {
        comp.cy += y;
        comp.cx += x;
      }
      comp.cy /= double(comp.px.size());
      comp.cx /= double(comp.px.size());
      comps.push_back(std::move(comp));
    }

  // Merge same-color components that sit close together into clusters: the
  // visible pixels of an occluded stack support can fragment, and they must
  // be explained as one object, not matched piecewise.
  struct Cluster {
    int color = 0;
    std::set<std::pair<int, int>> px;
    double cy = 0, cx = 0;
    bool explained = false;
  };
  std::vector<Cluster> clusters;
  {
    std::vector<int> owner(comps.size(), -1);
    for (size_t i = 0; i < comps.size(); ++i) {
      if (owner[i] >= 0) continue;
      Cluster cl;
      cl.color = comps[i].color;
      std::vector<size_t> members = {i};
      owner[i] = int(clusters.size());
      bool grew = true;
      while (grew) {
        grew = false;
        for (size_t j = 0; j < comps.size(); ++j) {
          if (owner[j] >= 0 || comps[j].color != cl.color) continue;
          for (size_t m : members)
            if (std::abs(comps[j].cy - comps[m].cy) <= 2 * r0 + 2 &&
                std::abs(comps[j].cx - comps[m].cx) <= 2 * r0 + 2) {
              owner[j] = int(clusters.size());
              members.push_back(j);
              grew = true;
              break;
            }
        }
      }
      double cy = 0, cx = 0;
      size_t total = 0;
      for (size_t m : members) {
        for (auto p : comps[m].px) cl.px.insert(p);
        cy += comps[m].cy * double(comps[m].px.size());
        cx += comps[m].cx * double(comps[m].px.size());
        total += comps[m].px.size();
      }
      cl.cy = cy / double(total);
      cl.cx = cx / double(total);
      clusters.push_back(std::move(cl));
    }
  }

  // IoU of a cluster against a template placed at (ccy, ccx), with template
  // pixels covered by `occluders` removed (sprites of objects stacked above).
  auto match_iou = [&](const std::set<std::pair<int, int>>& pix, ObjShape shape, int level,
                       int ccy, int ccx, const std::set<std::pair<int, int>>& occluders) {
    int inter = 0, tmpl_in = 0;
    for (auto [dy, dx] : sprite_mask(shape, level_radius(r0, level))) {
      int py = ccy + dy, px = ccx + dx;
      if (py < 0 || py >= n || px < 0 || px >= n) continue;  // clipped at edge
      if (occluders.count({py, px})) continue;               // hidden by a stacked object
      ++tmpl_in;
      if (pix.count({py, px})) ++inter;
    }
    if (tmpl_in == 0) return -1.0;
    return inter / (double(tmpl_in) + double(pix.size()) - double(inter));
  };

  // Explain clusters best-first: each iteration scores every unexplained
  // cluster (plain sprite hypotheses plus occluded-support hypotheses beneath
  // already-accepted detections) and commits only the highest-scoring one, so
  // exact matches anchor the ambiguous occluded supports.
  ParsedScene out;
  auto best_hypothesis = [&](const Cluster& cl) {
    double best_iou = -1;
    Detection det;
    auto consider = [&](ObjShape shape, int level, int ccy, int ccx,
                        const std::set<std::pair<int, int>>& occ) {
      double iou = match_iou(cl.px, shape, level, ccy, ccx, occ);
      if (iou > best_iou) {
        best_iou = iou;
        det = Detection{shape, cl.color, level, from_px(ccx, n), from_px(ccy, n), iou};
      }
    };
    for (int shape = 0; shape < 3; ++shape)
      for (int level = 0; level <= 2; ++level)
        for (int oy = -1; oy <= 1; ++oy)
          for (int ox = -1; ox <= 1; ++ox)
            consider(ObjShape(shape), level, int(std::lround(cl.cy)) + oy,
                     int(std::lround(cl.cx)) + ox, {});
    for (const auto& up : out.detections) {
      if (up.level < 1) continue;
      int ucy = to_px(up.y, n), ucx = to_px(up.x, n);
      if (std::abs(ucy - cl.cy) > 2 * r0 + 2 || std::abs(ucx - cl.cx) > 2 * r0 + 2) continue;
      std::set<std::pair<int, int>> occ;
      for (const auto& d : out.detections) {
        if (d.level <= up.level - 1) continue;
        int dcy = to_px(d.y, n), dcx = to_px(d.x, n);
        if (std::abs(dcy - ucy) > 2 * r0 + 2 || std::abs(dcx - ucx) > 2 * r0 + 2) continue;
        for (auto [dy, dx] : sprite_mask(d.shape, level_radius(r0, d.level)))
          occ.insert({dcy + dy, dcx + dx});
      }
      for (int shape = 0; shape < 3; ++shape)
        for (int oy = -1; oy <= 1; ++oy)
          for (int ox = -1; ox <= 1; ++ox)
            consider(ObjShape(shape), up.level - 1, ucy + oy, ucx + ox, occ);
    }
    return std::make_pair(best_iou, det);
  };

  while (true) {
    double global_best = -1;
    size_t best_idx = clusters.size();
    Detection best_det;
    for (size_t i = 0; i < clusters.size(); ++i) {
      if (clusters[i].explained) continue;
      auto [iou, det] = best_hypothesis(clusters[i]);
      if (iou > global_best) {
        global_best = iou;
        best_idx = i;
        best_det = det;
      }
    }
    if (best_idx == clusters.size() || global_best < kMatchMin) break;
    out.detections.push_back(best_det);
    clusters[best_idx].explained = true;
  }

  for (const auto& cl : clusters)
    if (!cl.explained) out.unparseable = true;
  return out;
}

// Reference multiset for plausibility checks: sorted (shape, color) pairs.
inline std::vector<std::pair<int, int>> object_multiset(const SceneState& s) {
  std::vector<std::pair<int, int>> m;
  for (const auto& o : s.objects) m.push_back({int(o.shape), o.color});
  std::sort(m.begin(), m.end());
  return m;
}

inline std::vector<std::pair<int, int>> detection_multiset(const ParsedScene& p) {
  std::vector<std::pair<int, int>> m;
  for (const auto& d : p.detections) m.push_back({int(d.shape), d.color});
  std::sort(m.begin(), m.end());
  return m;
}

// Plausible iff parseable, all detections in bounds, the detected multiset
// matches the reference (when given), and no same-level pair overlaps beyond
// tolerance (different levels legitimately overlap in a stack).
inline bool plausible(const ParsedScene& p, const EnvConfig& cfg,
                      const std::vector<std::pair<int, int>>* reference = nullptr) {
  using namespace envdetail;
  if (p.unparseable) return false;
  double edge_tol = 2.0 / double(cfg.image_size - 1);
  for (const auto& d : p.detections) {
    if (d.x < cfg.obj_radius - edge_tol || d.x > 1 - cfg.obj_radius + edge_tol ||
        d.y < cfg.obj_radius - edge_tol || d.y > 1 - cfg.obj_radius + edge_tol)
      return false;
  }
  if (reference && detection_multiset(p) != *reference) return false;
  constexpr double kOverlapTol = 0.35;
  for (size_t i = 0; i < p.detections.size(); ++i)
    for (size_t j = i + 1; j < p.detections.size(); ++j) {
      const auto& a = p.detections[i];
      const auto& b = p.detections[j];
      if (a.level != b.level) continue;
      if (dist2d(a.x, a.y, b.x, b.y) < 2 * cfg.obj_radius * (1 - kOverlapTol)) return false;
    }
  return true;
}

inline bool success(const SceneState& state, const SceneState& goal, double eps) {
  using namespace envdetail;
  std::set<int> a, b;
  for (const auto& o : state.objects) a.insert(o.id);
  for (const auto& o : goal.objects) b.insert(o.id);
  check(a == b, "success: mismatched object id sets");
  for (const auto& o : state.objects) {
    const SceneObject* g = goal.find(o.id);
    if (dist2d(o.x, o.y, g->x, g->y) > eps) return false;
    if (o.stack_height != g->stack_height) return false;
  }
  return true;
}

}  // namespace afford
