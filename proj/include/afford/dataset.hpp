#pragma once

#include <json.hpp>

#include "afford/scripted.hpp"

namespace afford {

// (o_c, o_g) frame-pair corpus: synthesized by scripted simulator interaction
// or ingested from externally supplied image pairs. Stored on disk as a
// manifest plus paired lossless PPM files.

struct FramePair {
  Image o_c, o_g;
};

struct BehaviorMix {
  double push = 0.4, pick = 0.3, stack = 0.2, reorient = 0.1;

  void validate() const {
    check(push >= 0 && pick >= 0 && stack >= 0 && reorient >= 0, "behavior mix: negative weight");
    check(std::abs(push + pick + stack + reorient - 1.0) < 1e-9, "behavior mix must sum to 1");
  }

  BehaviorKind draw(Rng& rng) const {
    double u = rng.uniform();
    if (u < push) return BehaviorKind::Push;
    if (u < push + pick) return BehaviorKind::PickPlace;
    if (u < push + pick + stack) return BehaviorKind::Stack;
    return BehaviorKind::Reorient;
  }

  static BehaviorMix from(const RunConfig& c) {
    BehaviorMix m;
    m.push = c.getf("data.mix_push");
    m.pick = c.getf("data.mix_pick");
    m.stack = c.getf("data.mix_stack");
    m.reorient = c.getf("data.mix_reorient");
    m.validate();
    return m;
  }
};

struct PairDataset {
  std::vector<FramePair> pairs;
  int width = 0, height = 0;
  uint64_t seed = 0;
  BehaviorMix mix;
  std::vector<int> val_ids;  // indices assigned to the validation split

  size_t size() const { return pairs.size(); }

  std::vector<int> train_indices() const {
    std::vector<char> is_val(pairs.size(), 0);
    for (int i : val_ids) is_val[size_t(i)] = 1;
    std::vector<int> out;
    for (size_t i = 0; i < pairs.size(); ++i)
      if (!is_val[i]) out.push_back(int(i));
    return out;
  }

  uint64_t content_hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& p : pairs) {
      uint64_t hc = image_hash(p.o_c), hg = image_hash(p.o_g);
      h = fnv1a64(&hc, sizeof(hc), h);
      h = fnv1a64(&hg, sizeof(hg), h);
    }
    return h;
  }
};

namespace datadetail {

inline bool segment_clear(double ax, double ay, double bx, double by, const SceneState& s,
                          int skip_id, double clearance) {
  for (const auto& o : s.objects) {
    if (o.id == skip_id) continue;
    // distance from o to segment a-b
    double vx = bx - ax, vy = by - ay;
    double len2 = vx * vx + vy * vy;
    double t = len2 > 1e-12 ? ((o.x - ax) * vx + (o.y - ay) * vy) / len2 : 0.0;
    t = envdetail::clampd(t, 0, 1);
    double d = envdetail::dist2d(o.x, o.y, ax + t * vx, ay + t * vy);
    if (d < clearance) return false;
  }
  return true;
}

struct BehaviorPlan {
  std::unique_ptr<ScriptedController> ctrl;
  BehaviorKind kind;
};

// Choose a feasible behavior instance in the given scene, or nullptr.
inline std::unique_ptr<ScriptedController> plan_behavior(const SceneState& s, BehaviorKind kind,
                                                         const EnvConfig& cfg, Rng& rng) {
  const double lo = cfg.place_margin, hi = 1 - cfg.place_margin;
  if (s.objects.empty()) return nullptr;
  if (kind == BehaviorKind::Push) {
    int oi = rng.uniform_int(int(s.objects.size()));
    const auto& o = s.objects[size_t(oi)];
    for (int attempt = 0; attempt < 12; ++attempt) {
      double ang = rng.uniform(0, 6.283185307179586);
      double dist = rng.uniform(0.15, 0.30);
      double tx = o.x + std::cos(ang) * dist, ty = o.y + std::sin(ang) * dist;
      if (tx < lo || tx > hi || ty < lo || ty > hi) continue;
      double ux = (tx - o.x) / dist, uy = (ty - o.y) / dist;
      double bx = o.x - ux * (cfg.push_radius + 0.03), by = o.y - uy * (cfg.push_radius + 0.03);
      if (bx < 0.02 || bx > 0.98 || by < 0.02 || by > 0.98) continue;
      if (!segment_clear(bx, by, tx, ty, s, o.id, 2 * cfg.obj_radius + 0.02)) continue;
      return std::make_unique<PushController>(cfg, o.id, tx, ty);
    }
    return nullptr;
  }
  if (kind == BehaviorKind::Stack) {
    if (s.objects.size() < 2) return nullptr;
    int a = rng.uniform_int(int(s.objects.size()));
    int b = rng.uniform_int(int(s.objects.size() - 1));
    if (b >= a) ++b;
    const auto& carried = s.objects[size_t(a)];
    const auto& support = s.objects[size_t(b)];
    if (envdetail::is_covered(s, carried, cfg.stack_tol) ||
        envdetail::is_covered(s, support, cfg.stack_tol))
      return nullptr;
    return std::make_unique<PickPlaceController>(cfg, carried.id, support.id);
  }
  // PickPlace / Reorient: free-spot targets
  int oi = rng.uniform_int(int(s.objects.size()));
  const auto& o = s.objects[size_t(oi)];
  if (envdetail::is_covered(s, o, cfg.stack_tol)) return nullptr;
  for (int attempt = 0; attempt < 12; ++attempt) {
    double tx, ty;
    if (kind == BehaviorKind::Reorient) {
      double ang = rng.uniform(0, 6.283185307179586);
      double dist = rng.uniform(0.05, 0.09);
      tx = o.x + std::cos(ang) * dist;
      ty = o.y + std::sin(ang) * dist;
    } else {
      tx = rng.uniform(lo, hi);
      ty = rng.uniform(lo, hi);
      if (envdetail::dist2d(tx, ty, o.x, o.y) < 0.15) continue;  // make it an actual move
    }
    if (tx < lo || tx > hi || ty < lo || ty > hi) continue;
    bool clear = true;
    double need = kind == BehaviorKind::Reorient ? 2 * cfg.obj_radius + 0.02
                                                 : cfg.min_separation;
    for (const auto& p : s.objects)
      if (p.id != o.id && envdetail::dist2d(tx, ty, p.x, p.y) < need) clear = false;
    if (!clear) continue;
    return std::make_unique<PickPlaceController>(cfg, o.id, tx, ty);
  }
  return nullptr;
}

}  // namespace datadetail

// One generated episode: reset, run a scripted behavior to completion, render
// first and last frames. Behaviors that fail to plan or finish are retried
// with re-derived seeds so generation stays deterministic in (seed, index).
inline FramePair generate_pair(const EnvConfig& cfg, const BehaviorMix& mix, uint64_t master_seed,
                               uint64_t index, int max_script_steps,
                               SceneState* out_initial = nullptr,
                               SceneState* out_final = nullptr) {
  uint64_t episode_seed = derive_seed(master_seed, index);
  for (uint64_t attempt = 0; attempt < 20; ++attempt) {
    Rng rng(derive_seed(episode_seed, 1000 + attempt));
    SceneState s0 = reset(cfg, derive_seed(episode_seed, 100 + attempt));
    auto ctrl = datadetail::plan_behavior(s0, mix.draw(rng), cfg, rng);
    if (!ctrl) continue;
    ScriptRun run = run_script(s0, *ctrl, cfg, max_script_steps);
    if (!run.completed || run.final_state.held != -1) continue;
    if (invariant_violation(run.final_state, cfg)) continue;
    if (out_initial) *out_initial = s0;
    if (out_final) *out_final = run.final_state;
    return FramePair{render(s0, cfg), render(run.final_state, cfg)};
  }
  throw Error("generate_pair: no feasible behavior after 20 attempts (index " +
              std::to_string(index) + ")");
}

inline PairDataset generate_pairs(const EnvConfig& cfg, int n, const BehaviorMix& mix,
                                  uint64_t seed, int max_script_steps = 60) {
  check(n >= 0, "generate_pairs: n must be >= 0");
  mix.validate();
  PairDataset ds;
  ds.width = cfg.image_size;
  ds.height = cfg.image_size;
  ds.seed = seed;
  ds.mix = mix;
  ds.pairs.reserve(size_t(n));
  for (int i = 0; i < n; ++i)
    ds.pairs.push_back(generate_pair(cfg, mix, seed, uint64_t(i), max_script_steps));
  return ds;
}

// Deterministic disjoint-exhaustive split; val size = round(n * fraction).
inline std::pair<PairDataset, PairDataset> split(const PairDataset& ds, double val_fraction,
                                                 uint64_t seed) {
  check(val_fraction >= 0 && val_fraction < 1, "split: fraction must be in [0,1)");
  size_t n = ds.pairs.size();
  size_t nval = size_t(std::llround(double(n) * val_fraction));
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, 0x5911));
  for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[size_t(rng.uniform_int(int(i)))]);
  PairDataset train = ds, val = ds;
  train.pairs.clear();
  val.pairs.clear();
  train.val_ids.clear();
  val.val_ids.clear();
  std::vector<char> is_val(n, 0);
  for (size_t i = 0; i < nval; ++i) is_val[idx[i]] = 1;
  for (size_t i = 0; i < n; ++i) (is_val[i] ? val : train).pairs.push_back(ds.pairs[i]);
  return {train, val};
}

// Assigns val ids in-place (used by gen-data so the split ships in the manifest).
inline void assign_split(PairDataset& ds, double val_fraction, uint64_t seed) {
  check(val_fraction >= 0 && val_fraction < 1, "split: fraction must be in [0,1)");
  size_t n = ds.pairs.size();
  size_t nval = size_t(std::llround(double(n) * val_fraction));
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, 0x5911));
  for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[size_t(rng.uniform_int(int(i)))]);
  ds.val_ids.clear();
  for (size_t i = 0; i < nval; ++i) ds.val_ids.push_back(int(idx[i]));
  std::sort(ds.val_ids.begin(), ds.val_ids.end());
}

// ---- persistence ----

inline void save_dataset(const std::string& dir, const PairDataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "pairs");
  nlohmann::json m;
  m["format"] = "afford-pairs-v1";
  m["count"] = ds.pairs.size();
  m["width"] = ds.width;
  m["height"] = ds.height;
  m["seed"] = ds.seed;
  m["mix"] = {{"push", ds.mix.push},
              {"pick", ds.mix.pick},
              {"stack", ds.mix.stack},
              {"reorient", ds.mix.reorient}};
  m["val_ids"] = ds.val_ids;
  std::ofstream f(fs::path(dir) / "manifest.json");
  check(f.good(), "save_dataset: cannot write manifest in " + dir);
  f << m.dump(2) << "\n";
  char name[64];
  for (size_t i = 0; i < ds.pairs.size(); ++i) {
    std::snprintf(name, sizeof(name), "%06zu", i);
    write_ppm((fs::path(dir) / "pairs" / (std::string(name) + "_c.ppm")).string(),
              ds.pairs[i].o_c);
    write_ppm((fs::path(dir) / "pairs" / (std::string(name) + "_g.ppm")).string(),
              ds.pairs[i].o_g);
  }
}

inline PairDataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream f(fs::path(dir) / "manifest.json");
  check(f.good(), "load_dataset: no manifest.json in " + dir);
  nlohmann::json m = nlohmann::json::parse(f);
  check(m.value("format", "") == "afford-pairs-v1",
        "load_dataset: unsupported manifest format in " + dir);
  PairDataset ds;
  ds.width = m["width"];
  ds.height = m["height"];
  ds.seed = m["seed"];
  ds.mix.push = m["mix"]["push"];
  ds.mix.pick = m["mix"]["pick"];
  ds.mix.stack = m["mix"]["stack"];
  ds.mix.reorient = m["mix"]["reorient"];
  ds.val_ids = m["val_ids"].get<std::vector<int>>();
  size_t count = m["count"];
  char name[64];
  for (size_t i = 0; i < count; ++i) {
    std::snprintf(name, sizeof(name), "%06zu", i);
    FramePair p;
    p.o_c = read_ppm((fs::path(dir) / "pairs" / (std::string(name) + "_c.ppm")).string());
    p.o_g = read_ppm((fs::path(dir) / "pairs" / (std::string(name) + "_g.ppm")).string());
    check(p.o_c.h == ds.height && p.o_c.w == ds.width && p.o_g.same_dims(p.o_c),
          "load_dataset: pair " + std::to_string(i) + " has unexpected dimensions");
    ds.pairs.push_back(std::move(p));
  }
  return ds;
}

// Ingest externally supplied `<id>_c.ppm` / `<id>_g.ppm` pairs, resizing and
// normalizing to the requested dimensions.
inline PairDataset ingest_pairs(const std::string& dir, int height, int width) {
  namespace fs = std::filesystem;
  check(fs::is_directory(dir), "ingest_pairs: not a directory: " + dir);
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string stem = entry.path().stem().string();
    if (stem.size() > 2 && stem.substr(stem.size() - 2) == "_c" &&
        entry.path().extension() == ".ppm")
      ids.push_back(stem.substr(0, stem.size() - 2));
  }
  std::sort(ids.begin(), ids.end());
  PairDataset ds;
  ds.width = width;
  ds.height = height;
  for (const auto& id : ids) {
    fs::path c_path = fs::path(dir) / (id + "_c.ppm");
    fs::path g_path = fs::path(dir) / (id + "_g.ppm");
    check(fs::exists(g_path),
          "ingest_pairs: missing partner for id " + id + " (expected " + g_path.string() + ")");
    FramePair p;
    try {
      p.o_c = resize_nearest(read_ppm(c_path.string()), height, width);
      p.o_g = resize_nearest(read_ppm(g_path.string()), height, width);
    } catch (const Error& e) {
      throw Error("ingest_pairs: pair id " + id + ": " + e.what());
    }
    ds.pairs.push_back(std::move(p));
  }
  return ds;
}

}  // namespace afford
