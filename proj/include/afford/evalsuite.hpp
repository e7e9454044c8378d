#pragma once

#include "afford/explorer.hpp"

namespace afford {

// Goal-reaching evaluation: a suite of push / pick-and-place / stack tasks
// with goal images, each certified reachable by a scripted oracle within the
// horizon before any policy is scored.

struct EvalTask {
  std::string type;  // pushing | pick_place | stacking
  SceneState initial;
  SceneState goal_state;
  Image goal_image;
  int move_object = 0;   // object the oracle manipulates
  int support_object = -1;  // stacking only
};

using TaskSuite = std::vector<EvalTask>;

// An actor is anything that maps (true state, observation, goal image) to an
// action. Learned policies ignore the true state; the scripted oracle and
// the null actor ignore the images.
class EvalActor {
 public:
  virtual ~EvalActor() = default;
  virtual void begin_episode(const EvalTask& task, const SceneState& initial) = 0;
  virtual Action act(const SceneState& true_state, const Image& obs) = 0;
  virtual std::string name() const = 0;
};

template <typename T>
class PolicyActor : public EvalActor {
 public:
  PolicyActor(const Policy<T>* policy, const VqVae<T>* codec) : policy_(policy), codec_(codec) {}
  void begin_episode(const EvalTask& task, const SceneState&) override {
    goal_code_ = codec_->encode_code(task.goal_image).idx;
  }
  Action act(const SceneState&, const Image& obs) override {
    return policy_->act(codec_->encode_code(obs).idx, goal_code_);
  }
  std::string name() const override { return "policy"; }

 private:
  const Policy<T>* policy_;
  const VqVae<T>* codec_;
  TokenSequence goal_code_;
};

class ZeroActor : public EvalActor {
 public:
  void begin_episode(const EvalTask&, const SceneState&) override {}
  Action act(const SceneState&, const Image&) override { return Action{0, 0, 0, -1}; }
  std::string name() const override { return "zero"; }
};

// Scripted upper bound: rebuilds the matching controller for each (possibly
// jittered) initial state from ground truth.
class OracleActor : public EvalActor {
 public:
  explicit OracleActor(const EnvConfig& env) : env_(env) {}

  void begin_episode(const EvalTask& task, const SceneState&) override {
    const SceneObject* goal_obj = task.goal_state.find(task.move_object);
    check(goal_obj != nullptr, "oracle: task object missing from goal state");
    if (task.type == "pushing")
      ctrl_ = std::make_unique<PushController>(env_, task.move_object, goal_obj->x, goal_obj->y,
                                               /*go_home=*/false);
    else if (task.type == "pick_place")
      ctrl_ = std::make_unique<PickPlaceController>(env_, task.move_object, goal_obj->x,
                                                    goal_obj->y, /*go_home=*/false);
    else
      ctrl_ = std::make_unique<PickPlaceController>(env_, task.move_object, task.support_object,
                                                    /*go_home=*/false);
  }

  Action act(const SceneState& true_state, const Image&) override {
    if (ctrl_->done(true_state)) return Action{0, 0, 0, ctrl_grip_hold_};
    return ctrl_->act(true_state);
  }
  std::string name() const override { return "oracle"; }

 private:
  EnvConfig env_;
  std::unique_ptr<ScriptedController> ctrl_;
  double ctrl_grip_hold_ = -1;
};

// ---- suite construction ----

namespace evaldetail {

inline SceneState with_home_gripper(SceneState s) {
  s.gx = EnvConfig::kHomeX;
  s.gy = EnvConfig::kHomeY;
  s.gz = EnvConfig::kHomeZ;
  s.gripper_open = true;
  s.held = -1;
  return s;
}

}  // namespace evaldetail

// Runs the oracle from `initial` toward `task.goal_state`; true iff success
// within the horizon. Used both to certify tasks and as the oracle baseline.
inline bool oracle_reaches(const EvalTask& task, const SceneState& initial, const EnvConfig& env) {
  OracleActor oracle(env);
  oracle.begin_episode(task, initial);
  SceneState s = initial;
  for (int t = 0; t < env.horizon; ++t) {
    s = step(s, oracle.act(s, Image()), env);
    if (success(s, task.goal_state, env.success_radius)) return true;
  }
  return success(s, task.goal_state, env.success_radius);
}

// Two tasks per type, six total; every task certified oracle-reachable at
// construction (unreachable candidates are skipped deterministically).
inline TaskSuite build_task_suite(const EnvConfig& env, uint64_t seed) {
  using namespace envdetail;
  TaskSuite suite;
  const char* types[3] = {"pushing", "pick_place", "stacking"};
  for (int ty = 0; ty < 3; ++ty) {
    int built = 0;
    for (uint64_t attempt = 0; attempt < 200 && built < 2; ++attempt) {
      uint64_t s = derive_seed(seed, uint64_t(ty) * 1000 + attempt);
      SceneState initial = reset(env, s);
      if (ty == 2 && initial.objects.size() < 2) continue;
      Rng rng(derive_seed(s, 0xE7a1));
      EvalTask task;
      task.type = types[ty];
      task.initial = initial;
      task.move_object = initial.objects[size_t(rng.uniform_int(int(initial.objects.size())))].id;
      SceneState goal = initial;
      SceneObject* mo = goal.find(task.move_object);
      if (ty == 0 || ty == 1) {
        double dist = ty == 0 ? rng.uniform(0.18, 0.28) : rng.uniform(0.3, 0.45);
        double ang = rng.uniform(0, 6.283185307179586);
        double tx = mo->x + std::cos(ang) * dist, ty2 = mo->y + std::sin(ang) * dist;
        if (tx < env.place_margin || tx > 1 - env.place_margin || ty2 < env.place_margin ||
            ty2 > 1 - env.place_margin)
          continue;
        bool clear = true;
        for (const auto& o : goal.objects)
          if (o.id != task.move_object &&
              dist2d(tx, ty2, o.x, o.y) < env.min_separation)
            clear = false;
        // pushing also needs a clear approach corridor behind the object
        if (ty == 0) {
          double ux = (tx - mo->x) / dist, uy = (ty2 - mo->y) / dist;
          double bx = mo->x - ux * (env.push_radius + 0.03);
          double by = mo->y - uy * (env.push_radius + 0.03);
          if (bx < 0.02 || bx > 0.98 || by < 0.02 || by > 0.98 ||
              !datadetail::segment_clear(bx, by, tx, ty2, initial, task.move_object,
                                         2 * env.obj_radius + 0.02))
            clear = false;
        }
        if (!clear) continue;
        mo->x = tx;
        mo->y = ty2;
      } else {
        int support = -1;
        for (const auto& o : initial.objects)
          if (o.id != task.move_object && (support == -1 || o.id < support)) support = o.id;
        if (support < 0) continue;
        task.support_object = support;
        const SceneObject* sup = goal.find(support);
        mo->x = sup->x;
        mo->y = sup->y;
        mo->stack_height = sup->stack_height + 1;
      }
      task.goal_state = evaldetail::with_home_gripper(goal);
      task.goal_image = render(task.goal_state, env);
      if (invariant_violation(task.goal_state, env)) continue;
      if (!oracle_reaches(task, task.initial, env)) continue;  // certification
      suite.push_back(std::move(task));
      ++built;
    }
    check(built == 2, std::string("task suite: could not certify two ") + types[ty] + " tasks");
  }
  return suite;
}

// ---- evaluation ----

struct TaskResult {
  std::string type;
  int successes = 0, trials = 0;
  double rate() const { return trials > 0 ? double(successes) / trials : 0.0; }
};

struct EvalReport {
  std::string actor;
  std::vector<TaskResult> tasks;
  uint64_t seed = 0;
  int trials = 0;
  double jitter = 0;

  double rate_for(const std::string& type) const {
    int s = 0, t = 0;
    for (const auto& r : tasks)
      if (r.type == type) {
        s += r.successes;
        t += r.trials;
      }
    return t > 0 ? double(s) / t : 0.0;
  }
  double overall() const {
    int s = 0, t = 0;
    for (const auto& r : tasks) {
      s += r.successes;
      t += r.trials;
    }
    return t > 0 ? double(s) / t : 0.0;
  }
};

// Jitter object positions inside bounds while keeping separation; bounded
// rejection per object, falling back to the unjittered position.
inline SceneState jitter_state(const SceneState& s, double radius, const EnvConfig& env,
                               Rng& rng) {
  using namespace envdetail;
  SceneState out = s;
  for (size_t i = 0; i < out.objects.size(); ++i) {
    auto& o = out.objects[i];
    if (o.stack_height != 0) continue;
    double ox = o.x, oy = o.y;
    for (int attempt = 0; attempt < 20; ++attempt) {
      double ang = rng.uniform(0, 6.283185307179586);
      double r = radius * std::sqrt(rng.uniform());
      double nx = clampd(ox + std::cos(ang) * r, env.place_margin, 1 - env.place_margin);
      double ny = clampd(oy + std::sin(ang) * r, env.place_margin, 1 - env.place_margin);
      bool ok = true;
      for (size_t j = 0; j < out.objects.size(); ++j)
        if (j != i && out.objects[j].stack_height == 0 &&
            dist2d(nx, ny, out.objects[j].x, out.objects[j].y) < env.min_separation)
          ok = false;
      if (ok) {
        // carry any stacked column along
        for (auto& p : out.objects)
          if (p.id != o.id && p.stack_height > 0 && dist2d(p.x, p.y, o.x, o.y) <= env.stack_tol) {
            p.x = nx;
            p.y = ny;
          }
        o.x = nx;
        o.y = ny;
        break;
      }
    }
  }
  return out;
}

inline EvalReport eval_policy(EvalActor& actor, const TaskSuite& suite, const EnvConfig& env,
                              int trials, double jitter, uint64_t seed) {
  EvalReport report;
  report.actor = actor.name();
  report.seed = seed;
  report.trials = trials;
  report.jitter = jitter;
  for (size_t ti = 0; ti < suite.size(); ++ti) {
    const EvalTask& task = suite[ti];
    TaskResult res;
    res.type = task.type;
    for (int trial = 0; trial < trials; ++trial) {
      Rng rng(derive_seed(seed, uint64_t(ti) * 1000 + uint64_t(trial)));
      SceneState s = jitter_state(task.initial, jitter, env, rng);
      actor.begin_episode(task, s);
      for (int t = 0; t < env.horizon; ++t) {
        Action a = actor.act(s, render(s, env));  // no exploration noise
        s = step(s, a, env);
      }
      res.successes += success(s, task.goal_state, env.success_radius) ? 1 : 0;
      ++res.trials;
    }
    report.tasks.push_back(res);
  }
  return report;
}

// ---- affordance metrics (automatic stand-in for perceptual study) ----

struct AffordanceMetrics {
  double plausibility = 0;  // fraction of samples the parser accepts
  double diversity = 0;     // mean pairwise normalized Hamming over codes
  int scenes = 0, samples_per_scene = 0;
};

template <typename T>
AffordanceMetrics eval_affordances(GoalSampler& sampler, const VqVae<T>& codec,
                                   const EnvConfig& env, int scenes, int samples_per_scene,
                                   uint64_t seed) {
  check(scenes >= 1 && samples_per_scene >= 2, "eval_affordances: need scenes and >= 2 samples");
  AffordanceMetrics m;
  m.scenes = scenes;
  m.samples_per_scene = samples_per_scene;
  int plausible_count = 0, total = 0;
  double diversity_sum = 0;
  for (int sc = 0; sc < scenes; ++sc) {
    SceneState state = reset(env, derive_seed(seed, 0xA000 + uint64_t(sc)));
    Image o_c = render(state, env);
    auto ref = object_multiset(state);
    std::vector<LatentCode> codes;
    for (int i = 0; i < samples_per_scene; ++i) {
      Image g = sampler.sample(o_c, derive_seed(seed, uint64_t(sc) * 10007 + uint64_t(i)));
      ParsedScene p = parse(g, env);
      plausible_count += plausible(p, env, &ref) ? 1 : 0;
      ++total;
      codes.push_back(codec.encode_code(g));
    }
    diversity_sum += code_diversity(codes);
  }
  m.plausibility = double(plausible_count) / total;
  m.diversity = diversity_sum / scenes;
  return m;
}

// ---- persistence ----

inline nlohmann::json state_to_json(const SceneState& s) {
  nlohmann::json j;
  j["gripper"] = {s.gx, s.gy, s.gz};
  j["open"] = s.gripper_open;
  j["held"] = s.held;
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : s.objects)
    objs.push_back({{"id", o.id},
                    {"shape", int(o.shape)},
                    {"color", o.color},
                    {"x", o.x},
                    {"y", o.y},
                    {"stack", o.stack_height}});
  j["objects"] = objs;
  return j;
}

inline SceneState state_from_json(const nlohmann::json& j) {
  SceneState s;
  s.gx = j["gripper"][0];
  s.gy = j["gripper"][1];
  s.gz = j["gripper"][2];
  s.gripper_open = j["open"];
  s.held = j["held"];
  for (const auto& o : j["objects"]) {
    SceneObject obj;
    obj.id = o["id"];
    obj.shape = ObjShape(int(o["shape"]));
    obj.color = o["color"];
    obj.x = o["x"];
    obj.y = o["y"];
    obj.stack_height = o["stack"];
    s.objects.push_back(obj);
  }
  return s;
}

inline void save_task_suite(const std::string& path, const TaskSuite& suite) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& t : suite) {
    nlohmann::json e;
    e["type"] = t.type;
    e["initial"] = state_to_json(t.initial);
    e["goal_state"] = state_to_json(t.goal_state);
    e["move_object"] = t.move_object;
    e["support_object"] = t.support_object;
    j.push_back(e);
  }
  std::ofstream f(path);
  check(f.good(), "save_task_suite: cannot write " + path);
  f << j.dump(2) << "\n";
}

inline TaskSuite load_task_suite(const std::string& path, const EnvConfig& env) {
  std::ifstream f(path);
  check(f.good(), "load_task_suite: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(f);
  TaskSuite suite;
  for (const auto& e : j) {
    EvalTask t;
    t.type = e["type"];
    t.initial = state_from_json(e["initial"]);
    t.goal_state = state_from_json(e["goal_state"]);
    t.move_object = e["move_object"];
    t.support_object = e["support_object"];
    t.goal_image = render(t.goal_state, env);
    suite.push_back(std::move(t));
  }
  return suite;
}

inline void save_eval_report(const std::string& path, const EvalReport& r) {
  nlohmann::json j;
  j["actor"] = r.actor;
  j["seed"] = r.seed;
  j["trials"] = r.trials;
  j["jitter"] = r.jitter;
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : r.tasks)
    tasks.push_back({{"type", t.type}, {"successes", t.successes}, {"trials", t.trials}});
  j["tasks"] = tasks;
  std::ofstream f(path);
  check(f.good(), "save_eval_report: cannot write " + path);
  f << j.dump(2) << "\n";
}

inline EvalReport load_eval_report(const std::string& path) {
  std::ifstream f(path);
  check(f.good(), "load_eval_report: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(f);
  EvalReport r;
  r.actor = j["actor"];
  r.seed = j["seed"];
  r.trials = j["trials"];
  r.jitter = j["jitter"];
  for (const auto& t : j["tasks"]) {
    TaskResult tr;
    tr.type = t["type"];
    tr.successes = t["successes"];
    tr.trials = t["trials"];
    r.tasks.push_back(tr);
  }
  return r;
}

}  // namespace afford
