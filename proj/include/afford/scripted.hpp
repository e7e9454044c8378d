#pragma once

#include <memory>

#include "afford/simenv.hpp"

namespace afford {

// Closed-loop scripted controllers over ground-truth state. They generate the
// competent-manipulation outcome frames for the dataset, certify that eval
// goals are reachable, and serve as the oracle upper-bound policy.

enum class BehaviorKind : int { Push = 0, PickPlace = 1, Stack = 2, Reorient = 3 };

inline const char* behavior_name(BehaviorKind b) {
  switch (b) {
    case BehaviorKind::Push: return "push";
    case BehaviorKind::PickPlace: return "pick_place";
    case BehaviorKind::Stack: return "stack";
    default: return "reorient";
  }
}

namespace scripted_detail {

// displacement toward a 3-D target, pre-scaled so the env per-axis clamp
// never distorts the direction
inline Action move_toward(double gx, double gy, double gz, double tx, double ty, double tz,
                          double cap, double grip) {
  double dx = tx - gx, dy = ty - gy, dz = tz - gz;
  double m = std::max({std::abs(dx), std::abs(dy), std::abs(dz)});
  double s = m > cap ? cap / m : 1.0;
  return Action{dx * s, dy * s, dz * s, grip};
}

inline bool near2d(double ax, double ay, double bx, double by, double tol) {
  return envdetail::dist2d(ax, ay, bx, by) <= tol;
}

}  // namespace scripted_detail

class ScriptedController {
 public:
  virtual ~ScriptedController() = default;
  virtual Action act(const SceneState& s) = 0;
  virtual bool done(const SceneState& s) const = 0;
};

// Approach behind the object at travel height, descend to table level and
// sweep the object to the target, then retreat home.
class PushController : public ScriptedController {
 public:
  PushController(const EnvConfig& cfg, int obj_id, double tx, double ty, bool go_home = true)
      : cfg_(cfg), obj_(obj_id), tx_(tx), ty_(ty), go_home_(go_home) {}

  Action act(const SceneState& s) override {
    using namespace scripted_detail;
    const SceneObject* o = s.find(obj_);
    check(o != nullptr, "push: object not in scene");
    const double travel_z = 0.30, push_z = 0.04, grip = -1;
    double reached_tol = 0.5 * cfg_.success_radius;
    switch (phase_) {
      case Phase::Approach: {
        double d = envdetail::dist2d(tx_, ty_, o->x, o->y);
        if (d <= reached_tol) {
          phase_ = Phase::Retreat;
          return act(s);
        }
        double ux = (tx_ - o->x) / d, uy = (ty_ - o->y) / d;
        double bx = o->x - ux * (cfg_.push_radius + 0.03);
        double by = o->y - uy * (cfg_.push_radius + 0.03);
        if (near2d(s.gx, s.gy, bx, by, 0.01)) {
          phase_ = Phase::Descend;
          return act(s);
        }
        return move_toward(s.gx, s.gy, s.gz, bx, by, travel_z, cfg_.step_cap, grip);
      }
      case Phase::Descend:
        if (s.gz <= push_z + 1e-9) {
          phase_ = Phase::Sweep;
          return act(s);
        }
        return move_toward(s.gx, s.gy, s.gz, s.gx, s.gy, push_z, cfg_.step_cap, grip);
      case Phase::Sweep: {
        double d = envdetail::dist2d(tx_, ty_, o->x, o->y);
        if (d <= reached_tol) {
          phase_ = Phase::Retreat;
          return act(s);
        }
        double ux = (tx_ - o->x) / d, uy = (ty_ - o->y) / d;
        double step = std::min(0.05, d);
        return Action{ux * step, uy * step, 0, grip};
      }
      case Phase::Retreat:
        if (s.gz >= travel_z - 1e-9 || !go_home_) {
          phase_ = go_home_ ? Phase::Home : Phase::Done;
          return go_home_ ? act(s) : Action{0, 0, 0, grip};
        }
        return move_toward(s.gx, s.gy, s.gz, s.gx, s.gy, travel_z, cfg_.step_cap, grip);
      case Phase::Home:
        if (near2d(s.gx, s.gy, EnvConfig::kHomeX, EnvConfig::kHomeY, 0.01)) {
          phase_ = Phase::Done;
          return Action{0, 0, 0, grip};
        }
        return move_toward(s.gx, s.gy, s.gz, EnvConfig::kHomeX, EnvConfig::kHomeY, travel_z,
                           cfg_.step_cap, grip);
      default:
        return Action{0, 0, 0, grip};
    }
  }

  bool done(const SceneState&) const override { return phase_ == Phase::Done; }

 private:
  enum class Phase { Approach, Descend, Sweep, Retreat, Home, Done };
  EnvConfig cfg_;
  int obj_;
  double tx_, ty_;
  bool go_home_;
  Phase phase_ = Phase::Approach;
};

// Pick an object, carry it, release at a target point (or onto a live support
// object for stacking), then retreat home.
class PickPlaceController : public ScriptedController {
 public:
  // target fixed point
  PickPlaceController(const EnvConfig& cfg, int obj_id, double tx, double ty, bool go_home = true)
      : cfg_(cfg), obj_(obj_id), tx_(tx), ty_(ty), support_(-1), go_home_(go_home) {}
  // target = live position of a support object (stacking)
  PickPlaceController(const EnvConfig& cfg, int obj_id, int support_id, bool go_home = true)
      : cfg_(cfg), obj_(obj_id), support_(support_id), go_home_(go_home) {}

  Action act(const SceneState& s) override {
    using namespace scripted_detail;
    const SceneObject* o = s.find(obj_);
    check(o != nullptr, "pick_place: object not in scene");
    const double travel_z = 0.30, grasp_z = 0.10, grip_open = -1, grip_close = 1;
    double tx = tx_, ty = ty_;
    if (support_ >= 0) {
      const SceneObject* sup = s.find(support_);
      check(sup != nullptr, "pick_place: support not in scene");
      tx = sup->x;
      ty = sup->y;
    }
    switch (phase_) {
      case Phase::ApproachXY:
        if (near2d(s.gx, s.gy, o->x, o->y, 0.01)) {
          phase_ = Phase::Descend;
          return act(s);
        }
        return move_toward(s.gx, s.gy, s.gz, o->x, o->y, travel_z, cfg_.step_cap, grip_open);
      case Phase::Descend:
        if (s.gz <= grasp_z + 1e-9) {
          phase_ = Phase::Grasp;
          return act(s);
        }
        return move_toward(s.gx, s.gy, s.gz, o->x, o->y, grasp_z, cfg_.step_cap, grip_open);
      case Phase::Grasp:
        phase_ = Phase::CheckGrasp;
        return Action{0, 0, 0, grip_close};
      case Phase::CheckGrasp:
        if (s.held != obj_) {
          phase_ = Phase::ApproachXY;  // missed; reopen and retry
          return Action{0, 0, 0, grip_open};
        }
        phase_ = Phase::Ascend;
        return act(s);
      case Phase::Ascend:
        if (s.gz >= travel_z - 1e-9) {
          phase_ = Phase::Carry;
          return act(s);
        }
        return move_toward(s.gx, s.gy, s.gz, s.gx, s.gy, travel_z, cfg_.step_cap, grip_close);
      case Phase::Carry:
        if (near2d(s.gx, s.gy, tx, ty, 0.01)) {
          phase_ = Phase::Release;
          return act(s);
        }
        return move_toward(s.gx, s.gy, s.gz, tx, ty, travel_z, cfg_.step_cap, grip_close);
      case Phase::Release:
        phase_ = Phase::CheckRelease;
        return Action{0, 0, 0, grip_open};
      case Phase::CheckRelease:
        if (s.held == obj_) {
          // drop spot was blocked; nudge the target and try again
          tx_ = envdetail::clampd(tx + 0.06, cfg_.place_margin, 1 - cfg_.place_margin);
          ty_ = envdetail::clampd(ty + 0.04, cfg_.place_margin, 1 - cfg_.place_margin);
          support_ = -1;
          phase_ = Phase::Carry;
          return act(s);
        }
        phase_ = go_home_ ? Phase::Home : Phase::Done;
        return go_home_ ? act(s) : Action{0, 0, 0, grip_open};
      case Phase::Home:
        if (near2d(s.gx, s.gy, EnvConfig::kHomeX, EnvConfig::kHomeY, 0.01)) {
          phase_ = Phase::Done;
          return Action{0, 0, 0, grip_open};
        }
        return move_toward(s.gx, s.gy, s.gz, EnvConfig::kHomeX, EnvConfig::kHomeY, travel_z,
                           cfg_.step_cap, grip_open);
      default:
        return Action{0, 0, 0, grip_open};
    }
  }

  bool done(const SceneState&) const override { return phase_ == Phase::Done; }

 private:
  enum class Phase { ApproachXY, Descend, Grasp, CheckGrasp, Ascend, Carry, Release, CheckRelease, Home, Done };
  EnvConfig cfg_;
  int obj_;
  double tx_ = 0, ty_ = 0;
  int support_;
  bool go_home_;
  Phase phase_ = Phase::ApproachXY;
};

// Runs a controller against the environment; returns the final state and the
// actions taken. Stops at max_steps even if the script is unfinished.
struct ScriptRun {
  SceneState final_state;
  std::vector<Action> actions;
  bool completed = false;
};

inline ScriptRun run_script(const SceneState& start, ScriptedController& ctrl,
                            const EnvConfig& cfg, int max_steps) {
  ScriptRun out;
  SceneState s = start;
  for (int t = 0; t < max_steps; ++t) {
    if (ctrl.done(s)) break;
    Action a = ctrl.act(s);
    out.actions.push_back(a);
    s = step(s, a, cfg);
  }
  out.completed = ctrl.done(s);
  out.final_state = s;
  return out;
}

}  // namespace afford
