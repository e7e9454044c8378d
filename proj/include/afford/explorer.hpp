#pragma once

#include <deque>
#include <json.hpp>

#include "afford/affordance.hpp"
#include "afford/scripted.hpp"

namespace afford {

// Affordance-driven exploration with hindsight-relabeled behavior cloning:
// sample a goal for the fresh scene, roll the policy out for T steps with
// exploration noise, store the trajectory, and train on tuples whose goal is
// replaced by the trajectory's own final frame.

template <typename T>
struct PolicyConfig {
  int vocab = 128;    // codebook size K
  int seq_len = 64;   // latent tokens per image
  std::string input_mode = "normalized";  // normalized | embedding
  int embed_dim = 8;
  T lr = T(1e-3);

  static PolicyConfig from(const RunConfig& c, int vocab, int seq_len) {
    PolicyConfig p;
    p.vocab = vocab;
    p.seq_len = seq_len;
    p.input_mode = c.gets("explore.input_mode");
    p.embed_dim = c.geti("explore.embed_dim");
    p.lr = T(c.getf("explore.lr"));
    check(p.input_mode == "normalized" || p.input_mode == "embedding",
          "policy: input_mode must be normalized or embedding");
    return p;
  }

  int input_dim() const {
    return input_mode == "embedding" ? 2 * seq_len * embed_dim : 2 * seq_len;
  }
};

// Goal-conditioned policy: concatenated (z_t, z_g) latent codes through
// 2S -> 256 -> 64 -> 4 with rectified-linear activations; the first three
// outputs are displacement means, the fourth is the gripper logit.
template <typename T>
class Policy {
 public:
  PolicyConfig<T> cfg;
  ParamStore<T> ps;

  Policy(const PolicyConfig<T>& c, uint64_t seed) : cfg(c) {
    Rng rng(derive_seed(seed, 0x9014));
    if (cfg.input_mode == "embedding")
      emb_ = EmbeddingLayer<T>(ps, "emb", cfg.vocab, cfg.embed_dim, rng);
    l1_ = Dense<T>(ps, "l1", cfg.input_dim(), 256, rng);
    l2_ = Dense<T>(ps, "l2", 256, 64, rng);
    l3_ = Dense<T>(ps, "l3", 64, 4, rng);
  }

  // forward over a batch of (z_t, z_g) index pairs -> [B, 4]
  Var<T> forward(const std::vector<const TokenSequence*>& z_t,
                 const std::vector<const TokenSequence*>& z_g) const {
    int bsz = int(z_t.size());
    check(bsz > 0 && z_g.size() == z_t.size(), "policy: batch mismatch");
    if (cfg.input_mode == "embedding") {
      std::vector<int> ids;
      ids.reserve(size_t(bsz) * 2 * cfg.seq_len);
      for (int b = 0; b < bsz; ++b) {
        for (int t : *z_t[size_t(b)]) ids.push_back(t);
        for (int t : *z_g[size_t(b)]) ids.push_back(t);
      }
      Var<T> e = emb_(ids);  // [B*2S, embed_dim]
      Var<T> x = ag::reshape(e, {bsz, cfg.input_dim()});
      return l3_(ag::relu(l2_(ag::relu(l1_(x)))));
    }
    Tensor<T> x({bsz, cfg.input_dim()});
    for (int b = 0; b < bsz; ++b) {
      T* row = x.data() + int64_t(b) * cfg.input_dim();
      for (int i = 0; i < cfg.seq_len; ++i) row[i] = T((*z_t[size_t(b)])[size_t(i)]) / T(cfg.vocab);
      for (int i = 0; i < cfg.seq_len; ++i)
        row[cfg.seq_len + i] = T((*z_g[size_t(b)])[size_t(i)]) / T(cfg.vocab);
    }
    return l3_(ag::relu(l2_(ag::relu(l1_(Var<T>::constant(x))))));
  }

  // deterministic greedy action from the net outputs
  Action act(const TokenSequence& z_t, const TokenSequence& z_g) const {
    Var<T> out = forward({&z_t}, {&z_g});
    const T* o = out.val().data();
    double glogit = double(o[3]);
    return Action{double(o[0]), double(o[1]), double(o[2]), glogit >= 0 ? 1.0 : -1.0};
  }

 private:
  EmbeddingLayer<T> emb_;
  Dense<T> l1_, l2_, l3_;
};

// ---- trajectories and replay ----

struct Trajectory {
  int id = 0;
  std::vector<Image> obs;             // T+1 observations
  std::vector<TokenSequence> codes;   // latent code per observation
  std::vector<Action> actions;        // T actions
  Image sampled_goal;                 // what the sampler proposed (logs only)
  TokenSequence sampled_goal_code;

  size_t length() const { return actions.size(); }
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {
    check(capacity_ >= 1, "replay buffer: capacity must be >= 1");
  }

  void push(Trajectory t) {
    if (buf_.size() == capacity_) buf_.pop_front();  // oldest-first eviction
    buf_.push_back(std::move(t));
  }

  size_t size() const { return buf_.size(); }
  size_t capacity() const { return capacity_; }
  const Trajectory& at(size_t i) const { return buf_[i]; }

  size_t total_tuples() const {
    size_t n = 0;
    for (const auto& t : buf_) n += t.length();
    return n;
  }

  std::vector<int> ids() const {
    std::vector<int> out;
    for (const auto& t : buf_) out.push_back(t.id);
    return out;
  }

 private:
  size_t capacity_;
  std::deque<Trajectory> buf_;
};

// Hindsight tuple: the goal is the trajectory's own final frame.
struct RelabeledTuple {
  const Image* o_t;
  const Action* a_t;
  const Image* o_next;
  const Image* goal;               // == final frame, bit-identical
  const TokenSequence* z_t;
  const TokenSequence* z_goal;
};

inline std::vector<RelabeledTuple> relabel(const Trajectory& traj) {
  check(traj.obs.size() >= 2, "relabel: trajectory needs at least two observations");
  check(traj.obs.size() == traj.actions.size() + 1, "relabel: malformed trajectory");
  check(traj.codes.size() == traj.obs.size(), "relabel: missing latent codes");
  std::vector<RelabeledTuple> out;
  const Image* goal = &traj.obs.back();
  const TokenSequence* zg = &traj.codes.back();
  for (size_t t = 0; t < traj.actions.size(); ++t)
    out.push_back({&traj.obs[t], &traj.actions[t], &traj.obs[t + 1], goal, &traj.codes[t], zg});
  return out;
}

// ---- rollout ----

struct NoiseConfig {
  double sigma = 0.1;  // gaussian noise on xyz
  double grip_flip = 0.1;
};

template <typename T>
Trajectory rollout(const EnvConfig& env, const VqVae<T>& codec, const Policy<T>& policy,
                   const SceneState& start, const Image& goal_image, int horizon,
                   const NoiseConfig& noise, uint64_t seed, int traj_id = 0) {
  check(horizon >= 1, "rollout: horizon must be >= 1");
  Trajectory traj;
  traj.id = traj_id;
  traj.sampled_goal = goal_image;
  traj.sampled_goal_code = codec.encode_code(goal_image).idx;
  Rng rng(derive_seed(seed, 0x5011));
  SceneState s = start;
  Image obs = render(s, env);
  traj.obs.push_back(obs);
  traj.codes.push_back(codec.encode_code(obs).idx);
  for (int t = 0; t < horizon; ++t) {
    Action a = policy.act(traj.codes.back(), traj.sampled_goal_code);
    a.dx += noise.sigma * rng.normal();
    a.dy += noise.sigma * rng.normal();
    a.dz += noise.sigma * rng.normal();
    if (rng.uniform() < noise.grip_flip) a.grip = -a.grip;
    s = step(s, a, env);
    traj.actions.push_back(a);
    Image next = render(s, env);
    traj.obs.push_back(next);
    traj.codes.push_back(codec.encode_code(next).idx);
  }
  return traj;
}

// ---- behavior cloning ----

// loss = mean over batch of [ 0.5*||a_xyz - mu_xyz||^2 + BCE(grip>0, logit) ]
template <typename T>
Var<T> bc_loss(const Policy<T>& policy, const std::vector<RelabeledTuple>& batch) {
  check(!batch.empty(), "bc_loss: empty batch");
  int bsz = int(batch.size());
  std::vector<const TokenSequence*> zt, zg;
  Tensor<T> target_xyz({bsz, 3});
  Tensor<T> target_grip({bsz, 1});
  for (int b = 0; b < bsz; ++b) {
    zt.push_back(batch[size_t(b)].z_t);
    zg.push_back(batch[size_t(b)].z_goal);
    target_xyz.at2(b, 0) = T(batch[size_t(b)].a_t->dx);
    target_xyz.at2(b, 1) = T(batch[size_t(b)].a_t->dy);
    target_xyz.at2(b, 2) = T(batch[size_t(b)].a_t->dz);
    target_grip.at2(b, 0) = batch[size_t(b)].a_t->grip > 0 ? T(1) : T(0);
  }
  Var<T> out = policy.forward(zt, zg);
  Var<T> mu = ag::slice_cols(out, 0, 3);
  Var<T> glogit = ag::slice_cols(out, 3, 1);
  Var<T> xyz = ag::scale(ag::sse_loss(mu, target_xyz), T(0.5) / T(bsz));
  Var<T> bce = ag::bce_logits_loss(glogit, target_grip);
  return ag::add(xyz, bce);
}

template <typename T>
double bc_update(Policy<T>& policy, const std::vector<RelabeledTuple>& batch, Adam<T>& opt) {
  Var<T> loss = bc_loss(policy, batch);
  ag::backward(loss);
  opt.step(policy.ps);
  double v = double(loss.val()[0]);
  check(std::isfinite(v), "bc_update: non-finite loss");
  return v;
}

// ---- the exploration loop ----

struct ExploreConfig {
  int episodes = 300;
  int updates_per_episode = 50;
  int batch = 32;
  size_t buffer_capacity = 400;
  NoiseConfig noise;
  int eval_every = 0;

  static ExploreConfig from(const RunConfig& c) {
    ExploreConfig e;
    e.episodes = c.geti("explore.episodes");
    e.updates_per_episode = c.geti("explore.updates_per_episode");
    e.batch = c.geti("explore.batch");
    e.buffer_capacity = size_t(c.geti("explore.buffer_capacity"));
    e.noise.sigma = c.getf("explore.noise_sigma");
    e.noise.grip_flip = c.getf("explore.noise_grip");
    e.eval_every = c.geti("explore.eval_every");
    return e;
  }
};

struct ExploreLogRow {
  int episode = 0;
  double mean_bc_loss = 0;
  size_t buffer_size = 0;
  uint64_t goal_hash = 0;
};

template <typename T>
struct ExploreResult {
  std::vector<ExploreLogRow> log;
  int sampler_calls = 0;
  // post-training probe: max output difference when only the goal changes
  // (non-degenerate conditioning is logged, not asserted)
  double goal_sensitivity = 0;
};

// One line-delimited record per step: episode, t, state snapshot, action,
// render hash.
inline void append_trajectory_records(std::ostream& os, int episode, const EnvConfig& env,
                                      const SceneState& start,
                                      const std::vector<Action>& actions) {
  SceneState s = start;
  for (size_t t = 0; t <= actions.size(); ++t) {
    nlohmann::json rec;
    rec["episode"] = episode;
    rec["t"] = t;
    nlohmann::json js;
    js["gripper"] = {s.gx, s.gy, s.gz};
    js["open"] = s.gripper_open;
    js["held"] = s.held;
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : s.objects)
      objs.push_back({{"id", o.id},
                      {"shape", shape_name(o.shape)},
                      {"color", o.color},
                      {"pos", {o.x, o.y}},
                      {"stack", o.stack_height}});
    js["objects"] = objs;
    rec["state"] = js;
    if (t < actions.size()) {
      const Action& a = actions[t];
      rec["action"] = {a.dx, a.dy, a.dz, a.grip};
    }
    rec["render_hash"] = image_hash(render(s, env));
    os << rec.dump() << "\n";
    if (t < actions.size()) s = step(s, actions[t], env);
  }
}

template <typename T>
ExploreResult<T> explore_loop(const EnvConfig& env, GoalSampler& sampler, const VqVae<T>& codec,
                              Policy<T>& policy, const ExploreConfig& cfg, uint64_t seed,
                              std::ostream* traj_log = nullptr,
                              const std::function<void(int, const Policy<T>&)>& eval_hook = {}) {
  ExploreResult<T> result;
  ReplayBuffer buffer(cfg.buffer_capacity);
  Adam<T> opt(policy.cfg.lr);
  Rng update_rng(derive_seed(seed, 0xBC));
  for (int e = 0; e < cfg.episodes; ++e) {
    SceneState start = reset(env, derive_seed(seed, uint64_t(e) * 2 + 1));
    Image o1 = render(start, env);
    // goal sampled once at episode start, never re-sampled mid-episode
    Image goal = sampler.sample(o1, derive_seed(seed, uint64_t(e) * 2 + 2));
    ++result.sampler_calls;
    Trajectory traj = rollout(env, codec, policy, start, goal, env.horizon, cfg.noise,
                              derive_seed(seed, 0x8000 + uint64_t(e)), e);
    if (traj_log) append_trajectory_records(*traj_log, e, env, start, traj.actions);
    buffer.push(std::move(traj));

    // uniform tuple sampling across the whole buffer
    std::vector<std::pair<size_t, size_t>> index;
    for (size_t ti = 0; ti < buffer.size(); ++ti)
      for (size_t t = 0; t < buffer.at(ti).length(); ++t) index.push_back({ti, t});
    double loss_sum = 0;
    for (int u = 0; u < cfg.updates_per_episode; ++u) {
      std::vector<RelabeledTuple> batch;
      for (int b = 0; b < cfg.batch; ++b) {
        auto [ti, t] = index[size_t(update_rng.uniform_int(int(index.size())))];
        const Trajectory& tr = buffer.at(ti);
        const Image* goal_img = &tr.obs.back();
        batch.push_back({&tr.obs[t], &tr.actions[t], &tr.obs[t + 1], goal_img, &tr.codes[t],
                         &tr.codes.back()});
      }
      loss_sum += bc_update(policy, batch, opt);
    }
    result.log.push_back({e, loss_sum / std::max(1, cfg.updates_per_episode), buffer.size(),
                          image_hash(buffer.at(buffer.size() - 1).sampled_goal)});
    if (cfg.eval_every > 0 && (e + 1) % cfg.eval_every == 0 && eval_hook) eval_hook(e, policy);
  }
  if (buffer.size() >= 2) {
    const TokenSequence& z0 = buffer.at(0).codes.front();
    Action a = policy.act(z0, buffer.at(0).codes.back());
    Action b = policy.act(z0, buffer.at(1).codes.back());
    result.goal_sensitivity = std::max({std::abs(a.dx - b.dx), std::abs(a.dy - b.dy),
                                        std::abs(a.dz - b.dz)});
  }
  return result;
}

// ---- checkpointing ----

template <typename T>
Checkpoint policy_to_checkpoint(const Policy<T>& policy, uint64_t config_hash,
                                uint64_t vqvae_hash) {
  Checkpoint ck;
  ck.payload = "policy";
  ck.config_hash = config_hash;
  ck.dep_hash = vqvae_hash;
  ck.meta["vocab"] = std::to_string(policy.cfg.vocab);
  ck.meta["seq_len"] = std::to_string(policy.cfg.seq_len);
  ck.meta["input_mode"] = policy.cfg.input_mode;
  ck.meta["embed_dim"] = std::to_string(policy.cfg.embed_dim);
  for (const auto& [name, t] : policy.ps.state_dict()) {
    Tensor<float> ft(t.shape);
    for (int64_t i = 0; i < t.numel(); ++i) ft[i] = float(t[i]);
    ck.blobs["param." + name] = std::move(ft);
  }
  return ck;
}

template <typename T>
Policy<T> policy_from_checkpoint(const Checkpoint& ck) {
  check(ck.payload == "policy", "policy_from_checkpoint: wrong payload " + ck.payload);
  PolicyConfig<T> cfg;
  cfg.vocab = ck.meta_int("vocab");
  cfg.seq_len = ck.meta_int("seq_len");
  cfg.input_mode = ck.meta_at("input_mode");
  cfg.embed_dim = ck.meta_int("embed_dim");
  Policy<T> p(cfg, 0);
  std::map<std::string, Tensor<T>> sd;
  for (const auto& [name, t] : ck.blobs) {
    if (name.rfind("param.", 0) != 0) continue;
    Tensor<T> tt(t.shape);
    for (int64_t i = 0; i < t.numel(); ++i) tt[i] = T(t[i]);
    sd[name.substr(6)] = std::move(tt);
  }
  p.ps.load_state(sd);
  return p;
}

}  // namespace afford
