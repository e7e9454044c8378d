#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "afford/evalsuite.hpp"

using namespace afford;

namespace {

VqVaeConfig<float> tiny_vq_cfg() {
  VqVaeConfig<float> c;
  c.image_size = 16;
  c.latent_size = 4;
  c.codebook_size = 16;
  c.codebook_dim = 8;
  c.base_channels = 8;
  return c;
}

PolicyConfig<float> tiny_policy_cfg() {
  PolicyConfig<float> c;
  c.vocab = 16;
  c.seq_len = 16;
  return c;
}

EnvConfig small_env() {
  EnvConfig e = EnvConfig::from(RunConfig::defaults());
  e.image_size = 16;
  return e;
}

Trajectory synthetic_trajectory(int id, int horizon, Rng& rng) {
  Trajectory t;
  t.id = id;
  for (int i = 0; i <= horizon; ++i) {
    Image im(4, 4);
    for (auto& v : im.px) v = float(rng.uniform());
    t.obs.push_back(im);
    t.codes.push_back(TokenSequence{rng.uniform_int(16), rng.uniform_int(16)});
  }
  for (int i = 0; i < horizon; ++i)
    t.actions.push_back(Action{rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                               rng.uniform(-0.1, 0.1), rng.uniform() > 0.5 ? 1.0 : -1.0});
  t.sampled_goal = t.obs[0];
  t.sampled_goal_code = t.codes[0];
  return t;
}

}  // namespace

TEST_CASE("relabel: tuple counts and goals bit-identical to the final frame") {
  Rng rng(1);
  Trajectory two = synthetic_trajectory(0, 1, rng);
  auto tuples = relabel(two);
  REQUIRE(tuples.size() == 1);
  CHECK(tuples[0].goal == &two.obs.back());

  // 1000 random trajectories: count = T-1 observations... = actions; every
  // goal points at the last frame bit-for-bit
  for (int i = 0; i < 1000; ++i) {
    int horizon = 1 + rng.uniform_int(8);
    Trajectory t = synthetic_trajectory(i, horizon, rng);
    auto tu = relabel(t);
    REQUIRE(tu.size() == size_t(horizon));  // T+1 observations -> T tuples
    for (const auto& x : tu) {
      CHECK(*x.goal == t.obs.back());
      CHECK(*x.z_goal == t.codes.back());
    }
  }

  Trajectory bad;
  bad.obs.push_back(Image(4, 4));
  bad.codes.push_back(TokenSequence{0});
  CHECK_THROWS_AS((void)relabel(bad), Error);
}

TEST_CASE("replay buffer: growth, capacity bound, oldest-first eviction") {
  ReplayBuffer buf(5);
  Rng rng(2);
  for (int i = 0; i < 12; ++i) {
    buf.push(synthetic_trajectory(i, 3, rng));
    CHECK(buf.size() == size_t(std::min(i + 1, 5)));
  }
  // ids 7..11 remain, oldest evicted first
  CHECK(buf.ids() == std::vector<int>{7, 8, 9, 10, 11});
  CHECK(buf.total_tuples() == 5 * 3);
}

TEST_CASE("bc loss: exact-match batch has zero xyz term and tiny bce") {
  Policy<float> p(tiny_policy_cfg(), 3);
  // zero all weights, then set the output bias to the target action
  for (auto& e : p.ps.entries)
    for (auto& v : e.v.mutable_val().v) v = 0;
  Action target{0.03, -0.02, 0.01, 1.0};
  for (auto& e : p.ps.entries)
    if (e.name == "l3.b") {
      e.v.mutable_val()[0] = float(target.dx);
      e.v.mutable_val()[1] = float(target.dy);
      e.v.mutable_val()[2] = float(target.dz);
      e.v.mutable_val()[3] = 20.f;  // saturated correct gripper logit
    }
  TokenSequence zt(16, 3), zg(16, 9);
  Image dummy(4, 4);
  std::vector<RelabeledTuple> batch;
  for (int i = 0; i < 4; ++i) batch.push_back({&dummy, &target, &dummy, &dummy, &zt, &zg});
  Var<float> loss = bc_loss(p, batch);
  CHECK(loss.val()[0] < 1e-3);
}

TEST_CASE("bc gradient matches finite differences on a one-tuple batch") {
  PolicyConfig<double> cfg;
  cfg.vocab = 16;
  cfg.seq_len = 16;
  Policy<double> p(cfg, 5);
  TokenSequence zt, zg;
  Rng rng(7);
  for (int i = 0; i < 16; ++i) {
    zt.push_back(rng.uniform_int(16));
    zg.push_back(rng.uniform_int(16));
  }
  Action a{0.05, -0.08, 0.02, -1.0};
  Image dummy(4, 4);
  std::vector<RelabeledTuple> batch = {{&dummy, &a, &dummy, &dummy, &zt, &zg}};

  Var<double> loss = bc_loss(p, batch);
  ag::backward(loss);
  std::map<std::string, Tensor<double>> grads;
  for (auto& e : p.ps.entries) grads[e.name] = e.v.grad();
  double h = 1e-6;
  for (auto& e : p.ps.entries) {
    auto& t = e.v.mutable_val();
    for (int64_t i = 0; i < t.numel(); i += std::max<int64_t>(1, t.numel() / 4)) {
      double x0 = t[i];
      t[i] = x0 + h;
      double fp = bc_loss(p, batch).val()[0];
      t[i] = x0 - h;
      double fm = bc_loss(p, batch).val()[0];
      t[i] = x0;
      double fd = (fp - fm) / (2 * h);
      double an = grads[e.name][i];
      double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
      if (std::abs(fd) > 1e-12 || std::abs(an) > 1e-12) CHECK(rel < 1e-3);
    }
  }
}

TEST_CASE("200 updates on a fixed batch cut the loss by at least 90 percent") {
  Policy<float> p(tiny_policy_cfg(), 9);
  Rng rng(11);
  std::vector<TokenSequence> zts, zgs;
  std::vector<Action> acts;
  for (int i = 0; i < 32; ++i) {
    TokenSequence zt, zg;
    for (int t = 0; t < 16; ++t) {
      zt.push_back(rng.uniform_int(16));
      zg.push_back(rng.uniform_int(16));
    }
    zts.push_back(zt);
    zgs.push_back(zg);
    acts.push_back(Action{rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                          rng.uniform() > 0.5 ? 1.0 : -1.0});
  }
  Image dummy(4, 4);
  std::vector<RelabeledTuple> batch;
  for (int i = 0; i < 32; ++i)
    batch.push_back({&dummy, &acts[size_t(i)], &dummy, &dummy, &zts[size_t(i)], &zgs[size_t(i)]});
  Adam<float> opt(p.cfg.lr);
  double first = bc_update(p, batch, opt);
  double last = first;
  for (int u = 0; u < 199; ++u) last = bc_update(p, batch, opt);
  CHECK(last <= 0.1 * first);
}

TEST_CASE("fixed batch loss is independent of buffer internal order") {
  Policy<float> p(tiny_policy_cfg(), 13);
  Rng rng(17);
  Trajectory t1 = synthetic_trajectory(1, 4, rng);
  Trajectory t2 = synthetic_trajectory(2, 4, rng);
  // codes must match the policy's seq_len
  auto fix = [&](Trajectory& t) {
    for (auto& c : t.codes) {
      c.assign(16, 0);
      for (auto& v : c) v = rng.uniform_int(16);
    }
  };
  fix(t1);
  fix(t2);
  ReplayBuffer a(10), b(10);
  a.push(t1);
  a.push(t2);
  b.push(t2);
  b.push(t1);
  // same fixed batch drawn from both buffers (same tuples, same order)
  auto tuples_a1 = relabel(a.at(0)), tuples_a2 = relabel(a.at(1));
  auto tuples_b2 = relabel(b.at(1)), tuples_b1 = relabel(b.at(0));
  std::vector<RelabeledTuple> batch_a = {tuples_a1[0], tuples_a2[2], tuples_a1[3]};
  std::vector<RelabeledTuple> batch_b = {tuples_b2[0], tuples_b1[2], tuples_b2[3]};
  // buffer a stored t1 first; buffer b stored it second -> same tuples
  CHECK(bc_loss(p, batch_a).val()[0] == bc_loss(p, batch_b).val()[0]);
}

TEST_CASE("rollout: horizon-1 trajectory shape and determinism") {
  EnvConfig env = small_env();
  VqVae<float> codec(tiny_vq_cfg(), 1);
  Policy<float> p(tiny_policy_cfg(), 2);
  SceneState start = reset(env, 3);
  Image goal = render(reset(env, 4), env);
  NoiseConfig no_noise{0.0, 0.0};

  Trajectory t1 = rollout(env, codec, p, start, goal, 1, no_noise, 7);
  CHECK(t1.obs.size() == 2);
  CHECK(t1.actions.size() == 1);
  CHECK(t1.codes.size() == 2);

  NoiseConfig noise{0.05, 0.1};
  Trajectory a = rollout(env, codec, p, start, goal, 5, noise, 42);
  Trajectory b = rollout(env, codec, p, start, goal, 5, noise, 42);
  REQUIRE(a.obs.size() == b.obs.size());
  for (size_t i = 0; i < a.obs.size(); ++i) CHECK(a.obs[i] == b.obs[i]);
}

TEST_CASE("explore_loop: zero budget leaves parameters untouched; one sampler call per episode") {
  EnvConfig env = small_env();
  env.horizon = 3;
  VqVae<float> codec(tiny_vq_cfg(), 1);
  Policy<float> p(tiny_policy_cfg(), 2);
  RandomSceneSampler sampler(env);
  ExploreConfig cfg;
  cfg.episodes = 0;
  cfg.updates_per_episode = 2;
  cfg.batch = 4;
  cfg.buffer_capacity = 8;

  uint64_t before = p.ps.values_hash();
  ExploreResult<float> r0 = explore_loop(env, sampler, codec, p, cfg, 5);
  CHECK(p.ps.values_hash() == before);
  CHECK(r0.sampler_calls == 0);

  cfg.episodes = 6;
  ExploreResult<float> r = explore_loop(env, sampler, codec, p, cfg, 5);
  CHECK(r.sampler_calls == 6);  // goal sampled once per episode, never mid-episode
  CHECK(r.log.size() == 6);
  CHECK(p.ps.values_hash() != before);
  for (size_t e = 0; e < r.log.size(); ++e)
    CHECK(r.log[e].buffer_size == std::min<size_t>(e + 1, cfg.buffer_capacity));
}

TEST_CASE("trajectory log records carry episode, t, state, action, render hash") {
  EnvConfig env = small_env();
  env.horizon = 2;
  VqVae<float> codec(tiny_vq_cfg(), 1);
  Policy<float> p(tiny_policy_cfg(), 2);
  RandomSceneSampler sampler(env);
  ExploreConfig cfg;
  cfg.episodes = 1;
  cfg.updates_per_episode = 1;
  cfg.batch = 2;
  cfg.buffer_capacity = 4;
  std::ostringstream log;
  explore_loop(env, sampler, codec, p, cfg, 3, &log);
  std::istringstream in(log.str());
  std::string line;
  int records = 0;
  while (std::getline(in, line)) {
    nlohmann::json rec = nlohmann::json::parse(line);
    CHECK(rec.contains("episode"));
    CHECK(rec.contains("t"));
    CHECK(rec["state"].contains("gripper"));
    CHECK(rec["state"].contains("objects"));
    CHECK(rec.contains("render_hash"));
    if (int(rec["t"]) < env.horizon) CHECK(rec["action"].size() == 4);
    ++records;
  }
  CHECK(records == env.horizon + 1);  // one record per observation
}

TEST_CASE("policy checkpoint round-trips actions exactly") {
  namespace fs = std::filesystem;
  Policy<float> p(tiny_policy_cfg(), 21);
  TokenSequence zt(16, 2), zg(16, 7);
  Action a1 = p.act(zt, zg);
  Checkpoint ck = policy_to_checkpoint(p, 0x1, 0x2);
  fs::path path = fs::temp_directory_path() / "afford_policy.ckpt";
  save_checkpoint(path.string(), ck);
  Policy<float> p2 = policy_from_checkpoint<float>(load_checkpoint_as(path.string(), "policy"));
  Action a2 = p2.act(zt, zg);
  CHECK(a1.dx == a2.dx);
  CHECK(a1.dy == a2.dy);
  CHECK(a1.dz == a2.dz);
  CHECK(a1.grip == a2.grip);
}

TEST_CASE("embedding input mode trains and differs from normalized mode") {
  PolicyConfig<float> cfg = tiny_policy_cfg();
  cfg.input_mode = "embedding";
  cfg.embed_dim = 4;
  Policy<float> p(cfg, 23);
  CHECK(p.cfg.input_dim() == 2 * 16 * 4);
  TokenSequence zt(16, 1), zg(16, 2);
  Action a = p.act(zt, zg);
  CHECK(std::isfinite(a.dx));
  // one gradient step moves the embedding table
  Image dummy(4, 4);
  Action tgt{0.1, 0.0, 0.0, 1.0};
  std::vector<RelabeledTuple> batch = {{&dummy, &tgt, &dummy, &dummy, &zt, &zg}};
  Adam<float> opt(1e-3f);
  uint64_t before = p.ps.values_hash();
  bc_update(p, batch, opt);
  CHECK(p.ps.values_hash() != before);
}
