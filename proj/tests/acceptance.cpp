// Acceptance suite: one pass/fail line per criterion, each pinned to its
// stated tolerance. Criteria 8 and 9 evaluate desk-scale trained artifacts
// produced by the --fixture stage (reused across runs when already present
// and hash-consistent); everything else is self-contained.
//
// Usage:
//   acceptance --only <n>[,<n>...]          run selected criteria
//   acceptance --fixture                    build/refresh the desk fixture
//   acceptance --fixture-dir <dir>          fixture location (default ./acceptance_fixture)
//   acceptance --cli <path>                 afford binary (criterion 10)

#include <cstdio>
#include <cstdlib>
#include <set>

#include "afford/report.hpp"

using namespace afford;
namespace fs = std::filesystem;

namespace {

std::string g_fixture_dir = "acceptance_fixture";
std::string g_cli_path;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += "FAILED: " + what;
    }
  }
  void note(const std::string& s) {
    if (!detail.empty()) detail += "; ";
    detail += s;
  }
};

double median3(double a, double b, double c) {
  double lo = std::min({a, b, c}), hi = std::max({a, b, c});
  return a + b + c - lo - hi;
}

// ---------------------------------------------------------------- fixture

struct FixturePaths {
  fs::path root, data, vqvae, prior;
  fs::path policy(const std::string& sampler, int seed) const {
    return root / ("explore_" + sampler + "_" + std::to_string(seed)) / "policy.ckpt";
  }
};

FixturePaths fixture_paths() {
  FixturePaths p;
  p.root = g_fixture_dir;
  p.data = p.root / "data";
  p.vqvae = p.root / "vqvae.ckpt";
  p.prior = p.root / "prior.ckpt";
  return p;
}

constexpr uint64_t kFixtureDataSeed = 1000;
constexpr uint64_t kFixtureModelSeed = 7;
constexpr int kFixtureExploreSeeds[3] = {1, 2, 3};

bool checkpoint_ok(const fs::path& path, const std::string& payload) {
  if (!fs::exists(path)) return false;
  try {
    (void)load_checkpoint_as(path.string(), payload);
    return true;
  } catch (...) {
    return false;
  }
}

// Build (or reuse) the desk-scale fixture: dataset, codec, prior, and six
// exploration runs (affordance and random samplers, three seeds each).
int build_fixture() {
  RunConfig rc = RunConfig::defaults();
  EnvConfig env = EnvConfig::from(rc);
  FixturePaths fx = fixture_paths();
  fs::create_directories(fx.root);
  rc.save((fx.root / "config.ini").string());

  // dataset
  bool have_data = false;
  if (fs::exists(fx.data / "manifest.json")) {
    try {
      PairDataset probe = load_dataset(fx.data.string());
      have_data = probe.seed == kFixtureDataSeed && int(probe.size()) == rc.geti("data.pairs");
    } catch (...) {
    }
  }
  if (!have_data) {
    std::printf("[fixture] generating %d desk pairs...\n", rc.geti("data.pairs"));
    std::fflush(stdout);
    double t0 = now_sec();
    PairDataset ds = generate_pairs(env, rc.geti("data.pairs"), BehaviorMix::from(rc),
                                    kFixtureDataSeed, rc.geti("data.max_script_steps"));
    assign_split(ds, rc.getf("data.val_fraction"), derive_seed(kFixtureDataSeed, 0x59117));
    save_dataset(fx.data.string(), ds);
    std::printf("[fixture] dataset done in %.0f s\n", now_sec() - t0);
  } else {
    std::printf("[fixture] reusing dataset at %s\n", fx.data.string().c_str());
  }
  PairDataset ds = load_dataset(fx.data.string());

  // codec
  uint64_t vq_cfg_hash = rc.section_hash({"env", "vqvae"});
  bool have_vq = false;
  if (checkpoint_ok(fx.vqvae, "vqvae"))
    have_vq = load_checkpoint(fx.vqvae.string()).config_hash == vq_cfg_hash;
  if (!have_vq) {
    VqVaeConfig<float> cfg = VqVaeConfig<float>::from(rc);
    std::printf("[fixture] training vqvae (%d steps)...\n", cfg.steps);
    std::fflush(stdout);
    VqVae<float> model(cfg, derive_seed(kFixtureModelSeed, 0x111));
    double t0 = now_sec();
    VqVaeTrainResult<float> r = train_vqvae(model, ds, derive_seed(kFixtureModelSeed, 0x112));
    Checkpoint ck = vqvae_to_checkpoint(model, vq_cfg_hash);
    save_checkpoint(fx.vqvae.string(), ck);
    write_train_log((fx.root / "vqvae.log.tsv").string(), "step\ttotal\trecon\tcommit\tusage",
                    r.log);
    std::printf("[fixture] vqvae done in %.0f s (val mse %.5f -> %.5f)\n", now_sec() - t0,
                r.initial_val_mse, r.final_val_mse);
  } else {
    std::printf("[fixture] reusing vqvae checkpoint\n");
  }
  Checkpoint vck = load_checkpoint_as(fx.vqvae.string(), "vqvae");
  VqVae<float> codec = vqvae_from_checkpoint<float>(vck);

  // prior
  uint64_t pr_cfg_hash = rc.section_hash({"env", "vqvae", "prior"});
  bool have_prior = false;
  if (checkpoint_ok(fx.prior, "prior")) {
    Checkpoint probe = load_checkpoint(fx.prior.string());
    have_prior = probe.config_hash == pr_cfg_hash && probe.dep_hash == vck.file_hash;
  }
  if (!have_prior) {
    PriorConfig<float> cfg =
        PriorConfig<float>::from(rc, codec.cfg.codebook_size, codec.cfg.seq_len());
    std::printf("[fixture] encoding pairs + training prior (%d steps)...\n", cfg.steps);
    std::fflush(stdout);
    double t0 = now_sec();
    EncodedDataset enc = encode_dataset(codec, ds, vck.file_hash);
    Prior<float> model(cfg, derive_seed(kFixtureModelSeed, 0x221));
    PriorTrainResult<float> r = train_prior(model, enc, derive_seed(kFixtureModelSeed, 0x222));
    Checkpoint ck = prior_to_checkpoint(model, pr_cfg_hash, vck.file_hash);
    save_checkpoint(fx.prior.string(), ck);
    write_train_log((fx.root / "prior.log.tsv").string(), "step\tnll_per_token\t-\t-\t-",
                    r.log);
    std::printf("[fixture] prior done in %.0f s (val nll/token %.4f, uniform %.4f)\n",
                now_sec() - t0, r.final_val_nll_per_token, std::log(double(cfg.vocab)));
  } else {
    std::printf("[fixture] reusing prior checkpoint\n");
  }

  // exploration runs
  AffordanceModel<float> aff =
      AffordanceModel<float>::load(fx.vqvae.string(), fx.prior.string(), rc);
  for (const char* sampler_name : {"affordance", "random"}) {
    for (int seed : kFixtureExploreSeeds) {
      fs::path out = fx.policy(sampler_name, seed);
      if (checkpoint_ok(out, "policy")) {
        std::printf("[fixture] reusing %s\n", out.string().c_str());
        continue;
      }
      fs::create_directories(out.parent_path());
      std::unique_ptr<GoalSampler> sampler;
      if (std::string(sampler_name) == "affordance")
        sampler = std::make_unique<AffordanceSampler<float>>(&aff);
      else
        sampler = std::make_unique<RandomSceneSampler>(env);
      PolicyConfig<float> pcfg =
          PolicyConfig<float>::from(rc, codec.cfg.codebook_size, codec.cfg.seq_len());
      Policy<float> policy(pcfg, derive_seed(uint64_t(seed), 0x441));
      ExploreConfig ecfg = ExploreConfig::from(rc);
      std::printf("[fixture] exploring: sampler=%s seed=%d (%d episodes)...\n", sampler_name,
                  seed, ecfg.episodes);
      std::fflush(stdout);
      double t0 = now_sec();
      std::ofstream traj_log(out.parent_path() / "trajectories.jsonl");
      ExploreResult<float> r = explore_loop(env, *sampler, codec, policy, ecfg,
                                            derive_seed(uint64_t(seed), 0x442), &traj_log);
      Checkpoint pck =
          policy_to_checkpoint(policy, rc.section_hash({"env", "explore"}), vck.file_hash);
      save_checkpoint(out.string(), pck);
      std::ofstream mf(out.parent_path() / "metrics.tsv");
      mf << "episode\tbc_loss\tbuffer\tgoal_hash\n";
      for (const auto& row : r.log)
        mf << row.episode << "\t" << row.mean_bc_loss << "\t" << row.buffer_size << "\t"
           << row.goal_hash << "\n";
      std::printf("[fixture] done in %.0f s\n", now_sec() - t0);
    }
  }
  std::printf("[fixture] complete at %s\n", fx.root.string().c_str());
  return 0;
}

// ------------------------------------------------------------ criteria 1-7

Outcome criterion1() {
  Outcome out;
  double t0 = now_sec();
  Rng rng(11);
  int64_t mismatches = 0, cells_total = 0;
  for (int k : {8, 128, 1024}) {
    Codebook<float> cb(k, 64, rng);
    Tensor<float> cells = Tensor<float>::randn({10000, 64}, rng, 1.5f);
    auto [idx, q] = quantize_cells(cells, cb);
    for (int i = 0; i < 10000; ++i) {
      // independently coded exhaustive scan
      int best_k = 0;
      float best = std::numeric_limits<float>::max();
      for (int e = 0; e < k; ++e) {
        float d = 0;
        for (int c = 0; c < 64; ++c) {
          float diff = cells.at2(i, c) - cb.vectors.at2(e, c);
          d += diff * diff;
        }
        if (d < best) {
          best = d;
          best_k = e;
        }
      }
      if (idx[size_t(i)] != best_k) ++mismatches;
      ++cells_total;
    }
  }
  // exact ties resolve to the lowest index
  Codebook<float> tie(4, 3, rng);
  for (int c = 0; c < 3; ++c) tie.vectors.at2(3, c) = tie.vectors.at2(1, c);
  Tensor<float> cell({1, 3});
  for (int c = 0; c < 3; ++c) cell[c] = tie.vectors.at2(1, c);
  auto [ti, tq] = quantize_cells(cell, tie);
  out.require(ti[0] == 1, "tie did not break to the lowest index");
  double dt = now_sec() - t0;
  out.require(mismatches == 0, std::to_string(mismatches) + " oracle mismatches");
  out.require(dt < 60.0, "runtime " + std::to_string(dt) + " s exceeds 1 min");
  out.note(std::to_string(cells_total) + " cells over K in {8,128,1024}, " +
           std::to_string(int(dt * 1000)) + " ms, 0 mismatches");
  return out;
}

Outcome criterion2() {
  Outcome out;
  // worked example: N=1, m=e=(1,0), gamma=0.5, one assignment z=(3,0)
  Codebook<double> cb;
  cb.vectors = Tensor<double>({1, 2});
  cb.ema_counts = Tensor<double>({1});
  cb.ema_sums = Tensor<double>({1, 2});
  cb.vectors.at2(0, 0) = 1;
  cb.ema_sums.at2(0, 0) = 1;
  cb.ema_counts[0] = 1;
  Tensor<double> z({1, 2});
  z.at2(0, 0) = 3;
  ema_update(cb, z, {0}, 0.5, 1e-5);
  out.require(cb.ema_counts[0] == 1.0, "N' != 1.0");
  out.require(cb.ema_sums.at2(0, 0) == 2.0, "m' != (2,0)");
  out.require(cb.vectors.at2(0, 0) == 2.0, "e' != (2,0)");

  // gamma = 0 batch-mean limit: e_i = z exactly
  Rng rng(5);
  Codebook<double> cb2(4, 3, rng);
  Tensor<double> z2 = Tensor<double>::randn({1, 3}, rng, 1.0);
  ema_update(cb2, z2, {2}, 0.0, 1e-5);
  for (int c = 0; c < 3; ++c)
    out.require(cb2.vectors.at2(2, c) == z2[c], "gamma=0 limit not exact");

  // stationary assignments converge within 1e-4 after 500 iterations, gamma=0.9
  Codebook<double> cb3(3, 2, rng);
  Tensor<double> batch({2, 2});
  batch.at2(0, 0) = 0.2;
  batch.at2(0, 1) = 1.0;
  batch.at2(1, 0) = 0.8;
  batch.at2(1, 1) = 3.0;
  for (int it = 0; it < 500; ++it) ema_update(cb3, batch, {1, 1}, 0.9, 1e-5);
  double err = std::max(std::abs(cb3.vectors.at2(1, 0) - 0.5),
                        std::abs(cb3.vectors.at2(1, 1) - 2.0));
  out.require(err < 1e-4, "stationary convergence error " + std::to_string(err));
  out.note("hand case exact, gamma=0 exact, stationary err " + std::to_string(err));
  return out;
}

Outcome criterion3() {
  Outcome out;
  // exact straight-through copy on random inputs (float, beta = 0)
  VqVaeConfig<float> fc;
  fc.image_size = 16;
  fc.latent_size = 4;
  fc.codebook_size = 16;
  fc.codebook_dim = 8;
  fc.base_channels = 8;
  VqVae<float> fm(fc, 3);
  Rng rng(7);
  int copy_checked = 0;
  for (int trial = 0; trial < 5; ++trial) {
    Image im(16, 16);
    for (auto& v : im.px) v = float(rng.uniform());
    VqVaeStep<float> s = vqvae_forward(fm, images_to_batch<float>({&im}), 0.f);
    ag::backward(s.loss);
    for (int64_t i = 0; i < s.z_e.grad().numel(); ++i) {
      if (s.z_e.grad()[i] != s.dec_in.node()->grad[i]) out.require(false, "copy differs");
      ++copy_checked;
    }
  }

  // finite differences on a tiny double instance, continuous path (the
  // quantized path's encoder gradient is the surrogate copy checked above)
  VqVaeConfig<double> dc;
  dc.image_size = 4;
  dc.latent_size = 2;
  dc.codebook_size = 4;
  dc.codebook_dim = 3;
  dc.base_channels = 2;
  VqVae<double> dm(dc, 5);
  Image tiny(4, 4);
  for (auto& v : tiny.px) v = float(rng.uniform());
  Tensor<double> x = images_to_batch<double>({&tiny});
  Tensor<double> commit_target = Tensor<double>::randn({1, 3, 2, 2}, rng, 0.5);
  auto eval = [&]() {
    Var<double> z_e = dm.encode_batch(Var<double>::constant(x));
    Var<double> recon = dm.decode_batch(z_e);
    return ag::add(ag::mse_loss(recon, x), ag::mse_loss(z_e, commit_target));
  };
  Var<double> loss = eval();
  ag::backward(loss);
  double worst = 0;
  int fd_checked = 0;
  for (auto& e : dm.ps.entries) {
    Tensor<double> g = e.v.grad();
    auto& t = e.v.mutable_val();
    for (int64_t i = 0; i < t.numel(); i += std::max<int64_t>(1, t.numel() / 4)) {
      double x0 = t[i], h = 1e-6;
      t[i] = x0 + h;
      double fp = eval().val()[0];
      t[i] = x0 - h;
      double fm_ = eval().val()[0];
      t[i] = x0;
      double fd = (fp - fm_) / (2 * h);
      double an = g[i];
      if (std::abs(fd) < 1e-10 && std::abs(an) < 1e-10) continue;
      worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8}));
      ++fd_checked;
    }
  }
  out.require(worst < 1e-3, "finite-difference relative error " + std::to_string(worst));
  out.note(std::to_string(copy_checked) + " copied gradients exact, fd rel err " +
           std::to_string(worst) + " over " + std::to_string(fd_checked) + " params");
  return out;
}

Outcome criterion4() {
  Outcome out;
  int violations = 0, probes = 0;
  for (const char* layout : {"encdec", "prefix"}) {
    PriorConfig<float> cfg;
    cfg.vocab = 12;
    cfg.seq_len = 10;
    cfg.heads = 2;
    cfg.layers = 2;
    cfg.enc_layers = 1;
    cfg.embed = 24;
    cfg.ff = 48;
    cfg.layout = layout;
    Prior<float> m(cfg, 3);
    Rng rng(9);
    for (int probe = 0; probe < 100; ++probe) {
      TokenSequence zc, zg;
      for (int i = 0; i < 10; ++i) {
        zc.push_back(rng.uniform_int(12));
        zg.push_back(rng.uniform_int(12));
      }
      int j = rng.uniform_int(9);
      TokenSequence zg2 = zg;
      zg2[size_t(j)] = (zg2[size_t(j)] + 1 + rng.uniform_int(11)) % 12;
      Tensor<float> a = m.logits(zc, zg);
      Tensor<float> b = m.logits(zc, zg2);
      for (int r = 0; r <= j; ++r)
        for (int v = 0; v < 12; ++v)
          if (std::abs(double(a.at2(r, v)) - double(b.at2(r, v))) > 1e-6) ++violations;
      ++probes;
    }
  }
  out.require(violations == 0, std::to_string(violations) + " causality violations");

  // teacher-forced nll equals the sum of per-step nll within 1e-5
  PriorConfig<float> cfg;
  cfg.vocab = 12;
  cfg.seq_len = 10;
  cfg.heads = 2;
  cfg.layers = 2;
  cfg.enc_layers = 1;
  cfg.embed = 24;
  cfg.ff = 48;
  Prior<float> m(cfg, 4);
  Rng rng(13);
  double worst_seq = 0;
  for (int trial = 0; trial < 5; ++trial) {
    TokenSequence zc, zg;
    for (int i = 0; i < 10; ++i) {
      zc.push_back(rng.uniform_int(12));
      zg.push_back(rng.uniform_int(12));
    }
    double teacher = m.nll(zc, zg);
    double sequential = 0;
    for (int t = 0; t < 10; ++t) {
      TokenSequence prefix(zg.begin(), zg.begin() + t);
      Tensor<float> lg = m.logits(zc, prefix);
      double mx = lg.at2(t, 0);
      for (int v = 1; v < 12; ++v) mx = std::max(mx, double(lg.at2(t, v)));
      double sum = 0;
      for (int v = 0; v < 12; ++v) sum += std::exp(double(lg.at2(t, v)) - mx);
      sequential += -(double(lg.at2(t, zg[size_t(t)])) - mx - std::log(sum));
    }
    worst_seq = std::max(worst_seq, std::abs(teacher - sequential));
  }
  out.require(worst_seq < 1e-5, "teacher vs sequential diff " + std::to_string(worst_seq));

  // uniform-logit model: nll = S ln K within 1e-6 (double instantiation)
  PriorConfig<double> dcfg;
  dcfg.vocab = 12;
  dcfg.seq_len = 10;
  dcfg.heads = 2;
  dcfg.layers = 2;
  dcfg.enc_layers = 1;
  dcfg.embed = 24;
  dcfg.ff = 48;
  Prior<double> dm(dcfg, 5);
  for (auto& e : dm.ps.entries)
    if (e.name == "out.w" || e.name == "out.b")
      for (auto& v : e.v.mutable_val().v) v = 0;
  Rng drng(17);
  TokenSequence zc, zg;
  for (int i = 0; i < 10; ++i) {
    zc.push_back(drng.uniform_int(12));
    zg.push_back(drng.uniform_int(12));
  }
  double uniform_err = std::abs(dm.nll(zc, zg) - 10 * std::log(12.0));
  out.require(uniform_err < 1e-6, "uniform nll error " + std::to_string(uniform_err));
  out.note(std::to_string(probes) + " probes, 0 violations; sequential diff " +
           std::to_string(worst_seq) + "; uniform err " + std::to_string(uniform_err));
  return out;
}

Outcome criterion5() {
  Outcome out;
  PriorConfig<float> cfg;
  cfg.vocab = 2;
  cfg.seq_len = 2;
  cfg.heads = 1;
  cfg.layers = 1;
  cfg.enc_layers = 1;
  cfg.embed = 8;
  cfg.ff = 16;
  Prior<float> m(cfg, 31);
  TokenSequence zc = {1, 0};

  auto softmax_at = [&](const Tensor<float>& lg, int row, int tok) {
    double mx = std::max(double(lg.at2(row, 0)), double(lg.at2(row, 1)));
    double e0 = std::exp(double(lg.at2(row, 0)) - mx);
    double e1 = std::exp(double(lg.at2(row, 1)) - mx);
    return (tok == 0 ? e0 : e1) / (e0 + e1);
  };
  double chain[2][2];
  for (int t0 = 0; t0 < 2; ++t0) {
    Tensor<float> l0 = m.logits(zc, {});
    double p0 = softmax_at(l0, 0, t0);
    Tensor<float> l1 = m.logits(zc, {t0});
    for (int t1 = 0; t1 < 2; ++t1) chain[t0][t1] = p0 * softmax_at(l1, 1, t1);
  }
  const int n = 10000;
  int counts[2][2] = {{0, 0}, {0, 0}};
  for (int i = 0; i < n; ++i) {
    TokenSequence s = m.sample(zc, 1.0f, 0, uint64_t(i));
    counts[s[0]][s[1]]++;
  }
  double worst_sigma = 0;
  for (int t0 = 0; t0 < 2; ++t0)
    for (int t1 = 0; t1 < 2; ++t1) {
      double p = chain[t0][t1];
      double freq = double(counts[t0][t1]) / n;
      double sigma = std::sqrt(std::max(p * (1 - p) / n, 1e-12));
      double z = std::abs(freq - p) / sigma;
      worst_sigma = std::max(worst_sigma, z);
      out.require(std::abs(freq - p) <= 3 * sigma,
                  "outcome (" + std::to_string(t0) + "," + std::to_string(t1) + ") off by " +
                      std::to_string(z) + " sigma");
    }

  // greedy decode equals per-position argmax exactly
  Rng rng(41);
  PriorConfig<float> gcfg;
  gcfg.vocab = 8;
  gcfg.seq_len = 6;
  gcfg.heads = 2;
  gcfg.layers = 2;
  gcfg.enc_layers = 1;
  gcfg.embed = 16;
  gcfg.ff = 32;
  Prior<float> gm(gcfg, 23);
  int greedy_checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    TokenSequence zcond;
    for (int i = 0; i < 6; ++i) zcond.push_back(rng.uniform_int(8));
    TokenSequence greedy = gm.sample(zcond, 0.f, 0, uint64_t(trial));
    for (int t = 0; t < 6; ++t) {
      TokenSequence prefix(greedy.begin(), greedy.begin() + t);
      Tensor<float> lg = gm.logits(zcond, prefix);
      int arg = 0;
      for (int v = 1; v < 8; ++v)
        if (lg.at2(t, v) > lg.at2(t, arg)) arg = v;
      out.require(greedy[size_t(t)] == arg, "greedy != argmax at position " + std::to_string(t));
      ++greedy_checked;
    }
  }
  out.note("10000 draws within " + std::to_string(worst_sigma) + " sigma; greedy==argmax at " +
           std::to_string(greedy_checked) + " positions");
  return out;
}

Outcome criterion6() {
  Outcome out;
  RunConfig rc = RunConfig::defaults();
  EnvConfig env = EnvConfig::from(rc);

  // vqvae: single desk image to reconstruction mse < 1e-3
  double t0 = now_sec();
  {
    VqVaeConfig<float> cfg = VqVaeConfig<float>::from(rc);
    cfg.steps = 4000;
    cfg.batch = 1;
    cfg.lr = 2e-3f;
    cfg.log_every = 1000;
    cfg.val_every = 0;
    cfg.codebook_init = "random";  // memorization oracle; kmeans is for real corpora
    VqVae<float> m(cfg, 7);
    PairDataset ds;
    ds.width = ds.height = env.image_size;
    Image im = render(reset(env, 5), env);
    ds.pairs.push_back({im, im});
    VqVaeTrainResult<float> r = train_vqvae(m, ds, 13);
    double dt = now_sec() - t0;
    out.require(r.final_val_mse < 1e-3,
                "vqvae 1-image mse " + std::to_string(r.final_val_mse));
    out.require(dt < 600, "vqvae overfit took " + std::to_string(dt) + " s");
    out.note("vqvae mse " + std::to_string(r.final_val_mse) + " in " + std::to_string(int(dt)) +
             " s");
  }

  // prior: memorize 10 pairs to per-token nll < 0.1 at desk width
  t0 = now_sec();
  {
    PriorConfig<float> cfg = PriorConfig<float>::from(rc, 128, 64);
    cfg.steps = 2200;
    cfg.batch = 10;
    cfg.lr = 1e-3f;
    cfg.log_every = 500;
    cfg.val_every = 0;
    Prior<float> m(cfg, 43);
    EncodedDataset ds;
    ds.vocab = 128;
    ds.seq_len = 64;
    Rng rng(47);
    for (int i = 0; i < 10; ++i) {
      EncodedPair p;
      for (int t = 0; t < 64; ++t) {
        p.z_c.push_back(rng.uniform_int(128));
        p.z_g.push_back(rng.uniform_int(128));
      }
      ds.pairs.push_back(std::move(p));
    }
    PriorTrainResult<float> r = train_prior(m, ds, 51);
    double dt = now_sec() - t0;
    out.require(r.final_val_nll_per_token < 0.1,
                "prior 10-pair nll/token " + std::to_string(r.final_val_nll_per_token));
    out.require(dt < 600, "prior overfit took " + std::to_string(dt) + " s");
    out.note("prior nll/token " + std::to_string(r.final_val_nll_per_token) + " in " +
             std::to_string(int(dt)) + " s");
  }

  // cvae at beta_kl = 0: posterior-mean reconstruction mse < 1e-3
  t0 = now_sec();
  {
    CvaeConfig<float> cfg = CvaeConfig<float>::from(rc);
    cfg.beta_kl = 0;
    cfg.steps = 4000;
    cfg.batch = 1;
    cfg.lr = 2e-3f;
    Cvae<float> m(cfg, 11);
    PairDataset ds;
    ds.width = ds.height = env.image_size;
    ds.pairs.push_back({render(reset(env, 4), env), render(reset(env, 5), env)});
    train_cvae(m, ds, 13);
    Tensor<float> xc = images_to_batch<float>({&ds.pairs[0].o_c});
    Tensor<float> xg = images_to_batch<float>({&ds.pairs[0].o_g});
    Rng rng(1);
    CvaeStep<float> s = cvae_forward(m, xc, xg, rng, /*use_posterior_mean=*/true);
    double mse = double(s.recon.val()[0]) / double(xg.numel());
    double dt = now_sec() - t0;
    out.require(mse < 1e-3, "cvae posterior-mean mse " + std::to_string(mse));
    out.require(dt < 600, "cvae overfit took " + std::to_string(dt) + " s");
    out.note("cvae mse " + std::to_string(mse) + " in " + std::to_string(int(dt)) + " s");
  }
  return out;
}

Outcome criterion7() {
  Outcome out;
  Rng rng(3);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    int horizon = 1 + rng.uniform_int(10);
    Trajectory t;
    t.id = i;
    for (int k = 0; k <= horizon; ++k) {
      Image im(4, 4);
      for (auto& v : im.px) v = float(rng.uniform());
      t.obs.push_back(im);
      t.codes.push_back(TokenSequence{rng.uniform_int(8)});
    }
    for (int k = 0; k < horizon; ++k) t.actions.push_back(Action{0.1, 0, 0, 1});
    auto tuples = relabel(t);
    // a trajectory with T observations yields exactly T-1 tuples
    out.require(tuples.size() == t.obs.size() - 1, "tuple count wrong");
    for (const auto& tu : tuples) {
      out.require(*tu.goal == t.obs.back(), "goal not bit-identical to final frame");
      ++checked;
    }
  }

  ReplayBuffer buf(6);
  for (int i = 0; i < 15; ++i) {
    Trajectory t;
    t.id = i;
    t.obs = {Image(2, 2), Image(2, 2)};
    t.codes = {TokenSequence{0}, TokenSequence{1}};
    t.actions = {Action{}};
    buf.push(std::move(t));
    std::vector<int> ids = buf.ids();
    int expected_first = std::max(0, i - 5);
    out.require(int(buf.size()) == std::min(i + 1, 6), "buffer size wrong");
    out.require(ids.front() == expected_first && ids.back() == i,
                "eviction is not oldest-first");
  }
  out.note(std::to_string(checked) + " relabeled tuples verified; eviction oldest-first");
  return out;
}

// -------------------------------------------------------- criteria 8 and 9

Outcome criterion8() {
  Outcome out;
  RunConfig rc = RunConfig::defaults();
  EnvConfig env = EnvConfig::from(rc);
  FixturePaths fx = fixture_paths();
  AffordanceModel<float> m =
      AffordanceModel<float>::load(fx.vqvae.string(), fx.prior.string(), rc);
  AffordanceSampler<float> sampler(&m);
  int scenes = rc.geti("eval.scenes");
  int per_scene = rc.geti("eval.goals_per_scene");
  double t0 = now_sec();
  AffordanceMetrics am = eval_affordances(sampler, m.vqvae, env, scenes, per_scene, 777);
  out.require(am.plausibility >= 0.5,
              "plausibility " + std::to_string(am.plausibility) + " < 0.5");
  out.require(am.diversity > 0.05, "diversity " + std::to_string(am.diversity) + " <= 0.05");
  NoiseSampler noise(env.image_size);
  AffordanceMetrics nm = eval_affordances(noise, m.vqvae, env, scenes, per_scene, 777);
  out.require(nm.plausibility == 0.0,
              "noise sampler plausibility " + std::to_string(nm.plausibility) + " != 0");
  out.note("plausibility " + std::to_string(am.plausibility) + ", diversity " +
           std::to_string(am.diversity) + ", noise " + std::to_string(nm.plausibility) + " (" +
           std::to_string(scenes) + " scenes x " + std::to_string(per_scene) + ", " +
           std::to_string(int(now_sec() - t0)) + " s)");
  return out;
}

Outcome criterion9() {
  Outcome out;
  RunConfig rc = RunConfig::defaults();
  EnvConfig env = EnvConfig::from(rc);
  FixturePaths fx = fixture_paths();
  Checkpoint vck = load_checkpoint_as(fx.vqvae.string(), "vqvae");
  VqVae<float> codec = vqvae_from_checkpoint<float>(vck);
  TaskSuite suite = build_task_suite(env, 31);
  int trials = rc.geti("eval.trials");
  double jitter = rc.getf("eval.jitter");

  auto eval_ckpt = [&](const fs::path& path, uint64_t seed) {
    Policy<float> p = policy_from_checkpoint<float>(load_checkpoint_as(path.string(), "policy"));
    PolicyActor<float> actor(&p, &codec);
    return eval_policy(actor, suite, env, trials, jitter, seed);
  };

  double aff_push[3], rand_push[3];
  double aff_type[3][3];  // [seed][type]
  const char* types[3] = {"pushing", "pick_place", "stacking"};
  for (int i = 0; i < 3; ++i) {
    int seed = kFixtureExploreSeeds[i];
    EvalReport ra = eval_ckpt(fx.policy("affordance", seed), 900 + uint64_t(seed));
    EvalReport rr = eval_ckpt(fx.policy("random", seed), 900 + uint64_t(seed));
    aff_push[i] = ra.rate_for("pushing");
    rand_push[i] = rr.rate_for("pushing");
    for (int ty = 0; ty < 3; ++ty) aff_type[i][ty] = ra.rate_for(types[ty]);
  }

  OracleActor oracle(env);
  EvalReport ro = eval_policy(oracle, suite, env, trials, jitter, 901);
  double untrained_type[3][3];
  for (int i = 0; i < 3; ++i) {
    PolicyConfig<float> pcfg =
        PolicyConfig<float>::from(rc, codec.cfg.codebook_size, codec.cfg.seq_len());
    Policy<float> fresh(pcfg, derive_seed(5000 + uint64_t(i), 0x441));
    PolicyActor<float> actor(&fresh, &codec);
    EvalReport ru = eval_policy(actor, suite, env, trials, jitter, 902 + uint64_t(i));
    for (int ty = 0; ty < 3; ++ty) untrained_type[i][ty] = ru.rate_for(types[ty]);
  }

  double aff_med = median3(aff_push[0], aff_push[1], aff_push[2]);
  double rand_med = median3(rand_push[0], rand_push[1], rand_push[2]);
  out.require(aff_med >= rand_med, "pushing: affordance median " + std::to_string(aff_med) +
                                       " < random median " + std::to_string(rand_med));
  std::string table = "pushing aff/rand median " + std::to_string(aff_med) + "/" +
                      std::to_string(rand_med);
  for (int ty = 0; ty < 3; ++ty) {
    double trained = median3(aff_type[0][ty], aff_type[1][ty], aff_type[2][ty]);
    double untrained = median3(untrained_type[0][ty], untrained_type[1][ty],
                               untrained_type[2][ty]);
    double oracle_rate = ro.rate_for(types[ty]);
    out.require(oracle_rate >= trained, std::string(types[ty]) + ": oracle " +
                                            std::to_string(oracle_rate) + " < trained " +
                                            std::to_string(trained));
    out.require(trained >= untrained, std::string(types[ty]) + ": trained " +
                                          std::to_string(trained) + " < untrained " +
                                          std::to_string(untrained));
    table += "; " + std::string(types[ty]) + " oracle/trained/untrained " +
             std::to_string(oracle_rate) + "/" + std::to_string(trained) + "/" +
             std::to_string(untrained);
  }
  out.note(table);
  return out;
}

Outcome criterion10() {
  Outcome out;
  if (g_cli_path.empty()) {
    out.require(false, "no --cli <path> given");
    return out;
  }
  fs::path dir = fs::temp_directory_path() / "afford_accept_micro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::string cfg = std::string(AFFORD_SOURCE_DIR) + "/configs/micro.ini";
  double t0 = now_sec();
  auto run = [&](const std::string& args) {
    std::string cmd = g_cli_path + " " + args + " >> " + (dir / "log.txt").string() + " 2>&1";
    int rc_ = std::system(cmd.c_str());
    int code = WIFEXITED(rc_) ? WEXITSTATUS(rc_) : -1;
    out.require(code == 0, "stage failed (exit " + std::to_string(code) + "): " + args);
    return code == 0;
  };
  bool ok = run("gen-data --config " + cfg + " --seed 5 --out " + (dir / "data").string());
  ok = ok && run("train-vqvae --config " + cfg + " --seed 5 --data " + (dir / "data").string() +
                 " --out " + (dir / "vqvae.ckpt").string());
  ok = ok && run("train-prior --config " + cfg + " --seed 5 --data " + (dir / "data").string() +
                 " --vqvae " + (dir / "vqvae.ckpt").string() + " --out " +
                 (dir / "prior.ckpt").string());
  ok = ok && run("explore --config " + cfg + " --seed 5 --sampler affordance --vqvae " +
                 (dir / "vqvae.ckpt").string() + " --prior " + (dir / "prior.ckpt").string() +
                 " --out " + (dir / "explore").string());
  ok = ok && run("evaluate --config " + cfg + " --seed 5 --policy " +
                 (dir / "explore" / "policy.ckpt").string() + " --vqvae " +
                 (dir / "vqvae.ckpt").string() + " --out " + (dir / "eval").string());
  double dt = now_sec() - t0;
  out.require(dt < 900, "pipeline took " + std::to_string(dt) + " s (limit 900)");
  if (ok) out.note("gen-data -> train-vqvae -> train-prior -> explore -> evaluate in " +
                   std::to_string(int(dt)) + " s");
  return out;
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {1, "quantization equals exhaustive nearest-neighbor search", criterion1},
    {2, "EMA update hand-check and stationary convergence", criterion2},
    {3, "straight-through gradient contract", criterion3},
    {4, "prior causality and chain-rule consistency", criterion4},
    {5, "sampling correctness on the enumerable toy model", criterion5},
    {6, "overfit oracles (vqvae / prior / cvae)", criterion6},
    {7, "hindsight relabeling and buffer eviction", criterion7},
    {8, "desk-scale generative quality", criterion8},
    {9, "desk-scale exploration ordering", criterion9},
    {10, "end-to-end micro pipeline", criterion10},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  bool fixture = false;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      for (const auto& tok : split(argv[++i], ',')) only.insert(std::stoi(tok));
    } else if (a == "--fixture") {
      fixture = true;
    } else if (a == "--fixture-dir" && i + 1 < argc) {
      g_fixture_dir = argv[++i];
    } else if (a == "--cli" && i + 1 < argc) {
      g_cli_path = argv[++i];
    } else {
      std::fprintf(stderr, "unknown argument: %s\n", a.c_str());
      return 2;
    }
  }
  if (fixture) {
    try {
      return build_fixture();
    } catch (const std::exception& e) {
      std::fprintf(stderr, "[fixture] error: %s\n", e.what());
      return 1;
    }
  }
  int failures = 0;
  for (const auto& c : kCriteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %d: %s%s%s\n", out.pass ? "PASS" : "FAIL", c.id, c.name,
                out.detail.empty() ? "" : " -- ", out.detail.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
