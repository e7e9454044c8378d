// Unified command line for the visual-affordance stack: data generation,
// codec/prior/baseline training, affordance-driven exploration, evaluation,
// sampling and reporting. Every run writes its fully resolved configuration
// next to its artifacts.

#include <CLI11.hpp>
#include <ctime>
#include <iostream>

#include "afford/report.hpp"

using namespace afford;
namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out;
  int64_t seed = -1;  // -1: take run.seed from the config
};

RunConfig resolve_config(const CommonArgs& a) {
  RunConfig rc =
      a.config_path.empty() ? RunConfig::defaults() : RunConfig::from_file(a.config_path);
  if (a.seed >= 0) rc.set("run.seed", std::to_string(a.seed));
  return rc;
}

uint64_t master_seed(const RunConfig& rc) { return uint64_t(rc.geti("run.seed")); }

// --out wins; otherwise a timestamped directory under AFFORD_RUN_ROOT or
// run.out_root.
fs::path run_dir(const CommonArgs& a, const RunConfig& rc, const std::string& command) {
  if (!a.out.empty()) return fs::path(a.out);
  const char* env_root = std::getenv("AFFORD_RUN_ROOT");
  fs::path root = env_root ? fs::path(env_root) : fs::path(rc.gets("run.out_root"));
  std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", std::localtime(&now));
  return root / (command + "-" + stamp);
}

fs::path prepare_run_dir(const CommonArgs& a, const RunConfig& rc, const std::string& command) {
  fs::path dir = run_dir(a, rc, command);
  fs::create_directories(dir);
  rc.save((dir / "config.ini").string());
  return dir;
}

void save_config_next_to(const fs::path& ckpt, const RunConfig& rc) {
  fs::path dir = ckpt.parent_path().empty() ? fs::path(".") : ckpt.parent_path();
  fs::create_directories(dir);
  rc.save((dir / (ckpt.stem().string() + ".config.ini")).string());
}

void write_metrics_tsv(const fs::path& path, const std::string& header,
                       const std::vector<ExploreLogRow>& rows) {
  std::ofstream f(path);
  check(f.good(), "cannot write " + path.string());
  f << header << "\n";
  for (const auto& r : rows)
    f << r.episode << "\t" << r.mean_bc_loss << "\t" << r.buffer_size << "\t" << r.goal_hash
      << "\n";
}

int cmd_gen_data(const CommonArgs& a, int n_override) {
  RunConfig rc = resolve_config(a);
  if (n_override >= 0) rc.set("data.pairs", std::to_string(n_override));
  fs::path dir = prepare_run_dir(a, rc, "gen-data");
  EnvConfig env = EnvConfig::from(rc);
  BehaviorMix mix = BehaviorMix::from(rc);
  uint64_t seed = master_seed(rc);
  PairDataset ds =
      generate_pairs(env, rc.geti("data.pairs"), mix, seed, rc.geti("data.max_script_steps"));
  assign_split(ds, rc.getf("data.val_fraction"), derive_seed(seed, 0x59117));
  save_dataset(dir.string(), ds);
  std::cout << "gen-data: wrote " << ds.pairs.size() << " pairs to " << dir
            << " (content hash " << std::hex << ds.content_hash() << std::dec << ")\n";
  return 0;
}

int cmd_train_vqvae(const CommonArgs& a, const std::string& data_dir) {
  RunConfig rc = resolve_config(a);
  check(!a.out.empty(), "train-vqvae: --out <checkpoint path> is required");
  fs::path out(a.out);
  save_config_next_to(out, rc);
  PairDataset ds = load_dataset(data_dir);
  VqVaeConfig<float> cfg = VqVaeConfig<float>::from(rc);
  check(cfg.image_size == ds.width, "train-vqvae: dataset image size mismatch");
  uint64_t seed = master_seed(rc);
  VqVae<float> model(cfg, derive_seed(seed, 0x111));
  double t0 = now_sec();
  VqVaeTrainResult<float> r = train_vqvae(model, ds, derive_seed(seed, 0x112));
  Checkpoint ck = vqvae_to_checkpoint(model, rc.section_hash({"env", "vqvae"}));
  save_checkpoint(out.string(), ck);
  write_train_log((out.parent_path() / (out.stem().string() + ".log.tsv")).string(),
                  "step\ttotal\trecon\tcommit\tusage", r.log);
  write_train_log((out.parent_path() / (out.stem().string() + ".val.tsv")).string(),
                  "step\tval_mse\t-\t-\t-", r.val_log);
  std::cout << "train-vqvae: " << cfg.steps << " steps in " << int(now_sec() - t0)
            << " s, val mse " << r.initial_val_mse << " -> " << r.final_val_mse << ", wrote "
            << out << "\n";
  return 0;
}

int cmd_train_prior(const CommonArgs& a, const std::string& data_dir,
                    const std::string& vqvae_path) {
  RunConfig rc = resolve_config(a);
  check(!a.out.empty(), "train-prior: --out <checkpoint path> is required");
  fs::path out(a.out);
  save_config_next_to(out, rc);
  PairDataset ds = load_dataset(data_dir);
  Checkpoint vck = load_checkpoint_as(vqvae_path, "vqvae");
  VqVae<float> codec = vqvae_from_checkpoint<float>(vck);
  check(codec.cfg.image_size == ds.width,
        "train-prior: dataset image size does not match the vqvae checkpoint");
  EncodedDataset enc = encode_dataset(codec, ds, vck.file_hash);
  PriorConfig<float> cfg =
      PriorConfig<float>::from(rc, codec.cfg.codebook_size, codec.cfg.seq_len());
  uint64_t seed = master_seed(rc);
  Prior<float> model(cfg, derive_seed(seed, 0x221));
  double t0 = now_sec();
  PriorTrainResult<float> r = train_prior(model, enc, derive_seed(seed, 0x222));
  Checkpoint ck =
      prior_to_checkpoint(model, rc.section_hash({"env", "vqvae", "prior"}), vck.file_hash);
  save_checkpoint(out.string(), ck);
  write_train_log((out.parent_path() / (out.stem().string() + ".log.tsv")).string(),
                  "step\tnll_per_token\t-\t-\t-", r.log);
  write_train_log((out.parent_path() / (out.stem().string() + ".val.tsv")).string(),
                  "step\tval_nll_per_token\t-\t-\t-", r.val_log);
  std::cout << "train-prior: " << cfg.steps << " steps in " << int(now_sec() - t0)
            << " s, val nll/token " << r.final_val_nll_per_token << ", wrote " << out << "\n";
  return 0;
}

int cmd_train_cvae(const CommonArgs& a, const std::string& data_dir) {
  RunConfig rc = resolve_config(a);
  check(!a.out.empty(), "train-cvae: --out <checkpoint path> is required");
  fs::path out(a.out);
  save_config_next_to(out, rc);
  PairDataset ds = load_dataset(data_dir);
  CvaeConfig<float> cfg = CvaeConfig<float>::from(rc);
  check(cfg.image_size == ds.width, "train-cvae: dataset image size mismatch");
  uint64_t seed = master_seed(rc);
  Cvae<float> model(cfg, derive_seed(seed, 0x331));
  double t0 = now_sec();
  CvaeTrainResult<float> r = train_cvae(model, ds, derive_seed(seed, 0x332));
  Checkpoint ck = cvae_to_checkpoint(model, rc.section_hash({"env", "cvae"}));
  save_checkpoint(out.string(), ck);
  write_train_log((out.parent_path() / (out.stem().string() + ".log.tsv")).string(),
                  "step\tloss\trecon\tkl", r.log);
  std::cout << "train-cvae: " << cfg.steps << " steps in " << int(now_sec() - t0)
            << " s, wrote " << out << "\n";
  return 0;
}

int cmd_explore(const CommonArgs& a, const std::string& sampler_name,
                const std::string& vqvae_path, const std::string& prior_path,
                const std::string& cvae_path, int episodes_override) {
  RunConfig rc = resolve_config(a);
  if (episodes_override >= 0) rc.set("explore.episodes", std::to_string(episodes_override));
  fs::path dir = prepare_run_dir(a, rc, "explore");
  EnvConfig env = EnvConfig::from(rc);
  uint64_t seed = master_seed(rc);

  check(!vqvae_path.empty(), "explore: --vqvae <checkpoint> is required (policy codec)");
  Checkpoint vck = load_checkpoint_as(vqvae_path, "vqvae");
  VqVae<float> codec = vqvae_from_checkpoint<float>(vck);
  check(codec.cfg.image_size == env.image_size,
        "explore: vqvae image size does not match the environment");

  std::unique_ptr<GoalSampler> sampler;
  std::unique_ptr<AffordanceModel<float>> aff;
  std::unique_ptr<Cvae<float>> cvae;
  if (sampler_name == "affordance") {
    check(!prior_path.empty(),
          "explore: --prior <checkpoint> is required for the affordance sampler");
    aff = std::make_unique<AffordanceModel<float>>(
        AffordanceModel<float>::load(vqvae_path, prior_path, rc));
    sampler = std::make_unique<AffordanceSampler<float>>(aff.get());
  } else if (sampler_name == "cvae") {
    check(!cvae_path.empty(), "explore: --cvae <checkpoint> is required for the cvae sampler");
    cvae = std::make_unique<Cvae<float>>(
        cvae_from_checkpoint<float>(load_checkpoint_as(cvae_path, "cvae")));
    check(cvae->cfg.image_size == env.image_size,
          "explore: cvae image size does not match the environment");
    sampler = std::make_unique<CvaeSampler<float>>(cvae.get());
  } else if (sampler_name == "random") {
    sampler = std::make_unique<RandomSceneSampler>(env);
  } else {
    throw Error("explore: unknown sampler '" + sampler_name +
                "' (expected affordance | cvae | random)");
  }

  PolicyConfig<float> pcfg =
      PolicyConfig<float>::from(rc, codec.cfg.codebook_size, codec.cfg.seq_len());
  Policy<float> policy(pcfg, derive_seed(seed, 0x441));
  ExploreConfig ecfg = ExploreConfig::from(rc);

  std::ofstream traj_log(dir / "trajectories.jsonl");
  std::ofstream eval_curve;
  TaskSuite suite;
  std::function<void(int, const Policy<float>&)> hook;
  if (ecfg.eval_every > 0) {
    suite = build_task_suite(env, derive_seed(seed, 0x515));
    eval_curve.open(dir / "eval_curve.tsv");
    eval_curve << "episode\tsuccess\n";
    hook = [&](int episode, const Policy<float>& p) {
      PolicyActor<float> actor(&p, &codec);
      EvalReport r = eval_policy(actor, suite, env, rc.geti("eval.trials"),
                                 rc.getf("eval.jitter"), derive_seed(seed, 0x600 + uint64_t(episode)));
      eval_curve << episode << "\t" << r.overall() << "\n";
      eval_curve.flush();
    };
  }

  double t0 = now_sec();
  ExploreResult<float> r = explore_loop(env, *sampler, codec, policy, ecfg,
                                        derive_seed(seed, 0x442), &traj_log, hook);
  Checkpoint pck =
      policy_to_checkpoint(policy, rc.section_hash({"env", "explore"}), vck.file_hash);
  save_checkpoint((dir / "policy.ckpt").string(), pck);
  write_metrics_tsv(dir / "metrics.tsv", "episode\tbc_loss\tbuffer\tgoal_hash", r.log);
  std::cout << "explore: " << ecfg.episodes << " episodes with sampler '" << sampler->name()
            << "' in " << int(now_sec() - t0) << " s, policy at " << (dir / "policy.ckpt")
            << "\n";
  return 0;
}

int cmd_evaluate(const CommonArgs& a, const std::string& policy_spec,
                 const std::string& vqvae_path, const std::string& suite_path,
                 int trials_override) {
  RunConfig rc = resolve_config(a);
  if (trials_override >= 0) rc.set("eval.trials", std::to_string(trials_override));
  fs::path dir = prepare_run_dir(a, rc, "evaluate");
  EnvConfig env = EnvConfig::from(rc);
  uint64_t seed = master_seed(rc);

  TaskSuite suite;
  if (!suite_path.empty()) {
    suite = load_task_suite(suite_path, env);
  } else {
    suite = build_task_suite(env, derive_seed(seed, 0x515));
    save_task_suite((dir / "suite.json").string(), suite);
  }

  std::unique_ptr<EvalActor> actor;
  std::unique_ptr<VqVae<float>> codec;
  std::unique_ptr<Policy<float>> policy;
  if (policy_spec == "oracle") {
    actor = std::make_unique<OracleActor>(env);
  } else if (policy_spec == "zero") {
    actor = std::make_unique<ZeroActor>();
  } else {
    check(!vqvae_path.empty(),
          "evaluate: --vqvae <checkpoint> is required for a learned policy");
    Checkpoint vck = load_checkpoint_as(vqvae_path, "vqvae");
    Checkpoint pck = load_checkpoint_as(policy_spec, "policy");
    check(pck.dep_hash == vck.file_hash,
          "checkpoint dependency mismatch: the policy at " + policy_spec +
              " was trained against a different vqvae than " + vqvae_path);
    codec = std::make_unique<VqVae<float>>(vqvae_from_checkpoint<float>(vck));
    policy = std::make_unique<Policy<float>>(policy_from_checkpoint<float>(pck));
    actor = std::make_unique<PolicyActor<float>>(policy.get(), codec.get());
  }

  EvalReport r = eval_policy(*actor, suite, env, rc.geti("eval.trials"), rc.getf("eval.jitter"),
                             derive_seed(seed, 0x517));
  save_eval_report((dir / "eval_report.json").string(), r);
  std::cout << "evaluate: actor '" << r.actor << "'";
  for (const char* ty : {"pushing", "pick_place", "stacking"})
    std::cout << "  " << ty << " " << r.rate_for(ty);
  std::cout << "  overall " << r.overall() << " -> " << (dir / "eval_report.json") << "\n";
  return 0;
}

int cmd_sample(const CommonArgs& a, const std::string& model_name, const std::string& vqvae_path,
               const std::string& prior_path, const std::string& cvae_path,
               const std::string& image_path, int n) {
  RunConfig rc = resolve_config(a);
  fs::path dir = prepare_run_dir(a, rc, "sample");
  uint64_t seed = master_seed(rc);
  check(n >= 1, "sample: --n must be >= 1");

  Image o_c = read_ppm(image_path);
  std::vector<Image> goals;
  std::unique_ptr<VqVae<float>> codec_for_div;
  if (model_name == "affordance") {
    check(!vqvae_path.empty() && !prior_path.empty(),
          "sample: --vqvae and --prior are required for the affordance model");
    AffordanceModel<float> m = AffordanceModel<float>::load(vqvae_path, prior_path, rc);
    o_c = resize_nearest(o_c, m.vqvae.cfg.image_size, m.vqvae.cfg.image_size);
    goals = m.sample_goals(o_c, n, derive_seed(seed, 0x5a));
    codec_for_div = std::make_unique<VqVae<float>>(m.vqvae);
  } else if (model_name == "cvae") {
    check(!cvae_path.empty(), "sample: --cvae <checkpoint> is required for the cvae model");
    Cvae<float> m = cvae_from_checkpoint<float>(load_checkpoint_as(cvae_path, "cvae"));
    o_c = resize_nearest(o_c, m.cfg.image_size, m.cfg.image_size);
    goals = m.sample_goals(o_c, n, derive_seed(seed, 0x5a));
    if (!vqvae_path.empty())
      codec_for_div = std::make_unique<VqVae<float>>(
          vqvae_from_checkpoint<float>(load_checkpoint_as(vqvae_path, "vqvae")));
  } else {
    throw Error("sample: unknown model '" + model_name + "' (expected affordance | cvae)");
  }

  fs::create_directories(dir / "samples");
  std::vector<Image> sheet_imgs = {o_c};
  for (size_t i = 0; i < goals.size(); ++i) {
    write_ppm((dir / "samples" / ("goal_" + std::to_string(i) + ".ppm")).string(), goals[i]);
    sheet_imgs.push_back(goals[i]);
  }
  write_ppm((dir / "samples" / "sheet.ppm").string(),
            contact_sheet(sheet_imgs, int(sheet_imgs.size())));
  std::cout << "sample: wrote " << goals.size() << " goals to " << (dir / "samples");
  if (codec_for_div && goals.size() >= 2)
    std::cout << " (diversity " << diversity(goals, *codec_for_div) << ")";
  std::cout << "\n";
  return 0;
}

int cmd_report(const CommonArgs& a, const std::vector<std::string>& dirs) {
  RunConfig rc = resolve_config(a);
  fs::path dir = prepare_run_dir(a, rc, "report");
  ReportResult r = write_report(dirs, dir.string());
  for (const auto& w : r.warnings) std::cout << "warning: " << w << "\n";
  std::cout << "report: " << r.eval_rows << " eval rows, " << r.curves << " curves, "
            << r.panels << " panels -> " << dir << "\n";
  return 0;
}

int cmd_config_schema() {
  std::cout << "# configuration reference (key = default  # doc)\n";
  std::cout << RunConfig::defaults().serialize();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"visual affordance learning and exploration toolkit"};
  app.require_subcommand(1);

  auto add_common = [](CLI::App* sub, CommonArgs& c) {
    sub->add_option("--config", c.config_path, "configuration file (ini-style)");
    sub->add_option("--seed", c.seed, "master seed (overrides run.seed)");
    sub->add_option("--out", c.out, "output directory or checkpoint path");
  };

  CommonArgs c_gen;
  int gen_n = -1;
  auto* gen = app.add_subcommand("gen-data", "generate (o_c, o_g) frame pairs");
  add_common(gen, c_gen);
  gen->add_option("--n", gen_n, "pair count (overrides data.pairs)");

  CommonArgs c_vq;
  std::string vq_data;
  auto* tvq = app.add_subcommand("train-vqvae", "train the discrete image codec");
  add_common(tvq, c_vq);
  tvq->add_option("--data", vq_data, "dataset directory")->required();

  CommonArgs c_pr;
  std::string pr_data, pr_vqvae;
  auto* tpr = app.add_subcommand("train-prior", "train the conditional autoregressive prior");
  add_common(tpr, c_pr);
  tpr->add_option("--data", pr_data, "dataset directory")->required();
  tpr->add_option("--vqvae", pr_vqvae, "frozen vqvae checkpoint")->required();

  CommonArgs c_cv;
  std::string cv_data;
  auto* tcv = app.add_subcommand("train-cvae", "train the conditional VAE baseline");
  add_common(tcv, c_cv);
  tcv->add_option("--data", cv_data, "dataset directory")->required();

  CommonArgs c_ex;
  std::string ex_sampler = "affordance", ex_vqvae, ex_prior, ex_cvae;
  int ex_episodes = -1;
  auto* exp = app.add_subcommand("explore", "affordance-driven exploration + behavior cloning");
  add_common(exp, c_ex);
  exp->add_option("--sampler", ex_sampler, "goal sampler: affordance | cvae | random");
  exp->add_option("--vqvae", ex_vqvae, "frozen vqvae checkpoint")->required();
  exp->add_option("--prior", ex_prior, "frozen prior checkpoint (affordance sampler)");
  exp->add_option("--cvae", ex_cvae, "frozen cvae checkpoint (cvae sampler)");
  exp->add_option("--episodes", ex_episodes, "episode budget (overrides explore.episodes)");

  CommonArgs c_ev;
  std::string ev_policy, ev_vqvae, ev_suite;
  int ev_trials = -1;
  auto* ev = app.add_subcommand("evaluate", "goal-reaching evaluation on the task suite");
  add_common(ev, c_ev);
  ev->add_option("--policy", ev_policy, "policy checkpoint, or 'oracle' / 'zero'")->required();
  ev->add_option("--vqvae", ev_vqvae, "vqvae checkpoint (learned policies)");
  ev->add_option("--suite", ev_suite, "task suite file (built from config when absent)");
  ev->add_option("--trials", ev_trials, "trials per task (overrides eval.trials)");

  CommonArgs c_sa;
  std::string sa_model = "affordance", sa_vqvae, sa_prior, sa_cvae, sa_image;
  int sa_n = 8;
  auto* sa = app.add_subcommand("sample", "sample goal images for a conditioning image");
  add_common(sa, c_sa);
  sa->add_option("--model", sa_model, "sampler: affordance | cvae");
  sa->add_option("--vqvae", sa_vqvae, "vqvae checkpoint");
  sa->add_option("--prior", sa_prior, "prior checkpoint");
  sa->add_option("--cvae", sa_cvae, "cvae checkpoint");
  sa->add_option("--image", sa_image, "conditioning image (ppm)")->required();
  sa->add_option("--n", sa_n, "number of goals");

  CommonArgs c_rp;
  std::vector<std::string> rp_dirs;
  auto* rp = app.add_subcommand("report", "aggregate run directories into tables and plots");
  add_common(rp, c_rp);
  rp->add_option("dirs", rp_dirs, "run directories");

  auto* cs = app.add_subcommand("config-schema", "print the full configuration reference");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(c_gen, gen_n);
    if (tvq->parsed()) return cmd_train_vqvae(c_vq, vq_data);
    if (tpr->parsed()) return cmd_train_prior(c_pr, pr_data, pr_vqvae);
    if (tcv->parsed()) return cmd_train_cvae(c_cv, cv_data);
    if (exp->parsed())
      return cmd_explore(c_ex, ex_sampler, ex_vqvae, ex_prior, ex_cvae, ex_episodes);
    if (ev->parsed()) return cmd_evaluate(c_ev, ev_policy, ev_vqvae, ev_suite, ev_trials);
    if (sa->parsed()) return cmd_sample(c_sa, sa_model, sa_vqvae, sa_prior, sa_cvae, sa_image, sa_n);
    if (rp->parsed()) return cmd_report(c_rp, rp_dirs);
    if (cs->parsed()) return cmd_config_schema();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
