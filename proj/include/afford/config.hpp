#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "afford/util.hpp"

namespace afford {

// Declared configuration schema. Every key a run can consume is listed here
// with its default and a one-line doc; unknown keys in a config file are a
// hard error. The fully resolved config is written into every run directory.

struct ConfigKey {
  const char* key;  // "section.name"
  const char* def;
  const char* doc;
};

inline const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      // simulated tabletop environment (unit-square workspace, z in [0,0.4])
      {"env.objects_min", "2", "minimum object count at reset"},
      {"env.objects_max", "3", "maximum object count at reset"},
      {"env.horizon", "25", "episode horizon T (policy steps per episode)"},
      {"env.obj_radius", "0.06", "object radius in workspace units"},
      {"env.grasp_radius", "0.08", "max planar gripper-object distance for a grasp"},
      {"env.grasp_height", "0.15", "gripper z must be below this to grasp"},
      {"env.push_radius", "0.08", "gripper-object contact radius for pushing"},
      {"env.success_radius", "0.08", "per-object distance tolerance for success"},
      {"env.step_cap", "0.12", "per-axis displacement cap per step"},
      {"env.stack_tol", "0.05", "planar tolerance for releasing onto a support object"},
      {"env.place_margin", "0.16", "min distance of object centers from workspace edge"},
      {"env.min_separation", "0.18", "min center distance between objects at reset"},
      {"env.max_place_attempts", "200", "rejection-sampling budget per object at reset"},
      {"env.image_size", "32", "rendered image height and width in pixels"},
      {"env.draw_gripper", "true", "render the gripper marker (arm-free variant: false)"},

      // synthetic (o_c, o_g) pair generation
      {"data.pairs", "20000", "number of frame pairs to generate"},
      {"data.val_fraction", "0.1", "validation split fraction"},
      {"data.mix_push", "0.4", "scripted behavior mix: push"},
      {"data.mix_pick", "0.3", "scripted behavior mix: pick-and-place"},
      {"data.mix_stack", "0.2", "scripted behavior mix: stack"},
      {"data.mix_reorient", "0.1", "scripted behavior mix: reorient (small pick-adjust)"},
      {"data.max_script_steps", "60", "step budget for a scripted behavior episode"},

      // discrete image codec
      {"vqvae.latent_size", "8", "latent grid side h (= w); image_size/latent_size is the downsample"},
      {"vqvae.codebook_size", "128", "number of codebook entries K"},
      {"vqvae.codebook_dim", "64", "codebook vector dimension L"},
      {"vqvae.base_channels", "16", "encoder first-conv channels (widths scale from this)"},
      {"vqvae.codebook_init", "kmeans", "codebook init: kmeans (from encoded data) | random"},
      {"vqvae.beta", "1.0", "commitment loss coefficient"},
      {"vqvae.gamma", "0.99", "EMA decay for codebook updates"},
      {"vqvae.count_floor", "1e-5", "floor on EMA counts when normalizing codebook vectors"},
      {"vqvae.lr", "5e-4", "Adam learning rate"},
      {"vqvae.batch", "32", "batch size"},
      {"vqvae.steps", "20000", "training steps"},
      {"vqvae.log_every", "200", "steps between log records"},
      {"vqvae.val_every", "2000", "steps between validation passes (0 = off)"},

      // conditional autoregressive transformer prior
      {"prior.heads", "2", "attention heads"},
      {"prior.layers", "4", "decoder attention layers"},
      {"prior.enc_layers", "2", "conditioning encoder attention layers"},
      {"prior.embed", "128", "embedding size"},
      {"prior.ff", "512", "feedforward hidden size"},
      {"prior.layout", "encdec", "conditioning wiring: encdec | prefix"},
      {"prior.lr", "2e-4", "Adam learning rate"},
      {"prior.batch", "32", "batch size"},
      {"prior.steps", "20000", "training steps"},
      {"prior.temperature", "1.0", "default sampling temperature"},
      {"prior.top_k", "0", "default top-k truncation (0 = none)"},
      {"prior.log_every", "200", "steps between log records"},
      {"prior.val_every", "2000", "steps between validation passes (0 = off)"},

      // conditional VAE baseline
      {"cvae.latent_dim", "64", "Gaussian latent dimension d_z"},
      {"cvae.beta_kl", "1.0", "KL weight"},
      {"cvae.base_channels", "16", "conv channel scale"},
      {"cvae.lr", "1e-3", "Adam learning rate"},
      {"cvae.batch", "32", "batch size"},
      {"cvae.steps", "6000", "training steps"},
      {"cvae.log_every", "200", "steps between log records"},

      // affordance-driven exploration + behavior cloning
      {"explore.episodes", "300", "episode budget"},
      {"explore.updates_per_episode", "50", "behavior-cloning updates per episode"},
      {"explore.batch", "32", "behavior-cloning batch size"},
      {"explore.buffer_capacity", "400", "replay buffer capacity in trajectories"},
      {"explore.noise_sigma", "0.1", "gaussian exploration noise on xyz actions"},
      {"explore.noise_grip", "0.1", "probability of flipping the gripper action"},
      {"explore.lr", "1e-3", "Adam learning rate for the policy"},
      {"explore.input_mode", "normalized", "latent index representation: normalized | embedding"},
      {"explore.embed_dim", "8", "per-token embedding size when input_mode=embedding"},
      {"explore.eval_every", "0", "episodes between eval hooks (0 = off)"},
      {"explore.reject_implausible", "false", "resample goals the scene parser rejects"},
      {"explore.reject_max_attempts", "5", "resampling budget when rejection is on"},

      // evaluation
      {"eval.trials", "10", "trials per task"},
      {"eval.jitter", "0.05", "initial-state jitter radius per trial"},
      {"eval.goals_per_scene", "8", "affordance samples per conditioning scene"},
      {"eval.scenes", "50", "held-out conditioning scenes for affordance metrics"},

      {"run.seed", "0", "master seed; every module stream is derived from it"},
      {"run.out_root", "runs", "root for auto-named run directories"},
  };
  return schema;
}

class RunConfig {
 public:
  static RunConfig defaults() {
    RunConfig c;
    for (const auto& k : config_schema()) c.kv_[k.key] = k.def;
    return c;
  }

  static RunConfig from_file(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "config: cannot open " + path);
    RunConfig c = defaults();
    std::string line, section;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      std::string s = trim(line);
      size_t hash = s.find('#');
      if (hash != std::string::npos) s = trim(s.substr(0, hash));
      if (s.empty()) continue;
      if (s.front() == '[' && s.back() == ']') {
        section = trim(s.substr(1, s.size() - 2));
        continue;
      }
      size_t eq = s.find('=');
      check(eq != std::string::npos,
            "config: " + path + ":" + std::to_string(lineno) + ": expected key = value");
      std::string key = trim(s.substr(0, eq));
      std::string value = trim(s.substr(eq + 1));
      if (!section.empty()) key = section + "." + key;
      c.set(key, value);
    }
    return c;
  }

  void set(const std::string& key, const std::string& value) {
    check(kv_.count(key) > 0, "unknown config key: " + key);
    kv_[key] = value;
  }

  const std::string& gets(const std::string& key) const {
    auto it = kv_.find(key);
    check(it != kv_.end(), "unknown config key: " + key);
    return it->second;
  }

  int geti(const std::string& key) const {
    const std::string& s = gets(key);
    try {
      size_t pos = 0;
      int v = std::stoi(s, &pos);
      check(pos == s.size(), "");
      return v;
    } catch (...) {
      throw Error("config: key " + key + " is not an integer: " + s);
    }
  }

  double getf(const std::string& key) const {
    const std::string& s = gets(key);
    try {
      size_t pos = 0;
      double v = std::stod(s, &pos);
      check(pos == s.size(), "");
      return v;
    } catch (...) {
      throw Error("config: key " + key + " is not a number: " + s);
    }
  }

  bool getb(const std::string& key) const {
    std::string s = lower(gets(key));
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw Error("config: key " + key + " is not a boolean: " + s);
  }

  // Canonical text form: sections sorted, keys sorted, docs as comments.
  std::string serialize() const {
    std::ostringstream out;
    std::string cur_section;
    for (const auto& k : config_schema()) {
      auto parts = split(k.key, '.');
      if (parts[0] != cur_section) {
        cur_section = parts[0];
        out << (out.tellp() > 0 ? "\n" : "") << "[" << cur_section << "]\n";
      }
      out << parts[1] << " = " << kv_.at(k.key) << "  # " << k.doc << "\n";
    }
    return out.str();
  }

  uint64_t hash() const {
    std::ostringstream out;
    for (const auto& [k, v] : kv_) out << k << "=" << v << ";";
    return fnv1a64(out.str());
  }

  // Hash over one or more sections only, for checkpoint compatibility checks.
  uint64_t section_hash(const std::vector<std::string>& sections) const {
    std::ostringstream out;
    for (const auto& [k, v] : kv_) {
      auto sec = split(k, '.')[0];
      if (std::find(sections.begin(), sections.end(), sec) != sections.end())
        out << k << "=" << v << ";";
    }
    return fnv1a64(out.str());
  }

  void save(const std::string& path) const {
    std::ofstream f(path);
    check(f.good(), "config: cannot write " + path);
    f << serialize();
  }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace afford
