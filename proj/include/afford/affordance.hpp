#pragma once

#include "afford/cvae.hpp"
#include "afford/prior.hpp"
#include "afford/simenv.hpp"

namespace afford {

// The composed affordance model p(o_g | o_c): encode the conditioning image
// to its latent code, sample a goal code from the frozen prior, decode it.
// Both checkpoints are frozen; goal i of a batch depends only on (seed, i).

template <typename T>
struct AffordanceModel {
  VqVae<T> vqvae;
  Prior<T> prior;
  uint64_t vqvae_hash = 0, prior_hash = 0;
  T temperature = T(1);
  int top_k = 0;
  // optional rejection of goals the scene parser finds implausible
  bool reject_implausible = false;
  int reject_max_attempts = 5;
  EnvConfig env;

  AffordanceModel(VqVae<T> v, Prior<T> p) : vqvae(std::move(v)), prior(std::move(p)) {
    check(prior.cfg.vocab == vqvae.cfg.codebook_size,
          "affordance: prior vocabulary does not equal the vqvae codebook size");
    check(prior.cfg.seq_len == vqvae.cfg.seq_len(),
          "affordance: prior sequence length does not match the latent grid");
  }

  static AffordanceModel load(const std::string& vqvae_path, const std::string& prior_path,
                              const RunConfig& rc) {
    Checkpoint vck = load_checkpoint_as(vqvae_path, "vqvae");
    Checkpoint pck = load_checkpoint_as(prior_path, "prior");
    check(pck.dep_hash == vck.file_hash,
          "checkpoint dependency mismatch: the prior at " + prior_path +
              " was trained against a different vqvae than " + vqvae_path);
    AffordanceModel m(vqvae_from_checkpoint<T>(vck), prior_from_checkpoint<T>(pck));
    m.vqvae_hash = vck.file_hash;
    m.prior_hash = pck.file_hash;
    m.temperature = T(rc.getf("prior.temperature"));
    m.top_k = rc.geti("prior.top_k");
    m.reject_implausible = rc.getb("explore.reject_implausible");
    m.reject_max_attempts = rc.geti("explore.reject_max_attempts");
    m.env = EnvConfig::from(rc);
    return m;
  }

  // one goal; the sampled latent is decoded as-is (no re-quantization)
  Image sample_goal(const Image& o_c, uint64_t seed, LatentCode* out_code = nullptr) const {
    check(o_c.h == vqvae.cfg.image_size && o_c.w == vqvae.cfg.image_size,
          "affordance: conditioning image has wrong dimensions");
    LatentCode z_c = vqvae.encode_code(o_c);
    std::vector<std::pair<int, int>> ref;
    if (reject_implausible) ref = detection_multiset(parse(o_c, env));
    LatentCode code;
    code.h = code.w = vqvae.cfg.latent_size;
    Image out;
    int attempts = reject_implausible ? reject_max_attempts : 1;
    for (int a = 0; a < attempts; ++a) {
      code.idx = prior.sample(z_c.idx, temperature, top_k, derive_seed(seed, uint64_t(a)));
      out = vqvae.decode_code(code);
      if (!reject_implausible) break;
      ParsedScene p = parse(out, env);
      if (plausible(p, env, &ref)) break;  // keep the last attempt otherwise
    }
    if (out_code) *out_code = code;
    return out;
  }

  std::vector<Image> sample_goals(const Image& o_c, int n, uint64_t seed,
                                  std::vector<LatentCode>* out_codes = nullptr) const {
    check(n >= 1, "affordance: need n >= 1 goals");
    std::vector<Image> goals;
    for (int i = 0; i < n; ++i) {
      LatentCode code;
      goals.push_back(sample_goal(o_c, derive_seed(seed, uint64_t(i)), &code));
      if (out_codes) out_codes->push_back(code);
    }
    return goals;
  }
};

// Mean pairwise normalized Hamming distance between latent codes.
inline double code_diversity(const std::vector<LatentCode>& codes) {
  check(codes.size() >= 2, "diversity: need at least two goals");
  double total = 0;
  int pairs = 0;
  for (size_t i = 0; i < codes.size(); ++i)
    for (size_t j = i + 1; j < codes.size(); ++j) {
      check(codes[i].idx.size() == codes[j].idx.size(), "diversity: mixed code lengths");
      int diff = 0;
      for (size_t t = 0; t < codes[i].idx.size(); ++t)
        if (codes[i].idx[t] != codes[j].idx[t]) ++diff;
      total += double(diff) / double(codes[i].idx.size());
      ++pairs;
    }
  return total / pairs;
}

template <typename T>
double diversity(const std::vector<Image>& goals, const VqVae<T>& vqvae) {
  check(goals.size() >= 2, "diversity: need at least two goals");
  std::vector<LatentCode> codes;
  for (const auto& g : goals) codes.push_back(vqvae.encode_code(g));
  return code_diversity(codes);
}

// ---- goal samplers behind one interface (exploration and evaluation) ----

class GoalSampler {
 public:
  virtual ~GoalSampler() = default;
  virtual Image sample(const Image& o_c, uint64_t seed) = 0;
  virtual std::string name() const = 0;
};

template <typename T>
class AffordanceSampler : public GoalSampler {
 public:
  explicit AffordanceSampler(const AffordanceModel<T>* m) : m_(m) {}
  Image sample(const Image& o_c, uint64_t seed) override { return m_->sample_goal(o_c, seed); }
  std::string name() const override { return "affordance"; }

 private:
  const AffordanceModel<T>* m_;
};

template <typename T>
class CvaeSampler : public GoalSampler {
 public:
  explicit CvaeSampler(const Cvae<T>* m) : m_(m) {}
  Image sample(const Image& o_c, uint64_t seed) override {
    return m_->sample_goals(o_c, 1, seed)[0];
  }
  std::string name() const override { return "cvae"; }

 private:
  const Cvae<T>* m_;
};

// Unconditioned baseline: the rendered reset of a fresh random scene.
class RandomSceneSampler : public GoalSampler {
 public:
  explicit RandomSceneSampler(const EnvConfig& env) : env_(env) {}
  Image sample(const Image&, uint64_t seed) override {
    return render(reset(env_, derive_seed(seed, 0xF00)), env_);
  }
  std::string name() const override { return "random"; }

 private:
  EnvConfig env_;
};

class NoiseSampler : public GoalSampler {
 public:
  explicit NoiseSampler(int image_size) : n_(image_size) {}
  Image sample(const Image&, uint64_t seed) override { return noise_image(n_, n_, seed); }
  std::string name() const override { return "noise"; }

 private:
  int n_;
};

class IdentitySampler : public GoalSampler {
 public:
  Image sample(const Image& o_c, uint64_t) override { return o_c; }
  std::string name() const override { return "identity"; }
};

}  // namespace afford
