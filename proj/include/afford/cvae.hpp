#pragma once

#include "afford/checkpoint.hpp"
#include "afford/dataset.hpp"
#include "afford/nn.hpp"
#include "afford/vqvae.hpp"

namespace afford {

// Conditional VAE goal sampler, the principal generative baseline. The
// recognition network reads (o_g, o_c) channel-concatenated; the decoder
// conditions by channel-concatenating a conv encoding of o_c with a spatial
// broadcast of z.

template <typename T>
struct CvaeConfig {
  int image_size = 32;
  int latent_dim = 64;
  int base_channels = 16;
  T beta_kl = T(1);
  T lr = T(1e-3);
  int batch = 32;
  int steps = 6000;
  int log_every = 200;

  static CvaeConfig from(const RunConfig& c) {
    CvaeConfig v;
    v.image_size = c.geti("env.image_size");
    v.latent_dim = c.geti("cvae.latent_dim");
    v.base_channels = c.geti("cvae.base_channels");
    v.beta_kl = T(c.getf("cvae.beta_kl"));
    v.lr = T(c.getf("cvae.lr"));
    v.batch = c.geti("cvae.batch");
    v.steps = c.geti("cvae.steps");
    v.log_every = c.geti("cvae.log_every");
    v.validate();
    return v;
  }
  void validate() const {
    check(latent_dim >= 1, "cvae: latent dim must be >= 1");
    check(image_size % 4 == 0, "cvae: image size must be divisible by 4");
  }
  int grid() const { return image_size / 4; }
};

// Analytic KL( N(mu, diag(exp(logvar))) || N(0, I) ) per batch row, summed
// over latent dimensions: 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2).
template <typename T>
Var<T> gaussian_kl(const Var<T>& mu, const Var<T>& logvar) {
  Var<T> t = ag::add(ag::mul(mu, mu), ag::exp_op(logvar));
  t = ag::sub(t, Var<T>::constant(Tensor<T>::full(logvar.val().shape, T(1))));
  t = ag::sub(t, logvar);
  return ag::scale(ag::sum_all(t), T(0.5));
}

template <typename T>
class Cvae {
 public:
  CvaeConfig<T> cfg;
  ParamStore<T> ps;

  Cvae(const CvaeConfig<T>& c, uint64_t seed) : cfg(c) {
    cfg.validate();
    Rng rng(derive_seed(seed, 0xc4ae));
    int b = cfg.base_channels, g = cfg.grid();
    cond1_ = Conv2dLayer<T>(ps, "cond.c1", 3, b, 3, 2, 1, rng);
    cond2_ = Conv2dLayer<T>(ps, "cond.c2", b, 2 * b, 3, 2, 1, rng);
    rec1_ = Conv2dLayer<T>(ps, "rec.c1", 6, b, 3, 2, 1, rng);
    rec2_ = Conv2dLayer<T>(ps, "rec.c2", b, 2 * b, 3, 2, 1, rng);
    rec_fc_ = Dense<T>(ps, "rec.fc", 2 * b * g * g, 2 * cfg.latent_dim, rng);
    z_fc_ = Dense<T>(ps, "dec.zfc", cfg.latent_dim, 2 * b * g * g, rng);
    mix_ = Conv2dLayer<T>(ps, "dec.mix", 4 * b, 2 * b, 1, 1, 0, rng);
    up1_ = Conv2dLayer<T>(ps, "dec.up1", 2 * b, b, 3, 1, 1, rng);
    up2_ = Conv2dLayer<T>(ps, "dec.up2", b, b, 3, 1, 1, rng);
    out_ = Conv2dLayer<T>(ps, "dec.out", b, 3, 3, 1, 1, rng);
  }

  // recognition network: (mu, logvar), each [B, d_z]
  std::pair<Var<T>, Var<T>> posterior(const Tensor<T>& o_g, const Tensor<T>& o_c) const {
    int bsz = o_g.shape[0], h = o_g.shape[2], w = o_g.shape[3];
    Tensor<T> both({bsz, 6, h, w});
    for (int b = 0; b < bsz; ++b) {
      std::memcpy(both.data() + int64_t(b) * 6 * h * w, o_g.data() + int64_t(b) * 3 * h * w,
                  size_t(3) * h * w * sizeof(T));
      std::memcpy(both.data() + (int64_t(b) * 6 + 3) * h * w,
                  o_c.data() + int64_t(b) * 3 * h * w, size_t(3) * h * w * sizeof(T));
    }
    Var<T> x = ag::relu(rec1_(Var<T>::constant(both)));
    x = ag::relu(rec2_(x));
    x = ag::reshape(x, {bsz, 2 * cfg.base_channels * cfg.grid() * cfg.grid()});
    Var<T> stats = rec_fc_(x);
    return {ag::slice_cols(stats, 0, cfg.latent_dim),
            ag::slice_cols(stats, cfg.latent_dim, cfg.latent_dim)};
  }

  // decoder: p(o_g | z, o_c) mean image in (0,1)
  Var<T> decode(const Var<T>& z, const Tensor<T>& o_c) const {
    int bsz = o_c.shape[0], b = cfg.base_channels, g = cfg.grid();
    Var<T> cond = ag::relu(cond1_(Var<T>::constant(o_c)));
    cond = ag::relu(cond2_(cond));
    Var<T> zf = ag::relu(z_fc_(z));
    zf = ag::reshape(zf, {bsz, 2 * b, g, g});
    // channel-concatenate the conditioning encoding with the latent grid
    Tensor<T> cat({bsz, 4 * b, g, g});
    auto pc = cond.node(), pz = zf.node();
    for (int bi = 0; bi < bsz; ++bi) {
      std::memcpy(cat.data() + int64_t(bi) * 4 * b * g * g,
                  cond.val().data() + int64_t(bi) * 2 * b * g * g,
                  size_t(2) * b * g * g * sizeof(T));
      std::memcpy(cat.data() + (int64_t(bi) * 4 + 2) * b * g * g,
                  zf.val().data() + int64_t(bi) * 2 * b * g * g,
                  size_t(2) * b * g * g * sizeof(T));
    }
    int block = 2 * b * g * g;
    Var<T> x(ag::make_node<T>(std::move(cat), {pc, pz}, [pc, pz, bsz, block](Node<T>& n_) {
      if (pc->needs_grad) pc->ensure_grad();
      if (pz->needs_grad) pz->ensure_grad();
      for (int bi = 0; bi < bsz; ++bi)
        for (int64_t i = 0; i < block; ++i) {
          if (pc->needs_grad)
            pc->grad[int64_t(bi) * block + i] += n_.grad[int64_t(bi) * 2 * block + i];
          if (pz->needs_grad)
            pz->grad[int64_t(bi) * block + i] += n_.grad[(int64_t(bi) * 2 + 1) * block + i];
        }
    }));
    x = ag::relu(mix_(x));
    x = ag::relu(up1_(ag::upsample2x(x)));
    x = ag::relu(up2_(ag::upsample2x(x)));
    return ag::sigmoid(out_(x));
  }

  Var<T> reparameterize(const Var<T>& mu, const Var<T>& logvar, Rng& rng) const {
    Tensor<T> eps(mu.val().shape);
    for (auto& e : eps.v) e = T(rng.normal());
    Var<T> sigma = ag::exp_op(ag::scale(logvar, T(0.5)));
    return ag::add(mu, ag::mul(sigma, Var<T>::constant(eps)));
  }

  Image decode_image(const Tensor<T>& z_row, const Image& o_c) const {
    Tensor<T> oc = images_to_batch<T>({&o_c});
    Var<T> z = Var<T>::constant(z_row.reshaped({1, cfg.latent_dim}));
    return batch_to_image(decode(z, oc).val(), 0);
  }

  // z ~ N(0, I), decode against the conditioning frame; deterministic in seed
  std::vector<Image> sample_goals(const Image& o_c, int n, uint64_t seed) const {
    check(o_c.h == cfg.image_size && o_c.w == cfg.image_size,
          "cvae sample: conditioning image has wrong dimensions");
    std::vector<Image> out;
    for (int i = 0; i < n; ++i) {
      Rng rng(derive_seed(seed, uint64_t(i)));
      Tensor<T> z({1, cfg.latent_dim});
      for (auto& v : z.v) v = T(rng.normal());
      out.push_back(decode_image(z, o_c));
    }
    return out;
  }

 private:
  Conv2dLayer<T> cond1_, cond2_;
  Conv2dLayer<T> rec1_, rec2_;
  Dense<T> rec_fc_, z_fc_;
  Conv2dLayer<T> mix_, up1_, up2_, out_;
};

template <typename T>
struct CvaeElboTerms {
  T loss = 0, reconstruction = 0, kl = 0;
};

template <typename T>
struct CvaeStep {
  Var<T> loss, recon, kl;
};

// recon = per-batch-mean summed squared error; kl = per-batch-mean analytic KL
template <typename T>
CvaeStep<T> cvae_forward(const Cvae<T>& m, const Tensor<T>& o_c, const Tensor<T>& o_g,
                         Rng& rng, bool use_posterior_mean = false) {
  int bsz = o_c.shape[0];
  auto [mu, logvar] = m.posterior(o_g, o_c);
  Var<T> z = use_posterior_mean ? mu : m.reparameterize(mu, logvar, rng);
  Var<T> recon_img = m.decode(z, o_c);
  CvaeStep<T> out;
  out.recon = ag::scale(ag::sse_loss(recon_img, o_g), T(1) / T(bsz));
  out.kl = ag::scale(gaussian_kl(mu, logvar), T(1) / T(bsz));
  out.loss = ag::add(out.recon, ag::scale(out.kl, m.cfg.beta_kl));
  return out;
}

template <typename T>
CvaeElboTerms<T> cvae_elbo(const Cvae<T>& m, const Image& o_c, const Image& o_g, uint64_t seed) {
  Rng rng(derive_seed(seed, 0xe1b0));
  Tensor<T> xc = images_to_batch<T>({&o_c});
  Tensor<T> xg = images_to_batch<T>({&o_g});
  CvaeStep<T> s = cvae_forward(m, xc, xg, rng);
  return {s.loss.val()[0], s.recon.val()[0], s.kl.val()[0]};
}

template <typename T>
struct CvaeTrainResult {
  std::vector<TrainLogRow> log;  // step, loss, recon, kl
};

template <typename T>
CvaeTrainResult<T> train_cvae(Cvae<T>& m, const PairDataset& ds, uint64_t seed,
                              const std::function<void(int64_t)>& progress = {}) {
  check(!ds.pairs.empty(), "train_cvae: empty dataset");
  const auto& cfg = m.cfg;
  std::vector<int> train_idx = ds.train_indices();
  check(!train_idx.empty(), "train_cvae: empty training split");
  CvaeTrainResult<T> result;
  Adam<T> opt(cfg.lr);
  Rng rng(derive_seed(seed, 0xcae));
  for (int64_t step = 0; step < cfg.steps; ++step) {
    std::vector<const Image*> cs, gs;
    for (int b = 0; b < cfg.batch; ++b) {
      const auto& p = ds.pairs[size_t(train_idx[size_t(rng.uniform_int(int(train_idx.size())))])];
      cs.push_back(&p.o_c);
      gs.push_back(&p.o_g);
    }
    Tensor<T> xc = images_to_batch<T>(cs), xg = images_to_batch<T>(gs);
    CvaeStep<T> s = cvae_forward(m, xc, xg, rng);
    ag::backward(s.loss);
    opt.step(m.ps);
    if (step % cfg.log_every == 0 || step + 1 == cfg.steps)
      result.log.push_back({step, double(s.loss.val()[0]), double(s.recon.val()[0]),
                            double(s.kl.val()[0]), 0});
    if (progress) progress(step);
  }
  return result;
}

template <typename T>
Checkpoint cvae_to_checkpoint(const Cvae<T>& m, uint64_t config_hash) {
  Checkpoint ck;
  ck.payload = "cvae";
  ck.config_hash = config_hash;
  ck.meta["image_size"] = std::to_string(m.cfg.image_size);
  ck.meta["latent_dim"] = std::to_string(m.cfg.latent_dim);
  ck.meta["base_channels"] = std::to_string(m.cfg.base_channels);
  for (const auto& [name, t] : m.ps.state_dict()) {
    Tensor<float> ft(t.shape);
    for (int64_t i = 0; i < t.numel(); ++i) ft[i] = float(t[i]);
    ck.blobs["param." + name] = std::move(ft);
  }
  return ck;
}

template <typename T>
Cvae<T> cvae_from_checkpoint(const Checkpoint& ck) {
  check(ck.payload == "cvae", "cvae_from_checkpoint: wrong payload " + ck.payload);
  CvaeConfig<T> cfg;
  cfg.image_size = ck.meta_int("image_size");
  cfg.latent_dim = ck.meta_int("latent_dim");
  cfg.base_channels = ck.meta_int("base_channels");
  Cvae<T> m(cfg, 0);
  std::map<std::string, Tensor<T>> sd;
  for (const auto& [name, t] : ck.blobs) {
    if (name.rfind("param.", 0) != 0) continue;
    Tensor<T> tt(t.shape);
    for (int64_t i = 0; i < t.numel(); ++i) tt[i] = T(t[i]);
    sd[name.substr(6)] = std::move(tt);
  }
  m.ps.load_state(sd);
  return m;
}

}  // namespace afford
