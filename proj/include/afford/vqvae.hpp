#pragma once

#include "afford/checkpoint.hpp"
#include "afford/dataset.hpp"
#include "afford/nn.hpp"

namespace afford {

// Discrete image codec: strided conv encoder, nearest-neighbor channel-space
// quantization against a codebook updated by EMA, conv decoder. The two loss
// terms are reconstruction (straight-through to the encoder) and commitment;
// the codebook itself learns only through the EMA statistics.

struct LatentCode {
  int h = 0, w = 0;
  std::vector<int> idx;  // raster-scan order, values in [0, K)

  bool operator==(const LatentCode& o) const { return h == o.h && w == o.w && idx == o.idx; }

  std::vector<int> flat() const { return idx; }
};

template <typename T>
struct VqVaeConfig {
  int image_size = 32;
  int latent_size = 0;
  int codebook_size = 128;  // K
  int codebook_dim = 64;    // L
  int base_channels = 16;
  std::string codebook_init = "kmeans";
  T beta = T(1);
  T gamma = T(0.99);
  T count_floor = T(1e-5);
  T lr = T(5e-4);
  int batch = 32;
  int steps = 20000;
  int log_every = 200;
  int val_every = 2000;

  static VqVaeConfig from(const RunConfig& c) {
    VqVaeConfig v;
    v.image_size = c.geti("env.image_size");
    v.latent_size = c.geti("vqvae.latent_size");
    v.codebook_size = c.geti("vqvae.codebook_size");
    v.codebook_dim = c.geti("vqvae.codebook_dim");
    v.base_channels = c.geti("vqvae.base_channels");
    v.codebook_init = c.gets("vqvae.codebook_init");
    v.beta = T(c.getf("vqvae.beta"));
    v.gamma = T(c.getf("vqvae.gamma"));
    v.count_floor = T(c.getf("vqvae.count_floor"));
    v.lr = T(c.getf("vqvae.lr"));
    v.batch = c.geti("vqvae.batch");
    v.steps = c.geti("vqvae.steps");
    v.log_every = c.geti("vqvae.log_every");
    v.val_every = c.geti("vqvae.val_every");
    v.validate();
    return v;
  }

  void validate() const {
    check(codebook_size >= 2, "vqvae: codebook size must be >= 2");
    check(latent_size > 0 && image_size % latent_size == 0,
          "vqvae: latent size must divide image size");
    int ds = image_size / latent_size;
    check((ds & (ds - 1)) == 0 && ds >= 2, "vqvae: downsample factor must be a power of two");
    check(gamma >= T(0) && gamma < T(1), "vqvae: gamma must be in [0,1)");
    check(codebook_init == "kmeans" || codebook_init == "random",
          "vqvae: codebook_init must be kmeans or random");
  }

  int downsample() const { return image_size / latent_size; }
  int num_down() const {
    int ds = downsample(), k = 0;
    while (ds > 1) {
      ds >>= 1;
      ++k;
    }
    return k;
  }
  int seq_len() const { return latent_size * latent_size; }
};

template <typename T>
struct Codebook {
  Tensor<T> vectors;     // [K, L]
  Tensor<T> ema_counts;  // [K]
  Tensor<T> ema_sums;    // [K, L]

  Codebook() = default;
  Codebook(int k, int l, Rng& rng) {
    vectors = Tensor<T>::randn({k, l}, rng, T(1.0 / std::sqrt(double(l))));
    ema_counts = Tensor<T>::full({k}, T(1));
    ema_sums = vectors;  // consistent with counts = 1
  }
  int size() const { return vectors.rows(); }
  int dim() const { return vectors.cols(); }
};

// Nearest codebook vector per cell (exhaustive scan, ties to the lowest
// index). cells: [M, L]; returns indices and the quantized cells.
template <typename T>
std::pair<std::vector<int>, Tensor<T>> quantize_cells(const Tensor<T>& cells,
                                                      const Codebook<T>& cb) {
  int m = cells.rows(), l = cells.cols();
  check(l == cb.dim(), "quantize: cell dim does not match codebook");
  std::vector<int> idx(static_cast<size_t>(m), 0);
  Tensor<T> q({m, l});
  for (int i = 0; i < m; ++i) {
    const T* z = cells.data() + int64_t(i) * l;
    T best = std::numeric_limits<T>::max();
    int best_k = 0;
    for (int k = 0; k < cb.size(); ++k) {
      const T* e = cb.vectors.data() + int64_t(k) * l;
      T d = 0;
      for (int c = 0; c < l; ++c) d += (z[c] - e[c]) * (z[c] - e[c]);
      if (d < best) {
        best = d;
        best_k = k;
      }
    }
    idx[size_t(i)] = best_k;
    std::memcpy(q.data() + int64_t(i) * l, cb.vectors.data() + int64_t(best_k) * l,
                size_t(l) * sizeof(T));
  }
  return {idx, q};
}

// EMA codebook update from one batch of assignments:
//   N_i <- g*N_i + (1-g)*n_i,  m_i <- g*m_i + (1-g)*sum_i,
//   e_i <- m_i / max(N_i, floor).
// Entries with no assignments decay only.
template <typename T>
void ema_update(Codebook<T>& cb, const Tensor<T>& cells, const std::vector<int>& idx, T gamma,
                T count_floor) {
  int l = cb.dim(), k = cb.size();
  check(int(idx.size()) == cells.rows(), "ema_update: index count mismatch");
  std::vector<T> n(size_t(k), T(0));
  Tensor<T> sum({k, l});
  for (size_t i = 0; i < idx.size(); ++i) {
    int e = idx[i];
    n[size_t(e)] += T(1);
    const T* z = cells.data() + int64_t(i) * l;
    T* s = sum.data() + int64_t(e) * l;
    for (int c = 0; c < l; ++c) s[c] += z[c];
  }
  for (int e = 0; e < k; ++e) {
    cb.ema_counts[e] = gamma * cb.ema_counts[e] + (T(1) - gamma) * n[size_t(e)];
    T* m = cb.ema_sums.data() + int64_t(e) * l;
    const T* s = sum.data() + int64_t(e) * l;
    T denom = std::max(cb.ema_counts[e], count_floor);
    T* v = cb.vectors.data() + int64_t(e) * l;
    for (int c = 0; c < l; ++c) {
      m[c] = gamma * m[c] + (T(1) - gamma) * s[c];
      v[c] = m[c] / denom;
    }
  }
}

// ---- image/tensor layout helpers ----

template <typename T>
void image_into_chw(const Image& im, T* dst) {
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < im.h; ++y)
      for (int x = 0; x < im.w; ++x) *dst++ = T(im.at(y, x, c));
}

template <typename T>
Tensor<T> images_to_batch(const std::vector<const Image*>& ims) {
  check(!ims.empty(), "images_to_batch: empty");
  int h = ims[0]->h, w = ims[0]->w;
  Tensor<T> x({int(ims.size()), 3, h, w});
  for (size_t b = 0; b < ims.size(); ++b) {
    check(ims[b]->h == h && ims[b]->w == w, "images_to_batch: mixed dims");
    image_into_chw(*ims[b], x.data() + int64_t(b) * 3 * h * w);
  }
  return x;
}

template <typename T>
Image batch_to_image(const Tensor<T>& x, int b) {
  int h = x.shape[2], w = x.shape[3];
  Image im(h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        im.at(y, xx, c) = float(x[((int64_t(b) * 3 + c) * h + y) * w + xx]);
  return im;
}

// [B, L, h, w] channel-major grid -> [B*h*w, L] cell-major (raster order)
template <typename T>
Tensor<T> grid_to_cells(const Tensor<T>& g) {
  int b = g.shape[0], l = g.shape[1], h = g.shape[2], w = g.shape[3];
  Tensor<T> cells({b * h * w, l});
  for (int bi = 0; bi < b; ++bi)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        T* dst = cells.data() + (int64_t(bi) * h * w + int64_t(y) * w + x) * l;
        for (int c = 0; c < l; ++c) dst[c] = g[((int64_t(bi) * l + c) * h + y) * w + x];
      }
  return cells;
}

template <typename T>
Tensor<T> cells_to_grid(const Tensor<T>& cells, int b, int l, int h, int w) {
  Tensor<T> g({b, l, h, w});
  for (int bi = 0; bi < b; ++bi)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const T* src = cells.data() + (int64_t(bi) * h * w + int64_t(y) * w + x) * l;
        for (int c = 0; c < l; ++c) g[((int64_t(bi) * l + c) * h + y) * w + x] = src[c];
      }
  return g;
}

// ---- model ----

template <typename T>
struct ResBlock {
  Conv2dLayer<T> c1, c2;
  ResBlock() = default;
  ResBlock(ParamStore<T>& ps, const std::string& name, int ch, Rng& rng)
      : c1(ps, name + ".c1", ch, ch, 3, 1, 1, rng), c2(ps, name + ".c2", ch, ch, 3, 1, 1, rng) {}
  Var<T> operator()(const Var<T>& x) const {
    return ag::add(x, c2(ag::relu(c1(ag::relu(x)))));
  }
};

template <typename T>
class VqVae {
 public:
  VqVaeConfig<T> cfg;
  ParamStore<T> ps;
  Codebook<T> codebook;

  VqVae(const VqVaeConfig<T>& c, uint64_t seed) : cfg(c) {
    cfg.validate();
    Rng rng(derive_seed(seed, 0x70c));
    codebook = Codebook<T>(cfg.codebook_size, cfg.codebook_dim, rng);
    int nd = cfg.num_down();
    enc_stem_ = Conv2dLayer<T>(ps, "enc.stem", 3, cfg.base_channels, 3, 1, 1, rng);
    int ch_in = cfg.base_channels;
    for (int i = 0; i < nd; ++i) {
      int ch_out = cfg.base_channels << i;
      enc_down_.emplace_back(ps, "enc.down" + std::to_string(i), ch_in, ch_out, 3, 2, 1, rng);
      ch_in = ch_out;
    }
    width_ = ch_in;
    enc_res_[0] = ResBlock<T>(ps, "enc.res0", width_, rng);
    enc_res_[1] = ResBlock<T>(ps, "enc.res1", width_, rng);
    enc_proj_ = Conv2dLayer<T>(ps, "enc.proj", width_, cfg.codebook_dim, 1, 1, 0, rng);
    dec_proj_ = Conv2dLayer<T>(ps, "dec.proj", cfg.codebook_dim, width_, 1, 1, 0, rng);
    dec_res_[0] = ResBlock<T>(ps, "dec.res0", width_, rng);
    dec_res_[1] = ResBlock<T>(ps, "dec.res1", width_, rng);
    int ch = width_;
    for (int i = 0; i < nd; ++i) {
      int ch_out = std::max(cfg.base_channels, ch / 2);
      dec_up_.emplace_back(ps, "dec.up" + std::to_string(i), ch, ch_out, 3, 1, 1, rng);
      ch = ch_out;
    }
    // full-resolution head: 1-2 px sprite features need capacity after the
    // last upsample
    dec_head_ = Conv2dLayer<T>(ps, "dec.head", ch, 2 * cfg.base_channels, 3, 1, 1, rng);
    dec_out_ = Conv2dLayer<T>(ps, "dec.out", 2 * cfg.base_channels, 3, 3, 1, 1, rng);
  }

  // x: [B,3,H,W] -> continuous latent grid [B,L,h,w]
  Var<T> encode_batch(const Var<T>& x) const {
    check(x.val().shape[2] == cfg.image_size && x.val().shape[3] == cfg.image_size,
          "vqvae encode: image dimensions do not match the configured size");
    Var<T> h = ag::relu(enc_stem_(x));
    for (const auto& down : enc_down_) h = ag::relu(down(h));
    h = enc_res_[1](enc_res_[0](h));
    return enc_proj_(h);
  }

  // quantized grid [B,L,h,w] -> image [B,3,H,W] in (0,1)
  Var<T> decode_batch(const Var<T>& z) const {
    check(z.val().shape[2] == cfg.latent_size && z.val().shape[3] == cfg.latent_size,
          "vqvae decode: latent grid does not match the configured size");
    Var<T> h = dec_proj_(z);
    h = dec_res_[1](dec_res_[0](h));
    for (const auto& up : dec_up_) h = ag::relu(up(ag::upsample2x(h)));
    h = ag::relu(dec_head_(h));
    return ag::sigmoid(dec_out_(h));
  }

  // ---- frozen-checkpoint inference ----

  Tensor<T> encode_values(const Image& im) const {
    Var<T> x = Var<T>::constant(images_to_batch<T>({&im}));
    return encode_batch(x).val();
  }

  LatentCode encode_code(const Image& im) const {
    Tensor<T> cells = grid_to_cells(encode_values(im));
    auto [idx, q] = quantize_cells(cells, codebook);
    LatentCode code;
    code.h = cfg.latent_size;
    code.w = cfg.latent_size;
    code.idx = std::move(idx);
    return code;
  }

  Tensor<T> lookup_code(const LatentCode& code) const {
    check(code.h == cfg.latent_size && code.w == cfg.latent_size, "lookup: grid shape mismatch");
    int l = cfg.codebook_dim;
    Tensor<T> cells({code.h * code.w, l});
    for (size_t i = 0; i < code.idx.size(); ++i) {
      int k = code.idx[i];
      check(k >= 0 && k < cfg.codebook_size, "lookup: index out of range");
      std::memcpy(cells.data() + int64_t(i) * l, codebook.vectors.data() + int64_t(k) * l,
                  size_t(l) * sizeof(T));
    }
    return cells_to_grid(cells, 1, l, code.h, code.w);
  }

  Image decode_code(const LatentCode& code) const {
    Var<T> z = Var<T>::constant(lookup_code(code));
    return batch_to_image(decode_batch(z).val(), 0);
  }

  Image reconstruct(const Image& im) const { return decode_code(encode_code(im)); }

 private:
  Conv2dLayer<T> enc_stem_;
  std::vector<Conv2dLayer<T>> enc_down_;
  ResBlock<T> enc_res_[2];
  Conv2dLayer<T> enc_proj_;
  Conv2dLayer<T> dec_proj_;
  ResBlock<T> dec_res_[2];
  std::vector<Conv2dLayer<T>> dec_up_;
  Conv2dLayer<T> dec_head_;
  Conv2dLayer<T> dec_out_;
  int width_ = 0;
};

// ---- losses / training ----

template <typename T>
struct VqVaeLossTerms {
  T total = 0, reconstruction = 0, commitment = 0;
};

// Builds the full training graph for one batch. Returns the scalar loss Var
// (recon + beta*commit) plus the pieces needed for the EMA update and logs.
template <typename T>
struct VqVaeStep {
  Var<T> loss;
  Var<T> recon_loss, commit_loss;
  Var<T> z_e;
  Var<T> dec_in;  // straight-through node feeding the decoder
  Tensor<T> z_q;
  std::vector<int> indices;
};

template <typename T>
VqVaeStep<T> vqvae_forward(const VqVae<T>& model, const Tensor<T>& x, T beta) {
  VqVaeStep<T> out;
  Var<T> xin = Var<T>::constant(x);
  out.z_e = model.encode_batch(xin);
  Tensor<T> cells = grid_to_cells(out.z_e.val());
  auto [idx, qcells] = quantize_cells(cells, model.codebook);
  out.indices = std::move(idx);
  out.z_q = cells_to_grid(qcells, x.shape[0], model.cfg.codebook_dim, model.cfg.latent_size,
                          model.cfg.latent_size);
  out.dec_in = ag::ste_copy(out.z_e, out.z_q);
  Var<T> recon = model.decode_batch(out.dec_in);
  out.recon_loss = ag::mse_loss(recon, x);
  out.commit_loss = ag::mse_loss(out.z_e, out.z_q);
  out.loss = ag::add(out.recon_loss, ag::scale(out.commit_loss, beta));
  return out;
}

template <typename T>
VqVaeLossTerms<T> vqvae_loss(const VqVae<T>& model, const Image& im, T beta) {
  VqVaeStep<T> s = vqvae_forward(model, images_to_batch<T>({&im}), beta);
  return {s.loss.val()[0], s.recon_loss.val()[0], s.commit_loss.val()[0]};
}

struct TrainLogRow {
  int64_t step = 0;
  double loss = 0, term_a = 0, term_b = 0, extra = 0;
};

inline void write_train_log(const std::string& path, const std::string& header,
                            const std::vector<TrainLogRow>& rows) {
  std::ofstream f(path);
  check(f.good(), "cannot write log: " + path);
  f << header << "\n";
  for (const auto& r : rows)
    f << r.step << "\t" << r.loss << "\t" << r.term_a << "\t" << r.term_b << "\t" << r.extra
      << "\n";
}

// Seed the codebook with k-means++-style picks from encoded training cells.
// Dead entries never revive under the EMA rule, so starting the dictionary
// inside the encoder-output distribution is what keeps it populated.
template <typename T>
void init_codebook_from_data(VqVae<T>& model, const std::vector<const Image*>& images,
                             uint64_t seed) {
  Rng rng(derive_seed(seed, 0x4b11));
  int sample_images = std::min<int>(64, int(images.size()));
  std::vector<Tensor<T>> all_cells;
  for (int i = 0; i < sample_images; ++i) {
    const Image* im = images[size_t(rng.uniform_int(int(images.size())))];
    all_cells.push_back(grid_to_cells(model.encode_values(*im)));
  }
  int l = model.cfg.codebook_dim, k = model.cfg.codebook_size;
  // exact dedupe: identical background patches encode to identical cells
  std::set<std::vector<T>> seen;
  std::vector<std::vector<T>> unique;
  for (const auto& c : all_cells)
    for (int i = 0; i < c.rows(); ++i) {
      std::vector<T> row(c.data() + int64_t(i) * l, c.data() + int64_t(i + 1) * l);
      if (seen.insert(row).second) unique.push_back(std::move(row));
    }
  int total = int(unique.size());
  if (total < k) {
    // degenerate corpus: seed what exists, keep random init for the rest
    for (int e = 0; e < total; ++e)
      std::memcpy(model.codebook.vectors.data() + int64_t(e) * l, unique[size_t(e)].data(),
                  size_t(l) * sizeof(T));
    model.codebook.ema_sums = model.codebook.vectors;
    for (int e = 0; e < k; ++e) model.codebook.ema_counts[e] = T(1);
    return;
  }
  Tensor<T> cells({total, l});
  for (int i = 0; i < total; ++i)
    std::memcpy(cells.data() + int64_t(i) * l, unique[size_t(i)].data(), size_t(l) * sizeof(T));
  std::vector<T> d2(size_t(total), std::numeric_limits<T>::max());
  auto dist2 = [&](int cell, const T* center) {
    const T* z = cells.data() + int64_t(cell) * l;
    T d = 0;
    for (int c = 0; c < l; ++c) d += (z[c] - center[c]) * (z[c] - center[c]);
    return d;
  };
  int first = rng.uniform_int(total);
  for (int e = 0; e < k; ++e) {
    int pick = first;
    if (e > 0) {
      // sample proportional to squared distance from the chosen set
      T sum = 0;
      for (T d : d2) sum += d;
      if (sum <= T(0)) {
        pick = rng.uniform_int(total);  // fewer distinct cells than entries
      } else {
        T u = T(rng.uniform()) * sum;
        T acc = 0;
        pick = total - 1;
        for (int i = 0; i < total; ++i) {
          acc += d2[size_t(i)];
          if (u < acc) {
            pick = i;
            break;
          }
        }
      }
    }
    T* v = model.codebook.vectors.data() + int64_t(e) * l;
    std::memcpy(v, cells.data() + int64_t(pick) * l, size_t(l) * sizeof(T));
    for (int i = 0; i < total; ++i) d2[size_t(i)] = std::min(d2[size_t(i)], dist2(i, v));
  }
  model.codebook.ema_sums = model.codebook.vectors;
  for (int e = 0; e < k; ++e) model.codebook.ema_counts[e] = T(1);
}

template <typename T>
struct VqVaeTrainResult {
  std::vector<TrainLogRow> log;  // step, total, recon, commit | extra = codebook usage
  std::vector<TrainLogRow> val_log;
  double final_val_mse = -1;
  double initial_val_mse = -1;
};

// Collect pointers to every image in the dataset (both frames of each pair).
inline std::vector<const Image*> all_images(const PairDataset& ds,
                                            const std::vector<int>& indices) {
  std::vector<const Image*> out;
  for (int i : indices) {
    out.push_back(&ds.pairs[size_t(i)].o_c);
    out.push_back(&ds.pairs[size_t(i)].o_g);
  }
  return out;
}

template <typename T>
double vqvae_eval_mse(const VqVae<T>& model, const std::vector<const Image*>& images,
                      int max_images = 256) {
  int n = std::min<int>(int(images.size()), max_images);
  check(n > 0, "vqvae eval: no images");
  double total = 0;
  for (int i = 0; i < n; ++i) {
    VqVaeStep<T> s = vqvae_forward(model, images_to_batch<T>({images[size_t(i)]}), T(0));
    total += double(s.recon_loss.val()[0]);
  }
  return total / n;
}

template <typename T>
VqVaeTrainResult<T> train_vqvae(VqVae<T>& model, const PairDataset& ds, uint64_t seed,
                                const std::function<void(int64_t)>& progress = {}) {
  check(!ds.pairs.empty(), "train_vqvae: empty dataset");
  const auto& cfg = model.cfg;
  std::vector<const Image*> train_imgs = all_images(ds, ds.train_indices());
  std::vector<const Image*> val_imgs;
  for (int i : ds.val_ids) {
    val_imgs.push_back(&ds.pairs[size_t(i)].o_c);
    val_imgs.push_back(&ds.pairs[size_t(i)].o_g);
  }
  if (val_imgs.empty()) val_imgs = train_imgs;  // tiny runs: validate on train
  check(!train_imgs.empty(), "train_vqvae: empty training split");

  if (model.cfg.codebook_init == "kmeans")
    init_codebook_from_data(model, train_imgs, derive_seed(seed, 0x4b1));
  VqVaeTrainResult<T> result;
  result.initial_val_mse = vqvae_eval_mse(model, val_imgs);
  Adam<T> opt(cfg.lr);
  Rng rng(derive_seed(seed, 0x7a1));
  std::vector<const Image*> batch(size_t(cfg.batch));
  for (int64_t step = 0; step < cfg.steps; ++step) {
    for (auto& p : batch) p = train_imgs[size_t(rng.uniform_int(int(train_imgs.size())))];
    Tensor<T> x = images_to_batch<T>(batch);
    VqVaeStep<T> s = vqvae_forward(model, x, cfg.beta);
    ag::backward(s.loss);
    opt.step(model.ps);
    Tensor<T> cells = grid_to_cells(s.z_e.val());
    ema_update(model.codebook, cells, s.indices, cfg.gamma, cfg.count_floor);
    if (step % cfg.log_every == 0 || step + 1 == cfg.steps) {
      std::set<int> used(s.indices.begin(), s.indices.end());
      result.log.push_back({step, double(s.loss.val()[0]), double(s.recon_loss.val()[0]),
                            double(s.commit_loss.val()[0]),
                            double(used.size()) / cfg.codebook_size});
    }
    if (cfg.val_every > 0 && step > 0 && step % cfg.val_every == 0) {
      double v = vqvae_eval_mse(model, val_imgs);
      result.val_log.push_back({step, v, 0, 0, 0});
    }
    if (progress) progress(step);
  }
  result.final_val_mse = vqvae_eval_mse(model, val_imgs);
  result.val_log.push_back({cfg.steps, result.final_val_mse, 0, 0, 0});
  return result;
}

// ---- checkpointing ----

template <typename T>
Checkpoint vqvae_to_checkpoint(const VqVae<T>& model, uint64_t config_hash) {
  Checkpoint ck;
  ck.payload = "vqvae";
  ck.config_hash = config_hash;
  ck.meta["image_size"] = std::to_string(model.cfg.image_size);
  ck.meta["latent_size"] = std::to_string(model.cfg.latent_size);
  ck.meta["codebook_size"] = std::to_string(model.cfg.codebook_size);
  ck.meta["codebook_dim"] = std::to_string(model.cfg.codebook_dim);
  ck.meta["base_channels"] = std::to_string(model.cfg.base_channels);
  for (const auto& [name, t] : model.ps.state_dict()) {
    Tensor<float> ft(t.shape);
    for (int64_t i = 0; i < t.numel(); ++i) ft[i] = float(t[i]);
    ck.blobs["param." + name] = std::move(ft);
  }
  auto put = [&ck](const std::string& name, const auto& t) {
    Tensor<float> ft(t.shape);
    for (int64_t i = 0; i < t.numel(); ++i) ft[i] = float(t[i]);
    ck.blobs[name] = std::move(ft);
  };
  put("codebook.vectors", model.codebook.vectors);
  put("codebook.ema_counts", model.codebook.ema_counts);
  put("codebook.ema_sums", model.codebook.ema_sums);
  return ck;
}

template <typename T>
VqVae<T> vqvae_from_checkpoint(const Checkpoint& ck) {
  check(ck.payload == "vqvae", "vqvae_from_checkpoint: wrong payload " + ck.payload);
  VqVaeConfig<T> cfg;
  cfg.image_size = ck.meta_int("image_size");
  cfg.latent_size = ck.meta_int("latent_size");
  cfg.codebook_size = ck.meta_int("codebook_size");
  cfg.codebook_dim = ck.meta_int("codebook_dim");
  cfg.base_channels = ck.meta_int("base_channels");
  VqVae<T> model(cfg, 0);
  std::map<std::string, Tensor<T>> sd;
  for (const auto& [name, t] : ck.blobs) {
    if (name.rfind("param.", 0) != 0) continue;
    Tensor<T> tt(t.shape);
    for (int64_t i = 0; i < t.numel(); ++i) tt[i] = T(t[i]);
    sd[name.substr(6)] = std::move(tt);
  }
  model.ps.load_state(sd);
  auto get = [&ck](const std::string& name) {
    auto it = ck.blobs.find(name);
    check(it != ck.blobs.end(), "vqvae checkpoint missing blob: " + name);
    Tensor<T> tt(it->second.shape);
    for (int64_t i = 0; i < it->second.numel(); ++i) tt[i] = T(it->second[i]);
    return tt;
  };
  model.codebook.vectors = get("codebook.vectors");
  model.codebook.ema_counts = get("codebook.ema_counts");
  model.codebook.ema_sums = get("codebook.ema_sums");
  return model;
}

}  // namespace afford
