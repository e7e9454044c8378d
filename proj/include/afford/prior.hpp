#pragma once

#include "afford/vqvae.hpp"

namespace afford {

// Conditional autoregressive transformer over latent codes: p(z_g | z_c),
// generated token by token in raster-scan order under a causal mask. Two
// conditioning layouts: an encoder-decoder wiring (unmasked encoder over z_c,
// cross-attention in the decoder) and a prefix-concatenation ablation where
// [z_c, START, z_g...] runs through one causal decoder.

using TokenSequence = std::vector<int>;

template <typename T>
struct PriorConfig {
  int vocab = 128;   // = codebook size K
  int seq_len = 64;  // = h*w of the latent grid
  int heads = 2;
  int layers = 4;      // decoder layers
  int enc_layers = 2;  // conditioning encoder layers (encdec layout)
  int embed = 128;
  int ff = 512;
  std::string layout = "encdec";  // encdec | prefix
  T lr = T(2e-4);
  int batch = 32;
  int steps = 20000;
  T temperature = T(1);
  int top_k = 0;
  int log_every = 200;
  int val_every = 2000;

  static PriorConfig from(const RunConfig& c, int vocab, int seq_len) {
    PriorConfig p;
    p.vocab = vocab;
    p.seq_len = seq_len;
    p.heads = c.geti("prior.heads");
    p.layers = c.geti("prior.layers");
    p.enc_layers = c.geti("prior.enc_layers");
    p.embed = c.geti("prior.embed");
    p.ff = c.geti("prior.ff");
    p.layout = c.gets("prior.layout");
    p.lr = T(c.getf("prior.lr"));
    p.batch = c.geti("prior.batch");
    p.steps = c.geti("prior.steps");
    p.temperature = T(c.getf("prior.temperature"));
    p.top_k = c.geti("prior.top_k");
    p.log_every = c.geti("prior.log_every");
    p.val_every = c.geti("prior.val_every");
    p.validate();
    return p;
  }

  void validate() const {
    check(vocab >= 2 && seq_len >= 1, "prior: vocab and sequence length must be positive");
    check(embed % heads == 0, "prior: embed dim must be divisible by head count");
    check(layout == "encdec" || layout == "prefix", "prior: layout must be encdec or prefix");
  }
};

namespace priordetail {

template <typename T>
struct AttnBlock {
  LayerNormLayer<T> ln;
  Dense<T> wq, wk, wv, wo;
  AttnBlock() = default;
  AttnBlock(ParamStore<T>& ps, const std::string& name, int e, Rng& rng)
      : ln(ps, name + ".ln", e),
        wq(ps, name + ".wq", e, e, rng),
        wk(ps, name + ".wk", e, e, rng),
        wv(ps, name + ".wv", e, e, rng),
        wo(ps, name + ".wo", e, e, rng) {}

  // self-attention over x [B*S, E]; ctx = 0 -> causal, ctx >= S -> full
  Var<T> self(const Var<T>& x, int bsz, int s, int heads, int ctx) const {
    Var<T> h = ln(x);
    Var<T> att = attention_heads(wq(h), wk(h), wv(h), bsz, s, s, heads, ctx);
    return ag::add(x, wo(att));
  }
  // cross-attention: queries from x [B*Sq,E], keys/values from mem [B*Skv,E]
  Var<T> cross(const Var<T>& x, const Var<T>& mem, int bsz, int sq, int skv, int heads) const {
    Var<T> h = ln(x);
    Var<T> att = attention_heads(wq(h), wk(mem), wv(mem), bsz, sq, skv, heads, skv);
    return ag::add(x, wo(att));
  }
};

template <typename T>
struct FfBlock {
  LayerNormLayer<T> ln;
  Dense<T> f1, f2;
  FfBlock() = default;
  FfBlock(ParamStore<T>& ps, const std::string& name, int e, int ff, Rng& rng)
      : ln(ps, name + ".ln", e),
        f1(ps, name + ".f1", e, ff, rng),
        f2(ps, name + ".f2", ff, e, rng) {}
  Var<T> operator()(const Var<T>& x) const {
    return ag::add(x, f2(ag::relu(f1(ln(x)))));
  }
};

}  // namespace priordetail

template <typename T>
class Prior {
 public:
  PriorConfig<T> cfg;
  ParamStore<T> ps;

  Prior(const PriorConfig<T>& c, uint64_t seed) : cfg(c) {
    cfg.validate();
    Rng rng(derive_seed(seed, 0x9a17));
    int e = cfg.embed;
    int start_vocab = cfg.vocab + 1;  // learned start token = index vocab
    tok_cond_ = EmbeddingLayer<T>(ps, "emb.cond", cfg.vocab, e, rng);
    tok_tgt_ = EmbeddingLayer<T>(ps, "emb.tgt", start_vocab, e, rng);
    pos_cond_ = EmbeddingLayer<T>(ps, "emb.pos_cond", cfg.seq_len, e, rng);
    pos_tgt_ = EmbeddingLayer<T>(ps, "emb.pos_tgt", cfg.seq_len, e, rng);
    if (cfg.layout == "encdec") {
      for (int i = 0; i < cfg.enc_layers; ++i) {
        enc_attn_.emplace_back(ps, "enc" + std::to_string(i) + ".attn", e, rng);
        enc_ff_.emplace_back(ps, "enc" + std::to_string(i) + ".ff", e, cfg.ff, rng);
      }
      enc_ln_ = LayerNormLayer<T>(ps, "enc.ln", e);
    }
    for (int i = 0; i < cfg.layers; ++i) {
      dec_self_.emplace_back(ps, "dec" + std::to_string(i) + ".self", e, rng);
      if (cfg.layout == "encdec")
        dec_cross_.emplace_back(ps, "dec" + std::to_string(i) + ".cross", e, rng);
      dec_ff_.emplace_back(ps, "dec" + std::to_string(i) + ".ff", e, cfg.ff, rng);
    }
    dec_ln_ = LayerNormLayer<T>(ps, "dec.ln", e);
    out_ = Dense<T>(ps, "out", e, cfg.vocab, rng);
  }

  int start_token() const { return cfg.vocab; }

  // Teacher-forced logits for a batch: conditioning sequences (length S) and
  // decoder input sequences (arbitrary equal length <= S, starting with the
  // start token). Returns [B*T_in, vocab]; row i predicts goal position i.
  Var<T> logits_teacher(const std::vector<TokenSequence>& z_c,
                        const std::vector<TokenSequence>& tgt_in) const {
    int bsz = int(z_c.size());
    check(bsz > 0 && tgt_in.size() == z_c.size(), "prior: batch mismatch");
    int t_in = int(tgt_in[0].size());
    for (const auto& s : z_c)
      check(int(s.size()) == cfg.seq_len, "prior: conditioning length != S");
    for (const auto& s : tgt_in)
      check(int(s.size()) == t_in && t_in <= cfg.seq_len, "prior: prefix length invalid");

    if (cfg.layout == "prefix") return logits_prefix_layout(z_c, tgt_in);

    // encoder over z_c
    std::vector<int> cond_ids, cond_pos;
    for (const auto& s : z_c)
      for (int i = 0; i < cfg.seq_len; ++i) {
        check(s[size_t(i)] >= 0 && s[size_t(i)] < cfg.vocab, "prior: token out of vocabulary");
        cond_ids.push_back(s[size_t(i)]);
        cond_pos.push_back(i);
      }
    Var<T> enc = ag::add(tok_cond_(cond_ids), pos_cond_(cond_pos));
    for (size_t i = 0; i < enc_attn_.size(); ++i) {
      enc = enc_attn_[i].self(enc, bsz, cfg.seq_len, cfg.heads, cfg.seq_len);
      enc = enc_ff_[i](enc);
    }
    enc = enc_ln_(enc);

    // causal decoder with cross-attention
    std::vector<int> tgt_ids, tgt_pos;
    for (const auto& s : tgt_in)
      for (int i = 0; i < t_in; ++i) {
        check(s[size_t(i)] >= 0 && s[size_t(i)] <= cfg.vocab, "prior: token out of vocabulary");
        tgt_ids.push_back(s[size_t(i)]);
        tgt_pos.push_back(i);
      }
    Var<T> x = ag::add(tok_tgt_(tgt_ids), pos_tgt_(tgt_pos));
    for (size_t i = 0; i < dec_self_.size(); ++i) {
      x = dec_self_[i].self(x, bsz, t_in, cfg.heads, 0);
      x = dec_cross_[i].cross(x, enc, bsz, t_in, cfg.seq_len, cfg.heads);
      x = dec_ff_[i](x);
    }
    return out_(dec_ln_(x));
  }

  // Spec-level single-sequence call: logits for goal positions 0..len(prefix)
  // given z_c and an already-generated prefix.
  Tensor<T> logits(const TokenSequence& z_c, const TokenSequence& z_g_prefix) const {
    check(int(z_g_prefix.size()) <= cfg.seq_len, "prior: prefix longer than S");
    TokenSequence tgt_in;
    tgt_in.push_back(start_token());
    for (int t : z_g_prefix) tgt_in.push_back(t);
    if (int(tgt_in.size()) > cfg.seq_len) tgt_in.resize(size_t(cfg.seq_len));
    return logits_teacher({z_c}, {tgt_in}).val();
  }

  // Sum of per-position cross entropies under teacher forcing.
  double nll(const TokenSequence& z_c, const TokenSequence& z_g) const {
    check(int(z_g.size()) == cfg.seq_len, "prior nll: goal length != S");
    TokenSequence tgt_in;
    tgt_in.push_back(start_token());
    for (int i = 0; i + 1 < cfg.seq_len; ++i) tgt_in.push_back(z_g[size_t(i)]);
    Var<T> lg = logits_teacher({z_c}, {tgt_in});
    Var<T> ce = ag::ce_rows(lg, z_g);
    double total = 0;
    for (int i = 0; i < cfg.seq_len; ++i) total += double(ce.val()[i]);
    return total;
  }

  // Draws S tokens left to right. temperature == 0 is greedy argmax.
  TokenSequence sample(const TokenSequence& z_c, T temperature, int top_k,
                       uint64_t seed) const {
    check(temperature >= T(0), "prior sample: temperature must be >= 0");
    Rng rng(derive_seed(seed, 0x5a3));
    TokenSequence out;
    for (int t = 0; t < cfg.seq_len; ++t) {
      Tensor<T> lg = logits(z_c, out);
      const T* row = lg.data() + int64_t(t) * cfg.vocab;
      int tok;
      if (temperature == T(0)) {
        tok = 0;
        for (int k = 1; k < cfg.vocab; ++k)
          if (row[k] > row[tok]) tok = k;
      } else {
        tok = draw_token(row, temperature, top_k, rng);
      }
      out.push_back(tok);
    }
    return out;
  }

  int draw_token(const T* row, T temperature, int top_k, Rng& rng) const {
    std::vector<double> logit(size_t(cfg.vocab));
    for (int k = 0; k < cfg.vocab; ++k) logit[size_t(k)] = double(row[k]) / double(temperature);
    std::vector<int> keep(size_t(cfg.vocab));
    for (int k = 0; k < cfg.vocab; ++k) keep[size_t(k)] = k;
    if (top_k > 0 && top_k < cfg.vocab) {
      std::stable_sort(keep.begin(), keep.end(),
                       [&](int a, int b) { return logit[size_t(a)] > logit[size_t(b)]; });
      keep.resize(size_t(top_k));
      std::sort(keep.begin(), keep.end());
    }
    double mx = -1e300;
    for (int k : keep) mx = std::max(mx, logit[size_t(k)]);
    double sum = 0;
    std::vector<double> p(keep.size());
    for (size_t i = 0; i < keep.size(); ++i) {
      p[i] = std::exp(logit[size_t(keep[i])] - mx);
      sum += p[i];
    }
    double u = rng.uniform() * sum;
    double acc = 0;
    for (size_t i = 0; i < keep.size(); ++i) {
      acc += p[i];
      if (u < acc) return keep[i];
    }
    return keep.back();
  }

 private:
  Var<T> logits_prefix_layout(const std::vector<TokenSequence>& z_c,
                              const std::vector<TokenSequence>& tgt_in) const {
    int bsz = int(z_c.size());
    int t_in = int(tgt_in[0].size());
    int total = cfg.seq_len + t_in;
    // conditioning tokens use the cond embeddings, goal tokens the tgt ones;
    // assembled per-batch into one causal sequence
    std::vector<int> cond_ids, cond_pos, goal_ids, goal_pos;
    for (int b = 0; b < bsz; ++b) {
      for (int i = 0; i < cfg.seq_len; ++i) {
        cond_ids.push_back(z_c[size_t(b)][size_t(i)]);
        cond_pos.push_back(i);
      }
      for (int i = 0; i < t_in; ++i) {
        goal_ids.push_back(tgt_in[size_t(b)][size_t(i)]);
        goal_pos.push_back(i);
      }
    }
    Var<T> ce = ag::add(tok_cond_(cond_ids), pos_cond_(cond_pos));
    Var<T> ge = ag::add(tok_tgt_(goal_ids), pos_tgt_(goal_pos));
    // interleave per sequence: [cond_b | goal_b]
    int e = cfg.embed;
    Tensor<T> x({bsz * total, e});
    for (int b = 0; b < bsz; ++b) {
      std::memcpy(x.data() + int64_t(b) * total * e,
                  ce.val().data() + int64_t(b) * cfg.seq_len * e,
                  size_t(cfg.seq_len) * e * sizeof(T));
      std::memcpy(x.data() + (int64_t(b) * total + cfg.seq_len) * e,
                  ge.val().data() + int64_t(b) * t_in * e, size_t(t_in) * e * sizeof(T));
    }
    auto pc = ce.node(), pg = ge.node();
    int s = cfg.seq_len;
    Var<T> xin(ag::make_node<T>(std::move(x), {pc, pg}, [pc, pg, bsz, total, s, t_in,
                                                         e](Node<T>& n_) {
      pc->ensure_grad();
      pg->ensure_grad();
      for (int b = 0; b < bsz; ++b) {
        for (int64_t i = 0; i < int64_t(s) * e; ++i)
          pc->grad[int64_t(b) * s * e + i] += n_.grad[int64_t(b) * total * e + i];
        for (int64_t i = 0; i < int64_t(t_in) * e; ++i)
          pg->grad[int64_t(b) * t_in * e + i] +=
              n_.grad[(int64_t(b) * total + s) * e + i];
      }
    }));
    Var<T> h = xin;
    for (size_t i = 0; i < dec_self_.size(); ++i) {
      h = dec_self_[i].self(h, bsz, total, cfg.heads, 0);
      h = dec_ff_[i](h);
    }
    h = dec_ln_(h);
    // keep only the goal-region rows, stacked back to [B*t_in, E]
    std::vector<Var<T>> parts;
    for (int b = 0; b < bsz; ++b)
      parts.push_back(ag::slice_rows(h, b * total + cfg.seq_len, t_in));
    Var<T> stacked = parts.size() == 1 ? parts[0] : stack_rows(parts);
    return out_(stacked);
  }

  static Var<T> stack_rows(const std::vector<Var<T>>& parts) {
    int rows = 0, cols = parts[0].val().cols();
    for (const auto& p : parts) rows += p.val().rows();
    Tensor<T> out({rows, cols});
    std::vector<std::shared_ptr<Node<T>>> ps;
    int off = 0;
    std::vector<int> offs, counts;
    for (const auto& p : parts) {
      int r = p.val().rows();
      std::memcpy(out.data() + int64_t(off) * cols, p.val().data(),
                  size_t(r) * cols * sizeof(T));
      ps.push_back(p.node());
      offs.push_back(off);
      counts.push_back(r);
      off += r;
    }
    return Var<T>(ag::make_node<T>(std::move(out), ps, [ps, offs, counts, cols](Node<T>& n_) {
      for (size_t k = 0; k < ps.size(); ++k) {
        if (!ps[k]->needs_grad) continue;
        ps[k]->ensure_grad();
        for (int64_t i = 0; i < int64_t(counts[k]) * cols; ++i)
          ps[k]->grad[i] += n_.grad[int64_t(offs[k]) * cols + i];
      }
    }));
  }

  EmbeddingLayer<T> tok_cond_, tok_tgt_, pos_cond_, pos_tgt_;
  std::vector<priordetail::AttnBlock<T>> enc_attn_;
  std::vector<priordetail::FfBlock<T>> enc_ff_;
  LayerNormLayer<T> enc_ln_;
  std::vector<priordetail::AttnBlock<T>> dec_self_, dec_cross_;
  std::vector<priordetail::FfBlock<T>> dec_ff_;
  LayerNormLayer<T> dec_ln_;
  Dense<T> out_;
};

// ---- encoded-pair dataset ----

struct EncodedPair {
  TokenSequence z_c, z_g;
};

struct EncodedDataset {
  std::vector<EncodedPair> pairs;
  int vocab = 0, seq_len = 0;
  uint64_t vqvae_hash_c = 0, vqvae_hash_g = 0;  // checkpoint identity per side
  std::vector<int> val_ids;
};

template <typename T>
EncodedDataset encode_dataset(const VqVae<T>& model, const PairDataset& ds,
                              uint64_t vqvae_hash) {
  EncodedDataset out;
  out.vocab = model.cfg.codebook_size;
  out.seq_len = model.cfg.seq_len();
  out.vqvae_hash_c = out.vqvae_hash_g = vqvae_hash;
  out.val_ids = ds.val_ids;
  out.pairs.reserve(ds.pairs.size());
  for (const auto& p : ds.pairs) {
    EncodedPair e;
    e.z_c = model.encode_code(p.o_c).idx;
    e.z_g = model.encode_code(p.o_g).idx;
    out.pairs.push_back(std::move(e));
  }
  return out;
}

// ---- training ----

template <typename T>
struct PriorTrainResult {
  std::vector<TrainLogRow> log;      // step, train nll/token
  std::vector<TrainLogRow> val_log;  // step, val nll/token
  double final_val_nll_per_token = -1;
};

template <typename T>
double prior_eval_nll(const Prior<T>& model, const EncodedDataset& ds,
                      const std::vector<int>& indices, int max_pairs = 64) {
  int n = std::min<int>(int(indices.size()), max_pairs);
  check(n > 0, "prior eval: no pairs");
  double total = 0;
  for (int i = 0; i < n; ++i) {
    const auto& p = ds.pairs[size_t(indices[size_t(i)])];
    total += model.nll(p.z_c, p.z_g);
  }
  return total / (double(n) * model.cfg.seq_len);
}

template <typename T>
PriorTrainResult<T> train_prior(Prior<T>& model, const EncodedDataset& ds, uint64_t seed,
                                const std::function<void(int64_t)>& progress = {}) {
  check(!ds.pairs.empty(), "train_prior: empty dataset");
  check(ds.vqvae_hash_c == ds.vqvae_hash_g,
        "train_prior: z_c and z_g were encoded by different vqvae checkpoints");
  check(ds.vocab == model.cfg.vocab && ds.seq_len == model.cfg.seq_len,
        "train_prior: dataset token space does not match the model");
  const auto& cfg = model.cfg;
  std::vector<int> train_idx, val_idx;
  {
    std::vector<char> is_val(ds.pairs.size(), 0);
    for (int i : ds.val_ids)
      if (i >= 0 && i < int(ds.pairs.size())) is_val[size_t(i)] = 1;
    for (size_t i = 0; i < ds.pairs.size(); ++i)
      (is_val[i] ? val_idx : train_idx).push_back(int(i));
  }
  if (val_idx.empty()) val_idx = train_idx;
  check(!train_idx.empty(), "train_prior: empty training split");

  PriorTrainResult<T> result;
  Adam<T> opt(cfg.lr);
  Rng rng(derive_seed(seed, 0x9b2));
  for (int64_t step = 0; step < cfg.steps; ++step) {
    std::vector<TokenSequence> zc(size_t(cfg.batch)), tgt(size_t(cfg.batch));
    std::vector<int> targets;
    targets.reserve(size_t(cfg.batch) * cfg.seq_len);
    for (int b = 0; b < cfg.batch; ++b) {
      const auto& p = ds.pairs[size_t(train_idx[size_t(rng.uniform_int(int(train_idx.size())))])];
      zc[size_t(b)] = p.z_c;
      TokenSequence in;
      in.push_back(model.start_token());
      for (int i = 0; i + 1 < cfg.seq_len; ++i) in.push_back(p.z_g[size_t(i)]);
      tgt[size_t(b)] = std::move(in);
      for (int i = 0; i < cfg.seq_len; ++i) targets.push_back(p.z_g[size_t(i)]);
    }
    Var<T> lg = model.logits_teacher(zc, tgt);
    Var<T> ce = ag::ce_rows(lg, targets);
    Var<T> loss = ag::mean_all(ce);  // nll per token
    ag::backward(loss);
    opt.step(model.ps);
    if (step % cfg.log_every == 0 || step + 1 == cfg.steps)
      result.log.push_back({step, double(loss.val()[0]), 0, 0, 0});
    if (cfg.val_every > 0 && step > 0 && step % cfg.val_every == 0)
      result.val_log.push_back({step, prior_eval_nll(model, ds, val_idx), 0, 0, 0});
    if (progress) progress(step);
  }
  result.final_val_nll_per_token = prior_eval_nll(model, ds, val_idx);
  result.val_log.push_back({cfg.steps, result.final_val_nll_per_token, 0, 0, 0});
  return result;
}

// ---- checkpointing ----

template <typename T>
Checkpoint prior_to_checkpoint(const Prior<T>& model, uint64_t config_hash,
                               uint64_t vqvae_hash) {
  Checkpoint ck;
  ck.payload = "prior";
  ck.config_hash = config_hash;
  ck.dep_hash = vqvae_hash;
  ck.meta["vocab"] = std::to_string(model.cfg.vocab);
  ck.meta["seq_len"] = std::to_string(model.cfg.seq_len);
  ck.meta["heads"] = std::to_string(model.cfg.heads);
  ck.meta["layers"] = std::to_string(model.cfg.layers);
  ck.meta["enc_layers"] = std::to_string(model.cfg.enc_layers);
  ck.meta["embed"] = std::to_string(model.cfg.embed);
  ck.meta["ff"] = std::to_string(model.cfg.ff);
  ck.meta["layout"] = model.cfg.layout;
  for (const auto& [name, t] : model.ps.state_dict()) {
    Tensor<float> ft(t.shape);
    for (int64_t i = 0; i < t.numel(); ++i) ft[i] = float(t[i]);
    ck.blobs["param." + name] = std::move(ft);
  }
  return ck;
}

template <typename T>
Prior<T> prior_from_checkpoint(const Checkpoint& ck) {
  check(ck.payload == "prior", "prior_from_checkpoint: wrong payload " + ck.payload);
  PriorConfig<T> cfg;
  cfg.vocab = ck.meta_int("vocab");
  cfg.seq_len = ck.meta_int("seq_len");
  cfg.heads = ck.meta_int("heads");
  cfg.layers = ck.meta_int("layers");
  cfg.enc_layers = ck.meta_int("enc_layers");
  cfg.embed = ck.meta_int("embed");
  cfg.ff = ck.meta_int("ff");
  cfg.layout = ck.meta_at("layout");
  Prior<T> model(cfg, 0);
  std::map<std::string, Tensor<T>> sd;
  for (const auto& [name, t] : ck.blobs) {
    if (name.rfind("param.", 0) != 0) continue;
    Tensor<T> tt(t.shape);
    for (int64_t i = 0; i < t.numel(); ++i) tt[i] = T(t[i]);
    sd[name.substr(6)] = std::move(tt);
  }
  model.ps.load_state(sd);
  return model;
}

}  // namespace afford
