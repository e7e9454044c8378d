#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "afford/prior.hpp"

using namespace afford;

namespace {

template <typename T>
PriorConfig<T> tiny_cfg(const std::string& layout = "encdec") {
  PriorConfig<T> c;
  c.vocab = 8;
  c.seq_len = 6;
  c.heads = 2;
  c.layers = 2;
  c.enc_layers = 1;
  c.embed = 16;
  c.ff = 32;
  c.layout = layout;
  return c;
}

TokenSequence random_seq(int len, int vocab, Rng& rng) {
  TokenSequence s;
  for (int i = 0; i < len; ++i) s.push_back(rng.uniform_int(vocab));
  return s;
}

std::vector<double> softmax_row(const Tensor<float>& lg, int row) {
  int v = lg.cols();
  double mx = lg.at2(row, 0);
  for (int k = 1; k < v; ++k) mx = std::max(mx, double(lg.at2(row, k)));
  std::vector<double> p(static_cast<size_t>(v), 0.0);
  double sum = 0;
  for (int k = 0; k < v; ++k) {
    p[size_t(k)] = std::exp(double(lg.at2(row, k)) - mx);
    sum += p[size_t(k)];
  }
  for (auto& x : p) x /= sum;
  return p;
}

}  // namespace

TEST_CASE("logits rows are normalized distributions after softmax") {
  for (const char* layout : {"encdec", "prefix"}) {
    Prior<float> m(tiny_cfg<float>(layout), 1);
    Rng rng(2);
    TokenSequence zc = random_seq(6, 8, rng);
    TokenSequence prefix = random_seq(3, 8, rng);
    Tensor<float> lg = m.logits(zc, prefix);
    REQUIRE(lg.rows() == 4);  // start + 3 prefix tokens
    for (int r = 0; r < lg.rows(); ++r) {
      auto p = softmax_row(lg, r);
      double sum = 0;
      for (double x : p) sum += x;
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("causality: goal perturbations only reach later positions") {
  for (const char* layout : {"encdec", "prefix"}) {
    CAPTURE(layout);
    Prior<float> m(tiny_cfg<float>(layout), 3);
    Rng rng(7);
    int s = m.cfg.seq_len, v = m.cfg.vocab;
    for (int probe = 0; probe < 40; ++probe) {
      TokenSequence zc = random_seq(s, v, rng);
      TokenSequence zg = random_seq(s, v, rng);
      int j = rng.uniform_int(s - 1);  // perturb position j, watch rows <= j
      TokenSequence zg2 = zg;
      int delta = 1 + rng.uniform_int(v - 1);
      zg2[size_t(j)] = (zg2[size_t(j)] + delta) % v;

      Tensor<float> a = m.logits(zc, zg);
      Tensor<float> b = m.logits(zc, zg2);
      double pre_diff = 0, post_diff = 0;
      for (int r = 0; r < s; ++r)
        for (int k = 0; k < v; ++k) {
          double d = std::abs(double(a.at2(r, k)) - double(b.at2(r, k)));
          if (r <= j)
            pre_diff = std::max(pre_diff, d);
          else
            post_diff = std::max(post_diff, d);
        }
      CHECK(pre_diff <= 1e-6);
      CHECK(post_diff > 0);
    }
  }
}

TEST_CASE("conditioning reach: perturbing z_c changes logits at position 0") {
  for (const char* layout : {"encdec", "prefix"}) {
    CAPTURE(layout);
    Prior<float> m(tiny_cfg<float>(layout), 5);
    Rng rng(11);
    int s = m.cfg.seq_len, v = m.cfg.vocab;
    TokenSequence zc = random_seq(s, v, rng);
    TokenSequence zc2 = zc;
    zc2[3] = (zc2[3] + 1) % v;
    Tensor<float> a = m.logits(zc, {});
    Tensor<float> b = m.logits(zc2, {});
    double diff = 0;
    for (int k = 0; k < v; ++k) diff = std::max(diff, std::abs(double(a.at2(0, k)) - double(b.at2(0, k))));
    CHECK(diff > 0);
  }
}

TEST_CASE("nll: uniform-logit model gives exactly S*ln(K), one-hot gives ~0") {
  Prior<double> m(tiny_cfg<double>(), 9);
  // zero the output projection -> identical logits everywhere
  for (auto& e : m.ps.entries)
    if (e.name == "out.w" || e.name == "out.b")
      for (auto& x : e.v.mutable_val().v) x = 0;
  Rng rng(13);
  TokenSequence zc = random_seq(6, 8, rng), zg = random_seq(6, 8, rng);
  double expect = 6 * std::log(8.0);
  CHECK(std::abs(m.nll(zc, zg) - expect) < 1e-9);

  // saturated bias on the true token -> probability ~1 at every position
  TokenSequence ones(6, 3);
  for (auto& e : m.ps.entries)
    if (e.name == "out.b") e.v.mutable_val()[3] = 40.0;
  CHECK(m.nll(zc, ones) < 1e-6);
}

TEST_CASE("teacher-forced nll equals the sum of sequential per-step nll") {
  for (const char* layout : {"encdec", "prefix"}) {
    CAPTURE(layout);
    Prior<float> m(tiny_cfg<float>(layout), 17);
    Rng rng(19);
    int s = m.cfg.seq_len, v = m.cfg.vocab;
    TokenSequence zc = random_seq(s, v, rng), zg = random_seq(s, v, rng);
    double teacher = m.nll(zc, zg);
    double sequential = 0;
    for (int t = 0; t < s; ++t) {
      TokenSequence prefix(zg.begin(), zg.begin() + t);
      Tensor<float> lg = m.logits(zc, prefix);
      auto p = softmax_row(lg, t);
      sequential += -std::log(p[size_t(zg[size_t(t)])]);
    }
    CHECK(std::abs(teacher - sequential) < 1e-5);
  }
}

TEST_CASE("sampling: determinism, greedy equals argmax decoding") {
  for (const char* layout : {"encdec", "prefix"}) {
    CAPTURE(layout);
    Prior<float> m(tiny_cfg<float>(layout), 23);
    Rng rng(29);
    TokenSequence zc = random_seq(6, 8, rng);
    TokenSequence a = m.sample(zc, 1.0f, 0, 99);
    TokenSequence b = m.sample(zc, 1.0f, 0, 99);
    CHECK(a == b);
    TokenSequence c = m.sample(zc, 1.0f, 0, 100);
    CHECK(a != c);  // different stream

    TokenSequence greedy = m.sample(zc, 0.f, 0, 1);
    for (int t = 0; t < 6; ++t) {
      TokenSequence prefix(greedy.begin(), greedy.begin() + t);
      Tensor<float> lg = m.logits(zc, prefix);
      int arg = 0;
      for (int k = 1; k < 8; ++k)
        if (lg.at2(t, k) > lg.at2(t, arg)) arg = k;
      CHECK(greedy[size_t(t)] == arg);
    }
  }
}

TEST_CASE("sampling matches enumerated chain probabilities on a 2-token toy model") {
  PriorConfig<float> cfg = tiny_cfg<float>();
  cfg.vocab = 2;
  cfg.seq_len = 2;
  cfg.heads = 1;
  cfg.layers = 1;
  cfg.enc_layers = 1;
  cfg.embed = 8;
  cfg.ff = 16;
  Prior<float> m(cfg, 31);
  TokenSequence zc = {1, 0};

  // enumerate p(t0, t1) through the model's own conditionals
  double chain[2][2];
  for (int t0 = 0; t0 < 2; ++t0) {
    Tensor<float> l0 = m.logits(zc, {});
    auto p0 = softmax_row(l0, 0);
    Tensor<float> l1 = m.logits(zc, {t0});
    auto p1 = softmax_row(l1, 1);
    for (int t1 = 0; t1 < 2; ++t1) chain[t0][t1] = p0[size_t(t0)] * p1[size_t(t1)];
  }
  double total = chain[0][0] + chain[0][1] + chain[1][0] + chain[1][1];
  CHECK(std::abs(total - 1.0) < 1e-6);

  const int n = 4000;
  int counts[2][2] = {{0, 0}, {0, 0}};
  for (int i = 0; i < n; ++i) {
    TokenSequence s = m.sample(zc, 1.0f, 0, uint64_t(i));
    counts[s[0]][s[1]]++;
  }
  for (int t0 = 0; t0 < 2; ++t0)
    for (int t1 = 0; t1 < 2; ++t1) {
      double p = chain[t0][t1];
      double freq = double(counts[t0][t1]) / n;
      double sigma = std::sqrt(p * (1 - p) / n);
      CHECK(std::abs(freq - p) <= 3 * sigma + 1e-12);
    }
}

TEST_CASE("top-k truncation restricts samples to the k most likely tokens") {
  Prior<float> m(tiny_cfg<float>(), 37);
  Rng rng(41);
  TokenSequence zc = random_seq(6, 8, rng);
  for (int t = 0; t < 50; ++t) {
    TokenSequence s = m.sample(zc, 1.0f, 2, uint64_t(t));
    // verify every drawn token is within the top-2 of its conditional
    for (int i = 0; i < 6; ++i) {
      TokenSequence prefix(s.begin(), s.begin() + i);
      Tensor<float> lg = m.logits(zc, prefix);
      std::vector<int> order = {0, 1, 2, 3, 4, 5, 6, 7};
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return lg.at2(i, a) > lg.at2(i, b); });
      CHECK((s[size_t(i)] == order[0] || s[size_t(i)] == order[1]));
    }
  }
}

TEST_CASE("training memorizes a 10-pair dataset (per-token nll < 0.1)") {
  PriorConfig<float> cfg = tiny_cfg<float>();
  cfg.vocab = 12;
  cfg.seq_len = 8;
  cfg.embed = 32;
  cfg.ff = 64;
  cfg.steps = 900;
  cfg.batch = 10;
  cfg.lr = 3e-3f;
  cfg.log_every = 100;
  cfg.val_every = 0;
  Prior<float> m(cfg, 43);
  EncodedDataset ds;
  ds.vocab = cfg.vocab;
  ds.seq_len = cfg.seq_len;
  Rng rng(47);
  for (int i = 0; i < 10; ++i)
    ds.pairs.push_back({random_seq(8, 12, rng), random_seq(8, 12, rng)});
  PriorTrainResult<float> r = train_prior(m, ds, 51);
  CHECK(r.final_val_nll_per_token < 0.1);
}

TEST_CASE("train_prior rejects mixed vqvae encodings") {
  Prior<float> m(tiny_cfg<float>(), 53);
  EncodedDataset ds;
  ds.vocab = 8;
  ds.seq_len = 6;
  ds.vqvae_hash_c = 1;
  ds.vqvae_hash_g = 2;
  ds.pairs.push_back({TokenSequence(6, 0), TokenSequence(6, 1)});
  CHECK_THROWS_WITH_AS(train_prior(m, ds, 1), doctest::Contains("different vqvae"), Error);
}

TEST_CASE("prior checkpoint round-trips inference exactly") {
  namespace fs = std::filesystem;
  Prior<float> m(tiny_cfg<float>(), 59);
  Rng rng(61);
  TokenSequence zc = random_seq(6, 8, rng);
  TokenSequence s1 = m.sample(zc, 1.0f, 0, 7);
  double n1 = m.nll(zc, s1);

  fs::path p = fs::temp_directory_path() / "afford_prior.ckpt";
  Checkpoint ck = prior_to_checkpoint(m, 0xAA, 0xBB);
  save_checkpoint(p.string(), ck);
  Checkpoint back = load_checkpoint_as(p.string(), "prior");
  CHECK(back.dep_hash == 0xBB);
  Prior<float> m2 = prior_from_checkpoint<float>(back);
  CHECK(m2.sample(zc, 1.0f, 0, 7) == s1);
  CHECK(m2.nll(zc, s1) == doctest::Approx(n1).epsilon(1e-9));
}
