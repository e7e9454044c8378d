#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "afford/dataset.hpp"

using namespace afford;
namespace fs = std::filesystem;

namespace {

EnvConfig desk_cfg() { return EnvConfig::from(RunConfig::defaults()); }

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("afford_data_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("generate_pairs: n=0 gives an empty dataset that persists") {
  EnvConfig cfg = desk_cfg();
  PairDataset ds = generate_pairs(cfg, 0, BehaviorMix{}, 5);
  CHECK(ds.pairs.empty());
  auto dir = temp_dir("empty");
  save_dataset(dir.string(), ds);
  PairDataset back = load_dataset(dir.string());
  CHECK(back.pairs.empty());
  CHECK(back.seed == 5);
}

TEST_CASE("generate_pairs: deterministic in seed") {
  EnvConfig cfg = desk_cfg();
  PairDataset a = generate_pairs(cfg, 100, BehaviorMix{}, 5);
  PairDataset b = generate_pairs(cfg, 100, BehaviorMix{}, 5);
  CHECK(a.content_hash() == b.content_hash());
  PairDataset c = generate_pairs(cfg, 100, BehaviorMix{}, 6);
  CHECK(a.content_hash() != c.content_hash());
}

TEST_CASE("generate_pairs: pure-push mix moves exactly one object, no stacking") {
  EnvConfig cfg = desk_cfg();
  BehaviorMix mix;
  mix.push = 1.0;
  mix.pick = mix.stack = mix.reorient = 0.0;
  PairDataset ds = generate_pairs(cfg, 60, mix, 11);
  double px = 1.0 / (cfg.image_size - 1);
  for (const auto& pair : ds.pairs) {
    ParsedScene pc = parse(pair.o_c, cfg), pg = parse(pair.o_g, cfg);
    REQUIRE_FALSE(pc.unparseable);
    REQUIRE_FALSE(pg.unparseable);
    REQUIRE(pc.detections.size() == pg.detections.size());
    int moved = 0;
    for (const auto& dc : pc.detections) {
      const Detection* match = nullptr;
      for (const auto& dg : pg.detections)
        if (dg.color == dc.color && dg.shape == dc.shape) match = &dg;
      REQUIRE(match != nullptr);
      CHECK(match->level == dc.level);  // stack heights unchanged
      if (envdetail::dist2d(match->x, match->y, dc.x, dc.y) > px + 1e-9) ++moved;
    }
    CHECK(moved == 1);
  }
}

TEST_CASE("generate_pairs: pairs parse plausibly with the multiset preserved") {
  EnvConfig cfg = desk_cfg();
  PairDataset ds = generate_pairs(cfg, 200, BehaviorMix{}, 42);
  for (const auto& pair : ds.pairs) {
    ParsedScene pc = parse(pair.o_c, cfg), pg = parse(pair.o_g, cfg);
    auto ref_c = detection_multiset(pc);
    CHECK(plausible(pc, cfg, &ref_c));
    CHECK(plausible(pg, cfg, &ref_c));  // same objects, rearranged
  }
}

TEST_CASE("dataset persistence round-trips bit-exactly") {
  EnvConfig cfg = desk_cfg();
  PairDataset ds = generate_pairs(cfg, 12, BehaviorMix{}, 3);
  assign_split(ds, 0.25, 3);
  auto dir = temp_dir("roundtrip");
  save_dataset(dir.string(), ds);
  PairDataset back = load_dataset(dir.string());
  REQUIRE(back.pairs.size() == ds.pairs.size());
  for (size_t i = 0; i < ds.pairs.size(); ++i) {
    CHECK(back.pairs[i].o_c == ds.pairs[i].o_c);
    CHECK(back.pairs[i].o_g == ds.pairs[i].o_g);
  }
  CHECK(back.val_ids == ds.val_ids);
  CHECK(back.content_hash() == ds.content_hash());
}

TEST_CASE("split: sizes, determinism, disjoint-exhaustive") {
  EnvConfig cfg = desk_cfg();
  PairDataset ds = generate_pairs(cfg, 10, BehaviorMix{}, 9);

  auto [tr0, va0] = split(ds, 0.0, 1);
  CHECK(tr0.pairs.size() == 10);
  CHECK(va0.pairs.empty());

  auto [tr, va] = split(ds, 0.2, 1);
  CHECK(tr.pairs.size() == 8);
  CHECK(va.pairs.size() == 2);

  auto [tr2, va2] = split(ds, 0.2, 1);
  CHECK(tr.content_hash() == tr2.content_hash());
  CHECK(va.content_hash() == va2.content_hash());

  auto [tr3, va3] = split(ds, 0.2, 2);
  CHECK((tr.content_hash() != tr3.content_hash() || va.content_hash() != va3.content_hash()));

  assign_split(ds, 0.2, 1);
  CHECK(ds.val_ids.size() == 2);
  CHECK(ds.train_indices().size() == 8);
}

TEST_CASE("ingest_pairs: empty dir, well-formed pair, missing partner") {
  auto dir = temp_dir("ingest");
  PairDataset empty = ingest_pairs(dir.string(), 32, 32);
  CHECK(empty.pairs.empty());

  Image im(16, 16);
  for (auto& v : im.px) v = 0.5f;
  write_ppm((dir / "3_c.ppm").string(), im);
  write_ppm((dir / "3_g.ppm").string(), im);
  PairDataset one = ingest_pairs(dir.string(), 32, 32);
  REQUIRE(one.pairs.size() == 1);
  CHECK(one.pairs[0].o_c.h == 32);  // resized to configured dims
  CHECK(one.pairs[0].o_c.w == 32);

  write_ppm((dir / "7_c.ppm").string(), im);
  CHECK_THROWS_WITH_AS(ingest_pairs(dir.string(), 32, 32),
                       doctest::Contains("missing partner for id 7"), Error);
}
