#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "skewprobe/errors.hpp"
#include "skewprobe/retrieval.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace skewprobe;
using namespace skewprobe::testing;

namespace {

std::vector<oracle::Scored> oracle_pool(const EmbeddingStore& store, const std::vector<long double>& q) {
  std::vector<oracle::Scored> pool;
  for (const auto& r : store.records()) {
    if (r.modality != Modality::image) continue;
    const auto v = store.vector(r.row);
    long double s = 0, vv = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      s += q[i] * v[i];
      vv += static_cast<long double>(v[i]) * v[i];
    }
    pool.push_back({r.id, s / std::sqrt(vv), r.row});
  }
  return pool;
}

}  // namespace

TEST(NeutralQuery, SingleRowIsThatRow) {
  StoreBuilder b(3);
  const auto v = normalized({1, 2, 2});
  b.add_text(neutral_caption_id(0, 0), "nurse", {}, v);
  const auto q = build_neutral_query(b.build(), "nurse");
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(q.embedding[i], v[i], 1e-7);
  EXPECT_EQ(q.source_caption_ids, std::vector<std::string>{"neutral:0:0"});
}

TEST(NeutralQuery, IdenticalRowsGiveTheSameDirection) {
  StoreBuilder b(4);
  const auto v = normalized({0.3, -0.1, 0.9, 0.2});
  for (std::size_t p = 0; p < 4; ++p) b.add_text(neutral_caption_id(2, p), "judge", {}, v);
  const auto q = build_neutral_query(b.build(), "judge");
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(q.embedding[i], v[i], 1e-7);
  EXPECT_EQ(q.source_caption_ids.size(), 4u);
}

TEST(NeutralQuery, MatchesReferenceMean) {
  std::mt19937_64 rng(11);
  StoreBuilder b(16);
  std::vector<std::vector<float>> vs;
  for (std::size_t p = 0; p < 4; ++p) {
    vs.push_back(random_unit(rng, 16));
    b.add_text(neutral_caption_id(5, p), "chef", {}, vs.back());
  }
  // Rows for other subjects and non-neutral captions must be ignored.
  b.add_text(neutral_caption_id(6, 0), "pilot", {}, random_unit(rng, 16));
  b.add_text("race-gender:5:0:0:0", "chef", {{"race", "White"}, {"gender", "male"}}, random_unit(rng, 16));
  const auto q = build_neutral_query(b.build(), "chef");
  const auto ref = oracle::mean_direction(vs);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(q.embedding[i], static_cast<double>(ref[i]), 1e-6);
}

TEST(NeutralQuery, Errors) {
  StoreBuilder b(2);
  b.add_text(neutral_caption_id(0, 0), "a", {}, {1, 0});
  b.add_text(neutral_caption_id(0, 1), "a", {}, {-1, 0});
  const auto store = b.build();
  EXPECT_THROW(build_neutral_query(store, "missing"), DataError);
  EXPECT_THROW(build_neutral_query(store, "a"), DataError);
}

TEST(TopK, KAtLeastPoolReturnsWholePoolSorted) {
  std::mt19937_64 rng(5);
  StoreBuilder b(6);
  b.add_text(neutral_caption_id(0, 0), "s", {}, random_unit(rng, 6));
  for (int i = 0; i < 9; ++i) b.add_image("i" + std::to_string(i), "c", "set", "s", {}, random_unit(rng, 6));
  const auto store = b.build();
  const auto q = build_neutral_query(store, "s");
  const auto r = top_k(store, q, 20, nullptr);
  ASSERT_EQ(r.ranked.size(), 9u);
  EXPECT_EQ(r.k, 20u);
  EXPECT_TRUE(std::is_sorted(r.ranked.begin(), r.ranked.end(), ranks_before));
}

TEST(TopK, ExactMatchScoresOne) {
  StoreBuilder b(4);
  b.add_text(neutral_caption_id(0, 0), "s", {}, basis(4, 0));
  b.add_image("a", "c", "set", "s", {}, basis(4, 1));
  b.add_image("b", "c", "set", "s", {}, basis(4, 0));
  b.add_image("c", "c", "set", "s", {}, basis(4, 2));
  const auto store = b.build();
  const auto r = top_k(store, build_neutral_query(store, "s"), 1, nullptr);
  ASSERT_EQ(r.ranked.size(), 1u);
  EXPECT_EQ(r.ranked[0].id, "b");
  EXPECT_NEAR(r.ranked[0].score, 1.0, 1e-6);
}

TEST(TopK, TiesBreakByAscendingId) {
  StoreBuilder b(2);
  b.add_text(neutral_caption_id(0, 0), "s", {}, basis(2, 0));
  for (const char* id : {"d", "b", "c", "a"}) b.add_image(id, "c", "set", "s", {}, basis(2, 0));
  const auto store = b.build();
  const auto r = top_k(store, build_neutral_query(store, "s"), 3, nullptr);
  ASSERT_EQ(r.ranked.size(), 3u);
  EXPECT_EQ(r.ranked[0].id, "a");
  EXPECT_EQ(r.ranked[1].id, "b");
  EXPECT_EQ(r.ranked[2].id, "c");
}

TEST(TopK, MatchesFullSortOracle) {
  std::mt19937_64 rng(1000);
  StoreBuilder b(32);
  b.add_text(neutral_caption_id(0, 0), "s", {}, random_unit(rng, 32));
  b.add_text(neutral_caption_id(0, 1), "s", {}, random_unit(rng, 32));
  for (int i = 0; i < 1000; ++i) b.add_image("img" + std::to_string(i), "c", "set", "s", {}, random_unit(rng, 32));
  const auto store = b.build();
  const auto q = build_neutral_query(store, "s");
  const auto r = top_k(store, q, 30, nullptr);

  std::vector<std::vector<float>> neutrals{{store.vector(0).begin(), store.vector(0).end()},
                                           {store.vector(1).begin(), store.vector(1).end()}};
  const auto expected = oracle::full_sort_top_k(oracle_pool(store, oracle::mean_direction(neutrals)), 30);
  ASSERT_EQ(r.ranked.size(), 30u);
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_EQ(r.ranked[i].id, expected[i].id) << "rank " << i;
    EXPECT_NEAR(r.ranked[i].score, static_cast<double>(expected[i].score), 1e-6);
  }
}

TEST(TopK, InvariantToQueryScaling) {
  std::mt19937_64 rng(8);
  StoreBuilder b(8);
  b.add_text(neutral_caption_id(0, 0), "s", {}, random_unit(rng, 8));
  for (int i = 0; i < 50; ++i) b.add_image("i" + std::to_string(i), "c", "set", "s", {}, random_unit(rng, 8));
  const auto store = b.build();
  const auto q = build_neutral_query(store, "s");
  auto scaled = q;
  for (auto& x : scaled.embedding) x *= 3.5;
  const auto a = top_k(store, q, 10, nullptr);
  const auto c = top_k(store, scaled, 10, nullptr);
  ASSERT_EQ(a.ranked.size(), c.ranked.size());
  for (std::size_t i = 0; i < a.ranked.size(); ++i) EXPECT_EQ(a.ranked[i].id, c.ranked[i].id);
}

TEST(TopK, IndependentOfRowOrder) {
  std::mt19937_64 rng(9);
  std::vector<std::pair<std::string, std::vector<float>>> images;
  for (int i = 0; i < 40; ++i) images.emplace_back("i" + std::to_string(i), random_unit(rng, 5));
  images.emplace_back("dup-b", images[0].second);
  images.emplace_back("dup-a", images[0].second);
  std::vector<std::pair<std::string, std::vector<float>>> neutrals;
  for (std::size_t p = 0; p < 3; ++p) neutrals.emplace_back(neutral_caption_id(0, p), random_unit(rng, 5));

  auto build = [&](std::mt19937_64& shuffle_rng) {
    auto imgs = images;
    auto ns = neutrals;
    std::shuffle(imgs.begin(), imgs.end(), shuffle_rng);
    std::shuffle(ns.begin(), ns.end(), shuffle_rng);
    StoreBuilder b(5);
    for (const auto& [cid, v] : ns) b.add_text(cid, "s", {}, v);
    for (const auto& [id, v] : imgs) b.add_image(id, "c", "set", "s", {}, v);
    const auto store = b.build();
    const auto r = top_k(store, build_neutral_query(store, "s"), 15, nullptr);
    std::vector<std::pair<std::string, double>> out;
    for (const auto& x : r.ranked) out.emplace_back(x.id, x.score);
    return out;
  };
  std::mt19937_64 s1(1), s2(2);
  const auto a = build(s1);
  const auto c = build(s2);
  EXPECT_EQ(a, c);  // scores included: accumulation order is fixed
}

TEST(TopK, Errors) {
  StoreBuilder b(2);
  b.add_text(neutral_caption_id(0, 0), "s", {}, basis(2, 0));
  b.add_image("i", "c", "set", "s", {{"race", "Asian"}}, basis(2, 1));
  const auto store = b.build();
  const auto q = build_neutral_query(store, "s");
  EXPECT_THROW(top_k(store, q, 0, nullptr), ConfigError);
  EXPECT_THROW(top_k(store, q, 1, [](const EmbeddingRecord&) { return false; }), DataError);
}

TEST(MarginalPool, SelectsRowsWithTheValue) {
  std::mt19937_64 rng(12);
  StoreBuilder b(4);
  b.add_text(neutral_caption_id(0, 0), "s", {}, random_unit(rng, 4));
  const std::vector<std::string> races{"Indian", "White", "Asian"};
  const std::vector<std::string> genders{"male", "female"};
  int n = 0;
  for (int rep = 0; rep < 2; ++rep)
    for (const auto& r : races)
      for (const auto& g : genders)
        b.add_image("i" + std::to_string(n++), "c", "set", "s", {{"race", r}, {"gender", g}}, random_unit(rng, 4));
  b.add_text(probe_caption_id("race", "Latino"), "", {{"race", "Latino"}}, random_unit(rng, 4));
  const auto store = b.build();
  const auto q = build_neutral_query(store, "s");

  const auto male = top_k(store, q, 100, marginal_pool(store, "gender", "male"));
  EXPECT_EQ(male.ranked.size(), 6u);
  for (const auto& x : male.ranked) EXPECT_EQ(*store.record(x.row).attr("gender"), "male");

  // A value known only from a probe row is valid but selects nothing.
  const auto latino = marginal_pool(store, "race", "Latino");
  EXPECT_THROW(top_k(store, q, 5, latino), DataError);

  EXPECT_THROW(marginal_pool(store, "age", "old"), ConfigError);
  EXPECT_THROW(marginal_pool(store, "race", "Martian"), ConfigError);
}

TEST(MarginalPool, GridValidation) {
  AttributeGrid grid;
  grid.prefixes = {"A"};
  grid.subjects = {"s"};
  grid.attribute_types = {{"race", {"Asian", "Black"}}, {"gender", {"male", "female"}}};
  grid.pairs = {{0, 1}};
  EXPECT_NO_THROW(marginal_pool(grid, "race", "Black"));
  EXPECT_THROW(marginal_pool(grid, "race", "Latino"), ConfigError);
  EXPECT_THROW(marginal_pool(grid, "phys", "old"), ConfigError);
}
