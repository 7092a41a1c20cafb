#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "skewprobe/errors.hpp"
#include "skewprobe/skew_metrics.hpp"
#include "support/audit_cases.hpp"

using namespace skewprobe;
using namespace skewprobe::testing;

namespace {

const std::vector<std::string> kRaces{"White", "Black", "Indian", "Asian", "Middle Eastern", "Latino"};
const std::vector<std::string> kGenders{"male", "female"};

DesiredDistribution race_gender() { return DesiredDistribution::uniform({"race", "gender"}, {kRaces, kGenders}); }

/// A retrieval of ids "0".."n-1" with the given labels.
std::pair<RetrievalResult, std::map<std::string, Combo>> labeled(const std::vector<Combo>& combos) {
  RetrievalResult r;
  r.subject = "s";
  r.k = combos.size();
  std::map<std::string, Combo> labels;
  for (std::size_t i = 0; i < combos.size(); ++i) {
    r.ranked.push_back({std::to_string(i), i, 1.0 - 0.01 * static_cast<double>(i)});
    labels[std::to_string(i)] = combos[i];
  }
  return {r, labels};
}

SkewReport report_for(const std::vector<Combo>& combos, const DesiredDistribution& d) {
  const auto [r, labels] = labeled(combos);
  return make_report("s", r, labels, d);
}

}  // namespace

TEST(Skew, BalancedRetrievalIsExactlyZero) {
  std::vector<Combo> combos;
  for (const auto& r : kRaces)
    for (const auto& g : kGenders) combos.push_back({r, g});
  const auto rep = report_for(combos, race_gender());
  for (const auto& v : rep.per_combo) EXPECT_EQ(v.skew, 0.0);
  EXPECT_EQ(rep.max_skew, 0.0);
}

TEST(Skew, ThreeOfAKindInTwelve) {
  std::vector<Combo> combos(3, Combo{"Asian", "female"});
  for (const auto& r : kRaces)
    for (const auto& g : kGenders)
      if (combos.size() < 12 && !(r == "Asian" && g == "female")) combos.push_back({r, g});
  const auto rep = report_for(combos, race_gender());
  for (const auto& v : rep.per_combo) {
    if (v.combo == Combo{"Asian", "female"}) {
      EXPECT_NEAR(v.skew, std::log(3.0), 1e-12);
      EXPECT_EQ(v.count, 3u);
    } else if (v.count == 0) {
      EXPECT_EQ(v.skew, kNegInf);
    }
  }
  EXPECT_NEAR(rep.max_skew, std::log(3.0), 1e-12);
}

TEST(Skew, SingleComboAtTwelveIsLnTwelve) {
  const auto rep = report_for(std::vector<Combo>(12, Combo{"Black", "male"}), race_gender());
  EXPECT_NEAR(rep.max_skew, std::log(12.0), 1e-12);
  EXPECT_EQ(std::count_if(rep.per_combo.begin(), rep.per_combo.end(),
                          [](const SkewValue& v) { return v.skew == kNegInf; }),
            11);
}

TEST(Skew, MarginalGenderAtKTwo) {
  const auto d = DesiredDistribution::uniform({"gender"}, {kGenders});
  const auto rep = report_for({{"male"}, {"male"}}, d);
  EXPECT_NEAR(rep.max_skew, std::log(2.0), 1e-12);
  EXPECT_EQ(rep.per_combo[1].skew, kNegInf);
  const auto even = report_for({{"female"}, {"male"}}, d);
  EXPECT_EQ(even.max_skew, 0.0);
}

TEST(Skew, MaxIgnoresNegativeInfinity) {
  std::vector<SkewValue> vs(3);
  vs[0].skew = 0.0;
  vs[1].skew = std::log(2.0);
  vs[2].skew = kNegInf;
  EXPECT_EQ(max_skew_at_k(vs), std::log(2.0));
  EXPECT_THROW(max_skew_at_k(std::vector<SkewValue>{}), DataError);
}

TEST(Skew, NonUniformDesired) {
  DesiredDistribution d;
  d.types = {"gender"};
  d.probs = {{{"male"}, 0.25}, {{"female"}, 0.75}};
  d.validate();
  const auto rep = report_for({{"male"}, {"male"}, {"female"}, {"female"}}, d);
  EXPECT_NEAR(rep.per_combo[0].skew, std::log(2.0), 1e-12);
  EXPECT_NEAR(rep.per_combo[1].skew, std::log(2.0 / 3.0), 1e-12);
}

TEST(Skew, Errors) {
  const auto d = race_gender();
  RetrievalResult empty;
  EXPECT_THROW(skew_at_k(empty, {}, d), DataError);
  auto [r, labels] = labeled({{"Asian", "male"}});
  EXPECT_THROW(skew_at_k(r, {}, d), DataError);
  labels["0"] = {"Martian", "male"};
  EXPECT_THROW(skew_at_k(r, labels, d), DataError);
}

TEST(Skew, ReportMarginalsAndProportions) {
  const auto rep = report_for({{"Asian", "male"}, {"Asian", "female"}, {"White", "male"}, {"Asian", "male"}},
                              race_gender());
  EXPECT_DOUBLE_EQ(rep.marginals.at("race").at("Asian"), 0.75);
  EXPECT_DOUBLE_EQ(rep.marginals.at("gender").at("male"), 0.75);
  EXPECT_DOUBLE_EQ(rep.marginals.at("race").at("Latino"), 0.0);
  double total = 0;
  for (const auto& [c, p] : rep.proportions) total += p;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(DesiredDistribution, UniformIsCanonicalProduct) {
  const auto d = race_gender();
  ASSERT_EQ(d.probs.size(), 12u);
  EXPECT_EQ(d.probs[0].first, (Combo{"White", "male"}));
  EXPECT_EQ(d.probs[1].first, (Combo{"White", "female"}));
  EXPECT_EQ(d.probs[11].first, (Combo{"Latino", "female"}));
  EXPECT_NO_THROW(d.validate());
}

TEST(DesiredDistribution, ValidationErrors) {
  DesiredDistribution d;
  d.types = {"gender"};
  d.probs = {{{"male"}, 0.5}, {{"female"}, 0.4}};
  EXPECT_THROW(d.validate(), ConfigError);
  d.probs = {{{"male"}, 1.0}, {{"female"}, 0.0}};
  EXPECT_THROW(d.validate(), ConfigError);
  d.probs = {{{"male"}, 0.5}, {{"male"}, 0.5}};
  EXPECT_THROW(d.validate(), ConfigError);
  d.probs = {{{"male", "x"}, 1.0}};
  EXPECT_THROW(d.validate(), ConfigError);
  d.types = {"race", "gender"};
  d.probs = {{{"Asian", "male"}, 0.5}, {{"Black", "female"}, 0.5}};
  EXPECT_THROW(d.validate(), ConfigError);
}

TEST(Audit, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 100; ++i) {
    const auto c = random_audit_case(rng, i % 2 == 1);
    EXPECT_TRUE(c.ranking_matches) << "case " << i << ": " << c.detail;
    EXPECT_LE(c.max_abs_diff, 1e-9) << "case " << i << ": " << c.detail;
  }
}

TEST(Audit, PoolExcludesOtherSubjectsAndSegments) {
  StoreBuilder b(3);
  b.add_text(neutral_caption_id(0, 0), "nurse", {}, basis(3, 0));
  b.add_image("mine", "c", "s1", "nurse", {{"race", "Asian"}, {"gender", "male"}}, normalized({1, 1, 0}));
  b.add_image("other-subject", "c", "s2", "pilot", {{"race", "Asian"}, {"gender", "male"}}, basis(3, 0));
  b.add_image("other-segment", "c", "s3", "nurse", {{"phys", "old"}, {"gender", "male"}}, basis(3, 0));
  const auto store = b.build();
  AuditSpec spec;
  spec.segment_types = {"gender", "race"};
  spec.target_types = {"race", "gender"};
  spec.k = 5;
  spec.desired = race_gender();
  const auto rep = audit_subject(store, "nurse", spec);
  ASSERT_EQ(rep.ranked.size(), 1u);
  EXPECT_EQ(rep.ranked[0].id, "mine");
  EXPECT_NEAR(rep.max_skew, std::log(12.0), 1e-12);
}

TEST(Audit, PigeonholeUniformMaxSkewIsNonNegative) {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 300; ++i) {
    const std::size_t na = 2 + rng() % 5, nb = 2 + rng() % 2;
    std::vector<std::string> A, B;
    for (std::size_t a = 0; a < na; ++a) A.push_back("a" + std::to_string(a));
    for (std::size_t c = 0; c < nb; ++c) B.push_back("b" + std::to_string(c));
    const auto d = DesiredDistribution::uniform({"x", "y"}, {A, B});
    std::vector<Combo> combos;
    for (std::size_t k = 0; k < na * nb; ++k) combos.push_back({A[rng() % na], B[rng() % nb]});
    EXPECT_GE(report_for(combos, d).max_skew, 0.0);
  }
}

TEST(Audit, AddingTheDominantComboNeverLowersItsSkew) {
  std::vector<Combo> combos{{"Asian", "male"}, {"White", "female"}, {"Asian", "male"}};
  double last = report_for(combos, race_gender()).max_skew;
  for (int i = 0; i < 9; ++i) {
    combos.push_back({"Asian", "male"});
    const double now = report_for(combos, race_gender()).max_skew;
    EXPECT_GE(now, last);
    last = now;
  }
}

TEST(Quantile, LinearInterpolation) {
  const std::vector<double> v{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(v, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile(v, 0.75), 3.25);
  EXPECT_DOUBLE_EQ(quantile(v, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile(std::vector<double>{7}, 0.3), 7.0);
  EXPECT_THROW(quantile(std::vector<double>{}, 0.5), DataError);
}

TEST(CorpusSummary, MeanExtremesAndTies) {
  auto rep = [](double m) {
    SkewReport r;
    r.max_skew = m;
    return r;
  };
  std::map<std::string, SkewReport> reports{{"b", rep(std::log(12.0))}, {"a", rep(0.0)}, {"c", rep(0.0)},
                                            {"d", rep(std::log(12.0))}};
  const auto s = summarize_corpus(reports);
  EXPECT_NEAR(s.mean_max_skew, std::log(12.0) / 2, 1e-12);
  EXPECT_EQ(s.min_subject.first, "a");
  EXPECT_EQ(s.max_subject.first, "b");
  EXPECT_EQ(s.quartiles.min, 0.0);
  EXPECT_NEAR(s.quartiles.median, std::log(12.0) / 2, 1e-12);
  EXPECT_NEAR(s.quartiles.max, std::log(12.0), 1e-12);
  EXPECT_THROW(summarize_corpus({}), DataError);
}

TEST(CorpusSummary, InvariantToInsertionOrder) {
  std::mt19937_64 rng(4);
  std::vector<std::pair<std::string, double>> items;
  for (int i = 0; i < 50; ++i)
    items.emplace_back("s" + std::to_string(i), std::uniform_real_distribution<double>(0, 2.5)(rng));
  auto summarize = [&](std::vector<std::pair<std::string, double>> xs) {
    std::map<std::string, SkewReport> m;
    for (const auto& [s, v] : xs) {
      SkewReport r;
      r.max_skew = v;
      m.emplace(s, r);
    }
    return summarize_corpus(m);
  };
  const auto a = summarize(items);
  std::shuffle(items.begin(), items.end(), rng);
  const auto b = summarize(items);
  EXPECT_EQ(a.mean_max_skew, b.mean_max_skew);
  EXPECT_EQ(a.min_subject, b.min_subject);
  EXPECT_EQ(a.max_subject, b.max_subject);
  EXPECT_EQ(a.quartiles.q1, b.quartiles.q1);
}
