#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "spm/settings.hpp"

using namespace spm;

namespace {

std::string key_of(const ValuationProfile& p) {
  std::ostringstream os;
  for (int i = 0; i < p.num_agents(); ++i) {
    // finite catalog settings are unit-demand, so singletons identify them
    for (int j = 0; j < p.num_items(); ++j) os << value_of(p.valuation(i), ItemSet::single(j)) << ',';
    os << '|';
  }
  return os.str();
}

double total_probability(const std::vector<WeightedProfile>& s) {
  double t = 0.0;
  for (const auto& [p, w] : s) t += w;
  return t;
}

}  // namespace

TEST(Catalog, ContainsEverySetting) {
  const auto cat = setting_catalog();
  EXPECT_EQ(cat.size(), 15U);
  for (const auto& s : cat) {
    EXPECT_GT(s.vmax, 0.0) << s.name;
    EXPECT_TRUE(static_cast<bool>(s.sampler)) << s.name;
  }
}

TEST(Catalog, Dimensions) {
  EXPECT_EQ(make_setting("colors").n, 30);
  EXPECT_EQ(make_setting("colors").m, 20);
  EXPECT_EQ(make_setting("id_setting").n, 6);
  EXPECT_EQ(make_setting("id_setting").m, 2);
  EXPECT_EQ(make_setting("maxmin_colors").m, 10);
  EXPECT_EQ(make_setting("maxmin_colors").objective_default, Objective::maxmin);
  EXPECT_EQ(make_setting("revenue_correlated").objective_default, Objective::revenue);
  const auto c = make_setting("correlated", {{"n", 7}, {"m", 3}, {"delta", 0.25}});
  EXPECT_EQ(c.n, 7);
  EXPECT_EQ(c.m, 3);
}

TEST(Catalog, RejectsUnknownNamesAndParameters) {
  EXPECT_THROW(make_setting("nope"), InputError);
  EXPECT_THROW(make_setting("prop1", {{"n", 3}}), InputError);
  EXPECT_THROW(make_setting("correlated", {{"delta", 2}}), InputError);
}

TEST(Support, Prop1HasFourEquiprobableProfiles) {
  const auto s = enumerate_support(make_setting("prop1"));
  ASSERT_EQ(s.size(), 4U);
  for (const auto& [p, w] : s) {
    EXPECT_DOUBLE_EQ(w, 0.25);
    for (int i = 0; i < 2; ++i) {
      const double v = bundle_value(p, i, ItemSet::full(1));
      EXPECT_TRUE(v == 1.0 || v == 3.0);
    }
  }
}

TEST(Support, Prop2HasEightProfiles) {
  const auto s = enumerate_support(make_setting("prop2"));
  ASSERT_EQ(s.size(), 8U);
  for (const auto& [p, w] : s) EXPECT_DOUBLE_EQ(w, 0.125);
}

TEST(Support, KitchenSinkBranches) {
  const auto s = enumerate_support(make_setting("kitchen_sink"));
  ASSERT_EQ(s.size(), 4U);
  std::vector<double> probs;
  for (const auto& [p, w] : s) probs.push_back(w);
  std::sort(probs.begin(), probs.end());
  EXPECT_NEAR(probs[0], 0.1, 1e-15);
  EXPECT_NEAR(probs[1], 0.1, 1e-15);
  EXPECT_NEAR(probs[2], 0.4, 1e-15);
  EXPECT_NEAR(probs[3], 0.4, 1e-15);
}

TEST(Support, ContinuousSettingsRefuse) {
  EXPECT_THROW(enumerate_support(make_setting("correlated")), UnsupportedError);
  EXPECT_THROW(enumerate_support(make_setting("maxmin_colors")), UnsupportedError);
  EXPECT_THROW(enumerate_support(make_setting("inventory")), SizeError);
}

TEST(Support, ProbabilitiesSumToOne) {
  for (const auto& spec : setting_catalog()) {
    if (!spec.support || spec.support->profile_count() > kDefaultSupportLimit) continue;
    EXPECT_NEAR(total_probability(enumerate_support(spec)), 1.0, 1e-12) << spec.name;
  }
}

TEST(Support, BellwetherConditionalStructure) {
  for (const auto& [p, w] : enumerate_support(make_setting("prop3_bellwether"))) {
    const double v0 = bundle_value(p, 0, ItemSet::single(0));
    const double v1 = bundle_value(p, 1, ItemSet::single(0));
    const bool high_support = v1 == 2.0 || v1 == 12.0;
    EXPECT_EQ(high_support, v0 == 15.0);
    for (int i = 2; i <= 3; ++i) {
      const double vi = bundle_value(p, i, ItemSet::single(0));
      EXPECT_EQ(vi == 2.0 || vi == 12.0, v0 == 1.0);
    }
    EXPECT_EQ(bundle_value(p, 4, ItemSet::single(1)), 4.0);
  }
}

// Empirical frequencies of the sampler against the exact support, 4 sigma.
TEST(SupportProperty, SamplerMatchesSupport) {
  const int samples = 100000;
  for (const auto& spec : setting_catalog()) {
    if (!spec.support || spec.support->profile_count() > 4096) continue;
    std::map<std::string, double> exact;
    for (const auto& [p, w] : enumerate_support(spec)) exact[key_of(p)] += w;
    std::map<std::string, int> seen;
    Rng rng = make_rng(2024);
    for (int s = 0; s < samples; ++s) {
      const auto key = key_of(spec.sampler(rng));
      ASSERT_TRUE(exact.count(key)) << spec.name << " sampled a profile outside the support";
      ++seen[key];
    }
    for (const auto& [k, p] : exact) {
      const double sigma = std::sqrt(samples * p * (1 - p));
      EXPECT_LE(std::abs(seen[k] - samples * p), 4 * sigma + 1e-9) << spec.name;
    }
  }
}

TEST(SupportProperty, InventoryMarginalsMatch) {
  const auto spec = make_setting("inventory");
  Rng rng = make_rng(9);
  int high = 0;
  const int samples = 20000;
  for (int s = 0; s < samples; ++s) high += bundle_value(spec.sampler(rng), 3, ItemSet::single(0)) == 1.0;
  EXPECT_NEAR(high / double(samples), 0.5, 4 * std::sqrt(0.25 / samples));
}

TEST(Sample, Prop1ValuesInSupport) {
  const auto spec = make_setting("prop1");
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto p = sample_profile(spec, seed);
    for (int i = 0; i < 2; ++i) {
      const double v = bundle_value(p, i, ItemSet::single(0));
      EXPECT_TRUE(v == 1.0 || v == 3.0);
    }
  }
}

TEST(Sample, DeterministicForSeed) {
  for (const auto& spec : setting_catalog())
    for (std::uint64_t seed : {0ULL, 1ULL, 77ULL}) EXPECT_EQ(sample_profile(spec, seed), sample_profile(spec, seed)) << spec.name;
}

TEST(Sample, NeverExceedsVmax) {
  for (const auto& spec : setting_catalog()) {
    Rng rng = make_rng(1);
    for (int s = 0; s < 2000; ++s) ASSERT_LE(spec.sampler(rng).max_value(), spec.vmax + 1e-12) << spec.name;
  }
}

TEST(Sample, CorrelatedFullCorrelationGivesEqualValues) {
  const auto spec = make_setting("correlated", {{"n", 5}, {"m", 2}, {"delta", 1.0}});
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto p = sample_profile(spec, seed);
    for (int i = 1; i < 5; ++i) EXPECT_EQ(bundle_value(p, i, ItemSet::single(0)), bundle_value(p, 0, ItemSet::single(0)));
  }
}

TEST(Sample, CorrelatedRangeInvariant) {
  for (double delta : {0.0, 0.25, 0.5, 0.8}) {
    const auto spec = make_setting("correlated", {{"n", 6}, {"m", 2}, {"delta", delta}});
    Rng rng = make_rng(4);
    for (int s = 0; s < 2000; ++s) {
      const auto p = spec.sampler(rng);
      double lo = 1, hi = 0;
      for (int i = 0; i < 6; ++i) {
        const double v = bundle_value(p, i, ItemSet::single(0));
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      ASSERT_LE(hi - lo, 1.0 - delta + 1e-12);
    }
  }
}

TEST(Sample, CorrelatedIndependentAtZero) {
  const auto spec = make_setting("correlated", {{"n", 2}, {"m", 1}, {"delta", 0.0}});
  Rng rng = make_rng(8);
  const int samples = 100000;
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (int s = 0; s < samples; ++s) {
    const auto p = spec.sampler(rng);
    const double x = bundle_value(p, 0, ItemSet::single(0));
    const double y = bundle_value(p, 1, ItemSet::single(0));
    sx += x; sy += y; sxx += x * x; syy += y * y; sxy += x * y;
  }
  const double n = samples;
  const double cov = sxy / n - (sx / n) * (sy / n);
  const double corr = cov / std::sqrt((sxx / n - sx * sx / n / n) * (syy / n - sy * sy / n / n));
  EXPECT_GE(corr, -0.02);
  EXPECT_LE(corr, 0.02);
}

TEST(Normalize, ScalesValues) {
  const auto p1 = normalize(make_setting("prop1"));
  EXPECT_EQ(p1.vmax, 1.0);
  for (const auto& [p, w] : enumerate_support(p1)) {
    const double v = bundle_value(p, 0, ItemSet::single(0));
    EXPECT_TRUE(std::abs(v - 1.0 / 3.0) < 1e-15 || v == 1.0);
  }
  const auto c = normalize(make_setting("colors"));
  const auto prof = sample_profile(c, 3);
  EXPECT_DOUBLE_EQ(bundle_value(prof, 0, ItemSet::single(0)), 0.5);
  EXPECT_DOUBLE_EQ(bundle_value(prof, 10, ItemSet::single(15)), 0.5);
  const double blue = std::max(bundle_value(prof, 25, ItemSet::single(0)), bundle_value(prof, 25, ItemSet::single(15)));
  EXPECT_DOUBLE_EQ(blue, 1.0);
}

TEST(Normalize, RejectsDegenerate) {
  auto s = make_setting("prop1");
  s.vmax = 0.0;
  EXPECT_THROW(normalize(s), ValidationError);
}
