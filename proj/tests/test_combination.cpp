#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace qens;
using namespace qtest;

TEST(EffectiveWeights, Renormalization) {
    const WeightVector w({"a", "b", "c"}, {0.5, 0.3, 0.2});
    const auto all = effective_weights(w, {true, true, true});
    EXPECT_TRUE(std::equal(all.weights().begin(), all.weights().end(), w.weights().begin()));
    const auto eff = effective_weights(w, {true, false, true});
    EXPECT_NEAR(eff.weight("a"), 5.0 / 7.0, 1e-15);
    EXPECT_EQ(eff.weight("b"), 0.0);
    EXPECT_NEAR(eff.weight("c"), 2.0 / 7.0, 1e-15);
    const WeightVector z({"a", "b"}, {1.0, 0.0});
    EXPECT_THROW(effective_weights(z, {false, true}), NoMassError);
}

TEST(WeightVector, Validation) {
    EXPECT_THROW(WeightVector({"a", "b"}, {0.5, 0.6}), ValidationError);
    EXPECT_THROW(WeightVector({"b", "a"}, {0.5, 0.5}), ValidationError);
    EXPECT_THROW(WeightVector({"a", "b"}, {1.5, -0.5}), ValidationError);
    EXPECT_EQ(WeightVector::uniform({"x", "y", "z", "w"}).weight("z"), 0.25);
}

TEST(WeightedMean, Examples) {
    EXPECT_DOUBLE_EQ(weighted_mean(std::vector<double>{1, 3}, std::vector<double>{0.5, 0.5}), 2.0);
    EXPECT_DOUBLE_EQ(weighted_mean(std::vector<double>{1, 2, 100}, std::vector<double>{0.5, 0.25, 0.25}), 26.0);
}

TEST(WeightedMedian, Examples) {
    auto med = [](std::vector<double> v, std::vector<double> w) { return weighted_median(v, w); };
    EXPECT_DOUBLE_EQ(med({7}, {1.0}), 7.0);
    EXPECT_DOUBLE_EQ(med({1, 3}, {0.5, 0.5}), 2.0);
    EXPECT_DOUBLE_EQ(med({1, 3}, {0.9, 0.1}), 1.2);
    EXPECT_DOUBLE_EQ(med({1, 2, 100}, {1.0 / 3, 1.0 / 3, 1.0 / 3}), 2.0);
    EXPECT_DOUBLE_EQ(med({100, 1, 2}, {1.0 / 3, 1.0 / 3, 1.0 / 3}), 2.0);
    // Clamping at the ends.
    EXPECT_DOUBLE_EQ(med({1, 3}, {1.0, 0.0}), 1.0);
    EXPECT_DOUBLE_EQ(med({1, 3, 5}, {0.0, 0.0, 1.0}), 5.0);
    // Ties.
    EXPECT_DOUBLE_EQ(med({4, 4, 4}, {0.2, 0.5, 0.3}), 4.0);
}

TEST(WeightedMedian, LowerRuleIsInfDefinition) {
    // Smallest value whose cumulative weight reaches 0.5.
    const std::vector<double> v{1, 3}, w{0.5, 0.5};
    EXPECT_DOUBLE_EQ(weighted_median(v, w, MedianRule::lower), 1.0);
    const std::vector<double> v3{1, 2, 3}, w3{0.2, 0.2, 0.6};
    EXPECT_DOUBLE_EQ(weighted_median(v3, w3, MedianRule::lower), 3.0);
}

TEST(WeightedMedian, OddCountEqualsSampleMedian) {
    Rng rng(3);
    for (int t = 0; t < 500; ++t) {
        const std::size_t m = 2 * (1 + rng.index(5)) + 1;
        std::vector<double> v(m);
        for (auto& x : v) x = rng.uniform();
        std::vector<double> w(m, 1.0 / static_cast<double>(m));
        auto s = v;
        std::sort(s.begin(), s.end());
        EXPECT_EQ(weighted_median(v, w), s[m / 2]);
    }
}

TEST(WeightedMedian, ConcentratedWeight) {
    // Sorted: 1 (P = 0.00025), 5 (P = 0.5), 9 (P = 0.99975): the crossing lands on 5.
    const std::vector<double> v{5, 1, 9};
    const std::vector<double> w{0.999, 0.0005, 0.0005};
    EXPECT_NEAR(weighted_median(v, w), 5.0, 1e-12);
    const std::vector<double> w2{0.9, 0.06, 0.04};
    // Sorted: 1 (0.03), 5 (0.51), 9 (0.98).
    EXPECT_NEAR(weighted_median(v, w2), 1.0 + (0.5 - 0.03) / 0.48 * 4.0, 1e-12);
}

TEST(WeightedMedian, BracketingAndRobustnessRandomized) {
    Rng rng(17);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t m = 3 + rng.index(8);
        std::vector<double> v(m), w(m);
        double sum = 0;
        for (std::size_t i = 0; i < m; ++i) {
            v[i] = rng.uniform() * 50;
            w[i] = rng.uniform();
            sum += w[i];
        }
        for (auto& x : w) x /= sum;
        const double med = weighted_median(v, w);
        EXPECT_GE(med, *std::min_element(v.begin(), v.end()));
        EXPECT_LE(med, *std::max_element(v.begin(), v.end()));
    }
}

namespace {

// Brute-force oracle for the interpolated weighted median, written from the
// midpoint-position rule without the library's sorting helpers.
double oracle_median(std::vector<std::pair<double, double>> vw) {
    std::stable_sort(vw.begin(), vw.end(), [](auto& a, auto& b) { return a.first < b.first; });
    std::vector<std::pair<double, double>> pos;
    double cum = 0.0;
    for (auto [v, w] : vw) {
        if (w <= 0) continue;
        pos.emplace_back(v, cum + w / 2.0);
        cum += w;
    }
    for (auto& p : pos) p.second /= cum;
    if (0.5 <= pos.front().second) return pos.front().first;
    if (0.5 >= pos.back().second) return pos.back().first;
    for (std::size_t i = 1; i < pos.size(); ++i) {
        if (0.5 <= pos[i].second) {
            const double f = (0.5 - pos[i - 1].second) / (pos[i].second - pos[i - 1].second);
            return pos[i - 1].first + f * (pos[i].first - pos[i - 1].first);
        }
    }
    return pos.back().first;
}

}  // namespace

TEST(Combine, MatchesPerLevelOracle) {
    const auto levels = QuantileLevelSet::preset(7);
    Rng rng(23);
    for (int t = 0; t < 200; ++t) {
        std::vector<QuantileForecast> comps;
        for (int m = 0; m < 3; ++m) {
            comps.push_back(make_forecast("m" + std::to_string(m), "A", monday0(), 1, levels,
                                          random_quantiles(rng, levels.size())));
        }
        std::vector<const QuantileForecast*> ptrs{&comps[0], &comps[1], &comps[2]};
        const double a = rng.uniform() + 0.1, b = rng.uniform() + 0.1, c = rng.uniform() + 0.1;
        const double s = a + b + c;
        const WeightVector w({"m0", "m1", "m2"}, {a / s, b / s, c / s});
        const auto mean = combine(ptrs, w, Combiner::mean, "ens");
        const auto med = combine(ptrs, w, Combiner::median, "ens");
        std::vector<double> od(levels.size());
        for (std::size_t k = 0; k < levels.size(); ++k) {
            const double om = w.weights()[0] * comps[0].value(k) + w.weights()[1] * comps[1].value(k) +
                              w.weights()[2] * comps[2].value(k);
            EXPECT_NEAR(mean.value(k), om, 1e-12);
            od[k] = oracle_median({{comps[0].value(k), w.weights()[0]},
                                   {comps[1].value(k), w.weights()[1]},
                                   {comps[2].value(k), w.weights()[2]}});
        }
        // Crossed levels are rearranged into order.
        std::sort(od.begin(), od.end());
        for (std::size_t k = 0; k < levels.size(); ++k) EXPECT_NEAR(med.value(k), od[k], 1e-12);
        EXPECT_EQ(med.key().model, "ens");
        EXPECT_TRUE(std::is_sorted(med.values().begin(), med.values().end()));
        EXPECT_TRUE(std::is_sorted(mean.values().begin(), mean.values().end()));
    }
}

TEST(Combine, IdenticalComponentsAndErrors) {
    const auto levels = QuantileLevelSet::preset(7);
    const std::vector<double> v{1, 2, 3, 4, 5, 6, 7};
    std::vector<QuantileForecast> comps;
    for (int m = 0; m < 4; ++m) comps.push_back(make_forecast("m" + std::to_string(m), "A", monday0(), 2, levels, v));
    std::vector<const QuantileForecast*> ptrs;
    for (auto& c : comps) ptrs.push_back(&c);
    const auto w = WeightVector::uniform({"m0", "m1", "m2", "m3"});
    for (auto method : {Combiner::mean, Combiner::median}) {
        const auto out = combine(ptrs, w, method, "ens");
        EXPECT_TRUE(std::equal(out.values().begin(), out.values().end(), v.begin()));
    }
    EXPECT_THROW(combine(std::vector<const QuantileForecast*>{}, w, Combiner::mean, "ens"), ValidationError);
    const auto other = make_forecast("m9", "A", monday0(), 2, QuantileLevelSet::preset(23), std::vector<double>(23, 1.0));
    ptrs.push_back(&other);
    EXPECT_THROW(combine(ptrs, w, Combiner::mean, "ens"), ValidationError);
}

TEST(Combine, MissingComponentRenormalizes) {
    const auto levels = QuantileLevelSet::preset(7);
    const auto a = make_forecast("a", "A", monday0(), 1, levels, std::vector<double>(7, 10.0));
    const auto c = make_forecast("c", "A", monday0(), 1, levels, std::vector<double>(7, 20.0));
    const WeightVector w({"a", "b", "c"}, {0.5, 0.3, 0.2});
    std::vector<const QuantileForecast*> ptrs{&a, &c};
    const auto out = combine(ptrs, w, Combiner::mean, "ens");
    EXPECT_NEAR(out.value(0), 10.0 * 5.0 / 7.0 + 20.0 * 2.0 / 7.0, 1e-12);
}

TEST(Combine, MonotoneForRandomMedians) {
    const auto levels = QuantileLevelSet::preset(23);
    Rng rng(99);
    for (int t = 0; t < 300; ++t) {
        const int m = 2 + static_cast<int>(rng.index(6));
        std::vector<QuantileForecast> comps;
        std::vector<std::string> ids;
        std::vector<double> ws;
        double sum = 0;
        for (int i = 0; i < m; ++i) {
            ids.push_back("m" + std::to_string(i));
            comps.push_back(make_forecast(ids.back(), "A", monday0(), 1, levels, random_quantiles(rng, 23)));
            ws.push_back(rng.uniform() + 1e-3);
            sum += ws.back();
        }
        for (auto& x : ws) x /= sum;
        ws.back() = 1.0;
        for (int i = 0; i + 1 < m; ++i) ws.back() -= ws[static_cast<std::size_t>(i)];
        ws.back() = std::max(ws.back(), 0.0);
        std::vector<const QuantileForecast*> ptrs;
        for (auto& c : comps) ptrs.push_back(&c);
        const auto out = combine(ptrs, WeightVector(ids, ws), Combiner::median, "ens");
        EXPECT_TRUE(std::is_sorted(out.values().begin(), out.values().end()));
    }
}
