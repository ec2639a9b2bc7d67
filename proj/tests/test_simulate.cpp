#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace qens;
using namespace qtest;

namespace {

SimSpec spec_with(std::vector<ComponentProfile> comps) {
    SimSpec s;
    s.seed = 42;
    s.n_locations = 5;
    s.n_weeks = 24;
    s.levels = 7;
    s.components = std::move(comps);
    return s;
}

}  // namespace

TEST(Simulate, DeterministicForSeed) {
    auto spec = spec_with({{"a", 1.1, 1.0, 0.5}, {"b", 0.9, 1.5, 1.0}});
    spec.revision_prob = 0.1;
    spec.components[1].missing_prob = 0.3;
    const auto a = simulate(spec);
    const auto b = simulate(spec);
    EXPECT_EQ(forecast_writer(a.forecasts).str(), forecast_writer(b.forecasts).str());
    EXPECT_EQ(a.truth.snapshots(), b.truth.snapshots());
    spec.seed = 43;
    EXPECT_NE(forecast_writer(simulate(spec).forecasts).str(), forecast_writer(a.forecasts).str());
}

TEST(Simulate, StructureAndValidation) {
    auto spec = spec_with({{"a"}});
    const auto sim = simulate(spec);
    EXPECT_EQ(sim.forecast_dates.size(), 24u);
    for (Date d : sim.forecast_dates) EXPECT_EQ(d.weekday(), 1);
    EXPECT_TRUE(sim.forecasts.complete("baseline", "L01", sim.forecast_dates[0]));
    EXPECT_TRUE(sim.forecasts.complete("a", "L05", sim.forecast_dates.back()));
    // Final snapshot observes every target.
    for (const auto* f : sim.forecasts.all()) {
        EXPECT_TRUE(sim.truth.latest_value(f->key().location, f->key().target_end_date).has_value());
    }
    // No snapshot shows a week that ends on or after its own date.
    for (const auto& [as_of, snap] : sim.truth.snapshots()) {
        for (const auto& [loc, series] : snap) {
            EXPECT_TRUE(series.rbegin()->first < as_of);
        }
    }
    auto bad = spec;
    bad.components[0].missing_prob = 1.5;
    EXPECT_THROW(simulate(bad), ConfigError);
    bad = spec;
    bad.n_weeks = 15;
    EXPECT_THROW(simulate(bad), ConfigError);
    bad = spec;
    bad.components.push_back({"a"});
    EXPECT_THROW(simulate(bad), ConfigError);
}

TEST(Simulate, NoOutliersStayWithinSixSd) {
    auto spec = spec_with({{"a", 1.2, 1.0, 0.7}, {"b", 0.8, 2.0, 1.5}});
    const auto sim = simulate(spec);
    const auto& levels = sim.forecasts.levels();
    const std::size_t mid = levels.index_of(0.5).value();
    for (const auto* f : sim.forecasts.all()) {
        const auto& k = f->key();
        if (k.model == "baseline") continue;
        const auto& prof = k.model == "a" ? spec.components[0] : spec.components[1];
        const auto [mean, sd] = sim.truth_law.at(k.location).at(k.target_end_date);
        EXPECT_LE(std::abs(f->value(mid) - mean * prof.bias), 6.0 * prof.center_noise * sd + 1e-9);
    }
}

TEST(Simulate, RevisionsAppearInEarlySnapshotsOnly) {
    auto spec = spec_with({{"a"}});
    spec.revision_prob = 0.2;
    spec.revision_fraction = 0.5;
    const auto sim = simulate(spec);
    ASSERT_FALSE(sim.anomalies.empty());
    for (const auto& a : sim.anomalies) {
        const double final_value = sim.truth.latest_value(a.location, a.target_end_date).value();
        EXPECT_EQ(final_value, a.final_value.value());
        const Date monday_after = a.target_end_date.plus_days(2);
        if (!(monday_after < sim.truth.snapshot_dates().back())) continue;  // final snapshot is corrected
        const auto first = sim.truth.value_as_of(monday_after, a.location, a.target_end_date);
        if (first) {
            EXPECT_EQ(*first, a.initial_value.value());
        }
    }
}

TEST(Simulate, OracleIsCalibratedAndBest) {
    auto spec = spec_with({{"oracle"}, {"biased", 1.15, 1.0, 0.5}, {"wide", 1.0, 2.5, 0.5}});
    spec.components[0].oracle = true;
    spec.n_locations = 8;
    spec.n_weeks = 30;
    const auto sim = simulate(spec);
    const auto scores = score_submissions(sim.forecasts, sim.truth.latest(), true);
    const auto rw = relative_wis(scores, "baseline", Aggregation::geometric).defined();
    for (const auto& [m, r] : rw) {
        if (m != "oracle") {
            EXPECT_LT(rw.at("oracle"), r) << m;
        }
    }
}

TEST(Simulate, WritesLoadableHub) {
    auto spec = spec_with({{"a"}, {"b", 1.1}});
    spec.revision_prob = 0.05;
    const auto sim = simulate(spec);
    const auto dir = temp_dir("sim_write");
    write_simulation(sim, dir);
    const auto subs = load_forecast_dir(dir / "forecasts", QuantileLevelSet::preset(7));
    EXPECT_EQ(forecast_writer(subs).str(), forecast_writer(sim.forecasts).str());
    const auto truth = load_truth_dir(dir / "truth");
    EXPECT_EQ(truth.snapshot_dates(), sim.truth.snapshot_dates());
    EXPECT_TRUE(std::filesystem::exists(dir / "anomalies.csv"));
}

TEST(Simulate, JsonRoundTrip) {
    auto spec = spec_with({{"a", 1.1, 0.9, 0.4}});
    spec.components[0].schedule.kind = SkillSchedule::Kind::regime_switching;
    spec.components[0].schedule.period = 6;
    spec.components[0].schedule.alt_bias = 1.4;
    const nlohmann::json j = spec;
    const auto back = j.get<SimSpec>();
    EXPECT_EQ(nlohmann::json(back).dump(), j.dump());
    EXPECT_THROW((nlohmann::json{{"components", nlohmann::json::array()}}.get<SimSpec>()), ConfigError);
}

TEST(SkillSchedule, RegimesFlipEveryPeriod) {
    SkillSchedule s;
    s.kind = SkillSchedule::Kind::regime_switching;
    s.period = 3;
    const std::vector<bool> expect{false, false, false, true, true, true, false};
    for (int w = 0; w < 7; ++w) EXPECT_EQ(s.alternate(w), expect[static_cast<std::size_t>(w)]);
    s.phase = 3;
    EXPECT_TRUE(s.alternate(0));
}
