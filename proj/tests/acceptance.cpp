// Acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero
// when any criterion fails.

#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include "test_util.hpp"

using namespace qens;
using namespace qtest;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// 1
Outcome wis_pinball() {
    Rng rng(101);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double tau = rng.open_uniform();
        const double q = (rng.uniform() - 0.5) * 200.0;
        const double y = (rng.uniform() - 0.5) * 200.0;
        worst = std::max(worst, std::abs(wis_term(tau, q, y) - 2.0 * pinball(tau, q, y)));
    }
    return {worst <= 1e-12, "max |term - 2 pinball| = " + fmt(worst)};
}

// 2
Outcome properness() {
    const auto levels = QuantileLevelSet::preset(23);
    const double mu = 100.0, sd = 20.0;
    const auto truthful = normal_quantiles(levels, mu, sd);
    const auto shifted = normal_quantiles(levels, mu + 0.2 * sd, sd);
    Rng rng(202);
    double a = 0.0, b = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const double y = mu + sd * rng.normal();
        a += wis_value(levels.levels(), truthful, y);
        b += wis_value(levels.levels(), shifted, y);
    }
    a /= n;
    b /= n;
    return {a < b, "mean WIS true " + fmt(a) + " vs shifted " + fmt(b)};
}

// Synthetic score table: models x units x 4 horizons, optional whole-submission missingness.
std::vector<ScoreRow> synthetic_scores(Rng& rng, int n_models, int n_locations, int n_dates, double missing) {
    std::vector<ScoreRow> rows;
    std::vector<double> skill(static_cast<std::size_t>(n_models));
    for (auto& s : skill) s = 0.5 + rng.uniform() * 1.5;
    for (int m = 0; m < n_models; ++m) {
        const std::string id = m == 0 ? "baseline" : "m" + std::to_string(m);
        for (int l = 0; l < n_locations; ++l) {
            for (int d = 0; d < n_dates; ++d) {
                if (m != 0 && rng.bernoulli(missing)) continue;
                for (int h = 1; h <= 4; ++h) {
                    const Date s = monday(d);
                    const double difficulty = 1.0 + l + 0.3 * d + h;
                    rows.push_back({id, "L" + std::to_string(l), s, target_end_date(s, h), h,
                                    skill[static_cast<std::size_t>(m)] * difficulty * (0.5 + rng.uniform())});
                }
            }
        }
    }
    return rows;
}

// Brute-force pairwise table: geometric mean of matched mean-WIS ratios over all partners.
std::map<std::string, double> oracle_rwis(const std::vector<ScoreRow>& rows) {
    std::map<std::string, std::map<std::pair<std::string, Date>, std::vector<double>>> by;
    for (const auto& r : rows) by[r.model][{r.location, r.forecast_date}].push_back(r.wis);
    std::map<std::string, double> theta;
    for (const auto& [m, um] : by) {
        double logsum = 0.0;
        int partners = 0;
        for (const auto& [p, up] : by) {
            double sm = 0.0, sp = 0.0;
            int n = 0;
            for (const auto& [unit, v] : um) {
                auto it = up.find(unit);
                if (it == up.end()) continue;
                for (double x : v) sm += x;
                for (double x : it->second) sp += x;
                n += static_cast<int>(v.size());
            }
            if (n == 0) continue;
            logsum += std::log((sm / n) / (sp / n));
            ++partners;
        }
        theta[m] = std::exp(logsum / partners);
    }
    std::map<std::string, double> out;
    for (const auto& [m, t] : theta) out[m] = t / theta.at("baseline");
    return out;
}

// 3
Outcome rwis_reduction() {
    Rng rng(303);
    std::ostringstream os;
    bool ok = true;
    {
        const auto rows = synthetic_scores(rng, 8, 6, 10, 0.0);
        std::map<std::string, std::pair<double, int>> mean;
        for (const auto& r : rows) {
            mean[r.model].first += r.wis;
            ++mean[r.model].second;
        }
        const double base = mean["baseline"].first / mean["baseline"].second;
        double worst = 0.0;
        for (auto agg : {Aggregation::geometric, Aggregation::arithmetic}) {
            const auto t = relative_wis(rows, "baseline", agg);
            for (const auto& [m, s] : mean) {
                const double expect = (s.first / s.second) / base;
                worst = std::max(worst, std::abs(*t.rel_wis(m) - expect) / expect);
            }
        }
        ok = ok && worst <= 1e-12;
        os << "full-coverage rel err " << fmt(worst);
    }
    {
        double worst = 0.0, min_rho = 1.0;
        for (int rep = 0; rep < 20; ++rep) {
            const auto rows = synthetic_scores(rng, 20, 6, 12, 0.1);
            const auto geo = relative_wis(rows, "baseline", Aggregation::geometric);
            const auto ari = relative_wis(rows, "baseline", Aggregation::arithmetic);
            const auto oracle = oracle_rwis(rows);
            std::vector<double> g, a;
            for (const auto& [m, v] : oracle) {
                worst = std::max(worst, std::abs(*geo.rel_wis(m) - v) / v);
                g.push_back(*geo.rel_wis(m));
                a.push_back(*ari.rel_wis(m));
            }
            min_rho = std::min(min_rho, spearman(g, a));
        }
        ok = ok && worst <= 1e-12 && min_rho >= 0.99;
        os << "; 10% missing: oracle rel err " << fmt(worst) << ", min Spearman geo/arith " << fmt(min_rho);
    }
    return {ok, os.str()};
}

SimSpec backtest_sim(std::uint64_t seed, int weeks) {
    SimSpec s;
    s.seed = seed;
    s.n_locations = 6;
    s.n_weeks = weeks;
    s.window = weeks - 10;
    s.levels = 23;
    s.components = {{"c01", 1.0, 1.0, 0.3}, {"c02", 1.2, 1.0, 0.6}, {"c03", 0.85, 1.2, 0.6},
                    {"c04", 1.0, 2.5, 0.5}, {"c05", 1.0, 1.0, 1.5}, {"c06", 1.1, 0.5, 0.8},
                    {"c07", 0.9, 0.8, 0.7}, {"c08", 1.05, 1.5, 0.9}};
    s.components[4].missing_prob = 0.15;
    s.components[6].missing_prob = 0.1;
    s.components[7].outlier_prob = 0.05;
    return s;
}

// Rewrites model ids so two ensembles can be compared as text.
std::string as_text(const SubmissionSet& subs) {
    SubmissionSet out(subs.levels());
    for (const auto* f : subs.all()) {
        ForecastKey k = f->key();
        k.model = "ens";
        out.add(QuantileForecast(k, subs.levels(), std::vector<double>(f->values().begin(), f->values().end())));
    }
    return forecast_writer(out).str();
}

// 4
Outcome theta_zero_identity() {
    const auto sim = simulate(backtest_sim(404, 20));
    EnsembleSpec spec;
    spec.id = "theta0";
    spec.weighting = Weighting::rel_wis_sigmoid;
    spec.top_k = std::nullopt;
    spec.theta_grid = std::vector<double>{0.0};
    spec.window_weeks = 10;
    const std::vector<Date> dates(sim.forecast_dates.begin() + 2, sim.forecast_dates.end());
    const auto res = train_and_forecast(sim.forecasts, sim.truth, spec, dates);
    std::map<Date, std::vector<std::string>> chosen;
    for (const auto& w : res.weights) chosen[w.forecast_date].push_back(w.model);
    SubmissionSet equal(sim.forecasts.levels());
    for (auto& [s, models] : chosen) {
        std::sort(models.begin(), models.end());
        const auto w = WeightVector::uniform(models);
        for (const auto& loc : sim.forecasts.locations_at(s)) {
            for (int h = 1; h <= kMaxHorizon; ++h) {
                std::vector<const QuantileForecast*> comps;
                for (const auto& m : models) {
                    if (const auto* f = sim.forecasts.find(m, loc, s, h)) comps.push_back(f);
                }
                if (!comps.empty()) equal.add(combine(comps, w, Combiner::median, "equal"));
            }
        }
    }
    const bool same = as_text(res.forecasts) == as_text(equal) && !res.forecasts.empty();
    return {same, std::to_string(res.forecasts.size()) + " forecasts, byte-identical: " + (same ? "yes" : "no")};
}

// 5
Outcome weight_cap_equivalence() {
    const auto sim = simulate(backtest_sim(505, 20));
    EnsembleSpec capped;
    capped.id = "capped";
    capped.weighting = Weighting::rel_wis_sigmoid;
    capped.top_k = 4;
    capped.max_weight = 0.25;
    capped.window_weeks = 10;
    EnsembleSpec equal = capped;
    equal.id = "equal_top4";
    equal.weighting = Weighting::equal;
    equal.max_weight = 1.0;
    const auto a = train_and_forecast(sim.forecasts, sim.truth, capped, sim.forecast_dates);
    const auto b = train_and_forecast(sim.forecasts, sim.truth, equal, sim.forecast_dates);
    const bool same = as_text(a.forecasts) == as_text(b.forecasts) && !a.forecasts.empty();
    return {same, std::to_string(a.forecasts.size()) + " forecasts over " + std::to_string(sim.forecast_dates.size()) +
                      " weeks, byte-identical: " + (same ? "yes" : "no")};
}

// 6
Outcome baseline_anchoring() {
    const auto levels = QuantileLevelSet::preset(23);
    const std::size_t mid = levels.index_of(0.5).value();
    Rng rng(606);
    bool median_ok = true;
    double worst_sym = 0.0;
    for (int t = 0; t < 100; ++t) {
        std::vector<double> hist(2 + rng.index(20));
        double level = 200.0 + rng.uniform() * 800.0;
        for (auto& v : hist) {
            level = std::max(0.0, level + std::round((rng.uniform() - 0.5) * 100.0));
            v = level;
        }
        const auto raw = baseline_quantiles(hist, levels);
        median_ok = median_ok && raw[0][mid] == hist.back();
        for (const auto& q : raw) {
            for (std::size_t k = 0; k < levels.size(); ++k) {
                const double lo = hist.back() - q[k];
                const double hi = q[levels.size() - 1 - k] - hist.back();
                worst_sym = std::max(worst_sym, std::abs(lo - hi));
            }
        }
    }
    return {median_ok && worst_sym <= 1e-9,
            std::string("h=1 median exact: ") + (median_ok ? "yes" : "no") + ", max asymmetry " + fmt(worst_sym)};
}

// 7
Outcome median_robustness() {
    Rng rng(707);
    int median_in = 0, mean_out = 0;
    const int n = 1000;
    for (int t = 0; t < n; ++t) {
        const std::size_t m = 3 + rng.index(8);
        std::vector<double> v(m);
        for (auto& x : v) x = rng.uniform() * 1000.0;
        v[rng.index(m)] = 1e9;
        const std::vector<double> w(m, 1.0 / static_cast<double>(m));
        auto sorted = v;
        std::sort(sorted.begin(), sorted.end());
        const double lo = sorted[1], hi = sorted[m - 2];
        const double med = combine_level(Combiner::median, v, w);
        const double mean = combine_level(Combiner::mean, v, w);
        median_in += med >= lo && med <= hi;
        mean_out += mean > hi;
    }
    return {median_in == n && mean_out == n, "median within bracket " + std::to_string(median_in) + "/" +
                                                 std::to_string(n) + ", mean above bracket " +
                                                 std::to_string(mean_out) + "/" + std::to_string(n)};
}

// 8
Outcome tail_fit_recovery() {
    const auto levels = QuantileLevelSet::preset(23);
    Rng rng(808);
    double worst_ab = 0.0, worst_cdf = 0.0, worst_mass = 0.0;
    for (TailFamily fam : {TailFamily::normal, TailFamily::cauchy}) {
        for (int t = 0; t < 50; ++t) {
            const double a = (rng.uniform() - 0.5) * 200.0;
            const double b = 0.5 + rng.uniform() * 20.0;
            std::vector<double> q(levels.size());
            for (std::size_t k = 0; k < q.size(); ++k) q[k] = a + b * family::quantile(fam, levels[k]);
            const DensityApprox d(std::vector<double>(levels.levels().begin(), levels.levels().end()), q, fam);
            for (const TailFit* tf : {&d.lower_tail(), &d.upper_tail()}) {
                worst_ab = std::max({worst_ab, std::abs(tf->location - a), std::abs(tf->scale - b)});
            }
            for (std::size_t k = 0; k < q.size(); ++k) {
                worst_cdf = std::max(worst_cdf, std::abs(d.cdf(q[k]) - levels[k]));
            }
            // Tail masses are the fitted tail CDFs at the outer quantiles; the interior
            // density is integrated by composite Simpson on each knot interval.
            double mass = d.cdf(q.front()) + (1.0 - d.cdf(std::nextafter(q.back(), 1e300)));
            for (std::size_t k = 0; k + 1 < q.size(); ++k) {
                const int parts = 64;
                const double h = (q[k + 1] - q[k]) / parts;
                double s = 0.0;
                for (int i = 0; i <= parts; ++i) {
                    const double x = q[k] + i * h;
                    const double f = i == 0 ? d.density(std::nextafter(q[k], 1e300))
                                            : (i == parts ? d.density(std::nextafter(q[k + 1], -1e300)) : d.density(x));
                    s += f * (i == 0 || i == parts ? 1.0 : (i % 2 ? 4.0 : 2.0));
                }
                mass += s * h / 3.0;
            }
            worst_mass = std::max(worst_mass, std::abs(mass - 1.0));
        }
    }
    const bool ok = worst_ab <= 1e-9 && worst_cdf <= 1e-12 && worst_mass <= 1e-6;
    return {ok, "max (a,b) error " + fmt(worst_ab) + ", max CDF error at knots " + fmt(worst_cdf) +
                    ", max |mass - 1| " + fmt(worst_mass)};
}

// 9
Outcome wis_tail_invariance() {
    const auto levels = QuantileLevelSet::preset(23);
    const auto q = normal_quantiles(levels, 500.0, 50.0);
    const auto f = make_forecast("m", "L", monday0(), 1, levels, q);
    const auto normal = density_from_quantiles(f, TailFamily::normal);
    const auto cauchy = density_from_quantiles(f, TailFamily::cauchy);
    // Tail family never enters the WIS; score the same quantiles as held by each approximation.
    Rng rng(909);
    bool identical = true;
    for (int i = 0; i < 100; ++i) {
        const double y = 200.0 + rng.uniform() * 600.0;
        identical = identical && wis_value(normal.levels(), normal.values(), y) ==
                                     wis_value(cauchy.levels(), cauchy.values(), y);
    }
    const std::size_t k25 = levels.index_of(0.25).value(), k75 = levels.index_of(0.75).value();
    const double scale = q[k75] - q[k25];
    const double probe = q.back() + 6.0 * scale;
    const double gap = std::abs(neg_log_score(normal, probe) - neg_log_score(cauchy, probe));
    return {identical && gap > 1.0, std::string("WIS identical on 100 probes: ") + (identical ? "yes" : "no") +
                                        ", log-score gap at q_K + 6 IQR " + fmt(gap) + " nats"};
}

// 10
Outcome convex_optimality() {
    SimSpec spec = backtest_sim(1010, 20);
    spec.components = {{"a", 1.25, 1.0, 0.6}, {"b", 0.8, 1.0, 0.6}, {"c", 1.0, 2.5, 0.6}};
    const auto sim = simulate(spec);
    const Date s = sim.forecast_dates[16];
    auto set = build_training_set(sim.forecasts, sim.truth.snapshot_as_of(s),
                                  make_training_window(sim.forecasts.forecast_dates(), s, 10), s);
    set = set.restrict_models(std::vector<std::string>{"a", "b", "c"});
    const auto fit = convex_weights(set);
    const double n = static_cast<double>(set.cells.size());
    auto obj = [&](std::vector<double> w) { return ensemble_objective(set, w, Combiner::mean) / n; };
    double vertex = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < 3; ++v) {
        std::vector<double> e(3, 0.0);
        e[v] = 1.0;
        vertex = std::min(vertex, obj(e));
    }
    double grid = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 100; ++i) {
        for (int j = 0; i + j <= 100; ++j) grid = std::min(grid, obj({i / 100.0, j / 100.0, (100 - i - j) / 100.0}));
    }
    const bool ok = fit.objective <= vertex + 1e-12 && fit.objective <= grid + 1e-3;
    return {ok, "optimizer " + fmt(fit.objective) + ", best vertex " + fmt(vertex) + ", 0.01 grid " + fmt(grid)};
}

// 11
Outcome revision_rule() {
    struct Case {
        double initial, final_value;
        bool flag;
    };
    const std::vector<Case> table{
        {100, 120, false},   // +20 but only 20%
        {30, 50, true},      // +20 and 67%
        {30, 49, false},     // +19
        {100, 140, true},    // exactly 40%
        {100, 139.9, false}, // 39.9% of initial, 28.5% of final
        {-10, 15, true},     // negative initial
        {-50, -20, true},    // both negative, 60%
        {0, 25, true},       // from zero
        {0, 19, false},      // below absolute threshold
        {1000, 1300, false}, // 30%
        {1000, 600, true},   // -40% of initial
        {150, 100, true},    // 33% of initial but 50% of final
    };
    int matched = 0;
    for (const auto& c : table) matched += is_revision(c.initial, c.final_value) == c.flag;
    return {matched == static_cast<int>(table.size()),
            std::to_string(matched) + "/" + std::to_string(table.size()) + " cases match"};
}

// 12
Outcome causality() {
    SimSpec spec = backtest_sim(1212, 20);
    spec.revision_prob = 0.1;
    const auto sim = simulate(spec);
    std::vector<EnsembleSpec> specs(3);
    specs[0].id = "sig";
    specs[0].weighting = Weighting::rel_wis_sigmoid;
    specs[0].top_k = 5;
    specs[1].id = "cvx";
    specs[1].combiner = Combiner::mean;
    specs[1].weighting = Weighting::convex_direct;
    specs[2].id = "ph";
    specs[2].weighting = Weighting::rel_wis_sigmoid;
    specs[2].sharing = Sharing::per_horizon;
    specs[2].theta_grid = std::vector<double>{0.0, 0.5, 1.0, 2.0, 5.0, 10.0};
    for (auto& e : specs) e.window_weeks = 10;
    int checked = 0, identical = 0;
    Rng rng(1213);
    for (std::size_t i = 1; i < sim.forecast_dates.size(); i += 3) {
        const Date s = sim.forecast_dates[i];
        TruthStore mutated;
        for (const auto& [as_of, snap] : sim.truth.snapshots()) {
            TruthSnapshot copy = snap;
            if (s < as_of) {
                for (auto& [loc, series] : copy) {
                    for (auto& [d, v] : series) v = std::round(v * (0.5 + rng.uniform()) + 100.0);
                }
            }
            mutated.add_snapshot(as_of, std::move(copy));
        }
        for (const auto& e : specs) {
            const std::vector<Date> one{s};
            const auto a = train_and_forecast(sim.forecasts, sim.truth, e, one);
            const auto b = train_and_forecast(sim.forecasts, mutated, e, one);
            ++checked;
            identical += forecast_writer(a.forecasts).str() == forecast_writer(b.forecasts).str() &&
                         weight_log_writer(a.weights).str() == weight_log_writer(b.weights).str();
        }
    }
    return {identical == checked, std::to_string(identical) + "/" + std::to_string(checked) +
                                      " (spec, forecast date) runs byte-identical after mutating later snapshots"};
}

// 13
Outcome oracle_coverage() {
    SimSpec spec;
    spec.seed = 1313;
    spec.n_locations = 50;
    spec.n_weeks = 100;
    spec.levels = 23;
    spec.include_baseline = false;
    spec.components = {{"oracle"}};
    spec.components[0].oracle = true;
    const auto sim = simulate(spec);
    // One horizon only, so every pair has its own target week.
    std::vector<const QuantileForecast*> fs;
    std::vector<double> ys;
    for (const auto* f : sim.forecasts.all()) {
        if (f->key().horizon != 1) continue;
        fs.push_back(f);
        ys.push_back(*sim.truth.latest_value(f->key().location, f->key().target_end_date));
    }
    const auto t = coverage_rates(fs, ys);
    double worst = 0.0;
    for (std::size_t k = 0; k < t.levels.size(); ++k) worst = std::max(worst, std::abs(t.rate[k] - t.levels[k]));
    return {worst <= 0.02 && t.n >= 5000, "N = " + std::to_string(t.n) + ", max |empirical - nominal| " + fmt(worst)};
}

// Mean WIS of two ensembles over the cells both produced, scored against final truth.
std::pair<double, double> paired_mean_wis(const SimResult& sim, const BacktestResult& a, const BacktestResult& b) {
    double sa = 0.0, sb = 0.0;
    int n = 0;
    for (const auto* f : a.forecasts.all()) {
        const auto& k = f->key();
        const auto* g = b.forecasts.find(b.forecasts.models().front(), k.location, k.forecast_date, k.horizon);
        const auto y = sim.truth.latest_value(k.location, k.target_end_date);
        if (!g || !y) continue;
        sa += wis(*f, *y).wis;
        sb += wis(*g, *y).wis;
        ++n;
    }
    return {sa / n, sb / n};
}

SimSpec scenario_base(std::uint64_t seed) {
    SimSpec s;
    s.seed = seed;
    s.n_locations = 10;
    s.n_weeks = 40;
    s.levels = 23;
    s.waves = {Wave{3000, 12, 4}, Wave{2000, 32, 3}};
    return s;
}

struct Comparison {
    double trained = 0.0, equal = 0.0;
    int dates = 0, sharpened = 0, warnings = 0;
};

Comparison trained_vs_equal(const SimSpec& scenario) {
    const auto sim = simulate(scenario);
    EnsembleSpec trained;
    trained.id = "rel_wis_median";
    trained.weighting = Weighting::rel_wis_sigmoid;
    trained.top_k = 10;
    trained.window_weeks = 12;
    EnsembleSpec equal;
    equal.id = "equal_median";
    equal.top_k = std::nullopt;
    // Evaluate once a full training window is available.
    const std::vector<Date> dates(sim.forecast_dates.begin() + 12, sim.forecast_dates.end());
    const auto a = train_and_forecast(sim.forecasts, sim.truth, trained, dates);
    const auto b = train_and_forecast(sim.forecasts, sim.truth, equal, dates);
    Comparison c;
    std::tie(c.trained, c.equal) = paired_mean_wis(sim, a, b);
    std::set<Date> sharp;
    for (const auto& w : a.weights) {
        if (w.theta && *w.theta > 0.0) sharp.insert(w.forecast_date);
    }
    c.dates = static_cast<int>(dates.size());
    c.sharpened = static_cast<int>(sharp.size());
    c.warnings = static_cast<int>(a.warnings.size());
    return c;
}

// 14
Outcome trained_vs_untrained() {
    SimSpec skilled = scenario_base(1414);
    skilled.components = {{"skilled", 1.0, 1.0, 0.15}, {"high", 1.25, 1.0, 0.6}, {"low", 0.8, 1.0, 0.6},
                          {"wide", 1.0, 2.5, 0.6},      {"noisy", 1.0, 1.0, 1.5}, {"narrow", 1.15, 0.5, 0.8},
                          {"under", 0.9, 0.7, 0.8}};
    const Comparison sk = trained_vs_equal(skilled);

    // Every component alternates between a sharp regime and a badly biased one,
    // six weeks each; half are out of phase with the other half.
    SimSpec switching = scenario_base(1415);
    const std::vector<std::pair<double, double>> good{{1.0, 0.2}, {1.05, 0.3}, {0.95, 0.3}, {1.0, 0.4},
                                                      {1.02, 0.25}, {0.98, 0.35}};
    for (std::size_t i = 0; i < good.size(); ++i) {
        ComponentProfile p("sw" + std::to_string(i + 1), good[i].first, 1.0, good[i].second);
        p.schedule.kind = SkillSchedule::Kind::regime_switching;
        p.schedule.period = 6;
        p.schedule.phase = i % 2 ? 6 : 0;
        p.schedule.alt_bias = i % 4 < 2 ? 1.5 : 0.6;
        p.schedule.alt_dispersion = 1.0;
        p.schedule.alt_center_noise = 1.0;
        switching.components.push_back(p);
    }
    const Comparison rs = trained_vs_equal(switching);
    auto describe = [](const Comparison& c) {
        return "trained " + fmt(c.trained) + " vs equal " + fmt(c.equal) + " (theta > 0 on " +
               std::to_string(c.sharpened) + "/" + std::to_string(c.dates) + " dates, " +
               std::to_string(c.warnings) + " warnings)";
    };
    const bool ok = sk.trained < sk.equal && rs.trained >= rs.equal;
    return {ok, "persistent skill: " + describe(sk) + "; regime switching: " + describe(rs)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"WIS-pinball equivalence", wis_pinball},
        {"properness smoke test", properness},
        {"relative WIS reduction", rwis_reduction},
        {"theta = 0 identity", theta_zero_identity},
        {"weight-cap equivalence", weight_cap_equivalence},
        {"baseline anchoring", baseline_anchoring},
        {"weighted-median robustness", median_robustness},
        {"tail-fit recovery", tail_fit_recovery},
        {"WIS tail invariance", wis_tail_invariance},
        {"convex-weight optimality", convex_optimality},
        {"revision rule", revision_rule},
        {"causality", causality},
        {"calibrated-oracle coverage", oracle_coverage},
        {"trained vs untrained", trained_vs_untrained},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
