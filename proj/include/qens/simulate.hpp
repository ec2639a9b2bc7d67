#pragma once

// Synthetic forecast hub. Each location's weekly mean follows a base level plus a
// sum of logistic-derivative waves; observations are mean + sd * Z rounded to
// whole counts, with sd = dispersion * sqrt(mean). Components publish normal quantiles around a
// perturbed center, so an "oracle" component reporting the generating quantiles
// is calibrated by construction.

#include <cmath>
#include <cstdio>
#include <set>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "json.hpp"

#include "qens/analysis.hpp"
#include "qens/baseline.hpp"
#include "qens/errors.hpp"
#include "qens/forecast_data.hpp"
#include "qens/random.hpp"

namespace qens {

struct Wave {
    double amplitude = 2000.0;  ///< peak height added to the base level
    double center = 20.0;       ///< week index of the peak (weeks after the first forecast date)
    double width = 3.0;         ///< logistic scale in weeks
};

struct SkillSchedule {
    enum class Kind { constant, regime_switching };
    Kind kind = Kind::constant;
    int period = 6;  ///< weeks per regime
    int phase = 0;
    // Profile used in odd regimes.
    double alt_bias = 1.0;
    double alt_dispersion = 1.0;
    double alt_center_noise = 0.0;

    /// True when the component uses its alternate profile at week index `week`.
    bool alternate(int week) const {
        if (kind == Kind::constant) {
            return false;
        }
        const int shifted = week + phase;
        const int regime = shifted >= 0 ? shifted / period : -((-shifted + period - 1) / period);
        return (regime % 2 + 2) % 2 == 1;
    }
};

struct ComponentProfile {
    ComponentProfile() = default;
    ComponentProfile(std::string id, double b = 1.0, double disp = 1.0, double noise = 0.5)
        : name(std::move(id)), bias(b), dispersion(disp), center_noise(noise) {}

    std::string name;
    double bias = 1.0;          ///< multiplier on the true mean
    double dispersion = 1.0;    ///< multiplier on the true sd
    double center_noise = 0.5;  ///< sd of the forecast center's random error, in true sds
    double outlier_prob = 0.0;
    double outlier_magnitude = 3.0;  ///< outlying centers are scaled by (1 + magnitude)
    double missing_prob = 0.0;
    SkillSchedule schedule;
    bool oracle = false;
};

struct SimSpec {
    std::uint64_t seed = 1;
    int n_locations = 10;
    int n_weeks = 30;   ///< forecast dates
    int warmup = 8;     ///< observed weeks before the first forecast date
    int window = 12;    ///< training window the scenario is meant for
    Date start = Date::from_ymd(2020, 6, 1);  ///< first forecast date (a Monday)
    double base = 1000.0;
    double dispersion = 1.0;
    std::vector<Wave> waves{Wave{}};
    double location_jitter = 0.3;  ///< relative spread of wave amplitudes across locations
    double revision_prob = 0.0;
    double revision_fraction = 0.5;  ///< first reports are (1 - fraction) * value
    int revision_lag = 2;            ///< weeks until the corrected value is published
    std::vector<ComponentProfile> components;
    int levels = 23;
    bool include_baseline = true;

    void validate() const {
        auto prob = [](double p, const std::string& what) {
            if (!(p >= 0.0 && p <= 1.0)) {
                throw ConfigError(what + " must lie in [0, 1]");
            }
        };
        if (n_locations < 1) throw ConfigError("n_locations must be at least 1");
        if (warmup < 2) throw ConfigError("warmup must be at least 2 weeks");
        if (window < 1) throw ConfigError("window must be at least 1");
        if (n_weeks < window + 10) throw ConfigError("n_weeks must be at least window + 10");
        if (start.weekday() != 1) throw ConfigError("start must be a Monday");
        if (!(base > 0.0) || !(dispersion >= 0.0)) throw ConfigError("base must be positive, dispersion nonnegative");
        if (!(location_jitter >= 0.0 && location_jitter < 1.0)) throw ConfigError("location_jitter must lie in [0, 1)");
        prob(revision_prob, "revision_prob");
        prob(revision_fraction, "revision_fraction");
        if (revision_lag < 1) throw ConfigError("revision_lag must be at least 1");
        for (const auto& w : waves) {
            if (!(w.width > 0.0) || !(w.amplitude >= 0.0)) throw ConfigError("waves need width > 0 and amplitude >= 0");
        }
        if (components.empty()) throw ConfigError("simulation needs at least one component");
        std::set<std::string> names;
        for (const auto& c : components) {
            if (c.name.empty() || c.name == "baseline" || !names.insert(c.name).second) {
                throw ConfigError("component names must be unique, nonempty and not 'baseline'");
            }
            prob(c.outlier_prob, c.name + ".outlier_prob");
            prob(c.missing_prob, c.name + ".missing_prob");
            if (!(c.bias > 0.0) || !(c.dispersion > 0.0) || !(c.center_noise >= 0.0)) {
                throw ConfigError(c.name + ": bias and dispersion must be positive, center_noise nonnegative");
            }
            if (c.schedule.kind == SkillSchedule::Kind::regime_switching && c.schedule.period < 1) {
                throw ConfigError(c.name + ": regime period must be at least 1");
            }
        }
        (void)QuantileLevelSet::preset(levels);
    }
};

inline void to_json(nlohmann::json& j, const Wave& w) {
    j = {{"amplitude", w.amplitude}, {"center", w.center}, {"width", w.width}};
}

inline void from_json(const nlohmann::json& j, Wave& w) {
    w = Wave{};
    w.amplitude = j.value("amplitude", w.amplitude);
    w.center = j.value("center", w.center);
    w.width = j.value("width", w.width);
}

inline void to_json(nlohmann::json& j, const ComponentProfile& c) {
    j = {{"name", c.name},
         {"bias", c.bias},
         {"dispersion", c.dispersion},
         {"center_noise", c.center_noise},
         {"outlier_prob", c.outlier_prob},
         {"outlier_magnitude", c.outlier_magnitude},
         {"missing_prob", c.missing_prob},
         {"oracle", c.oracle}};
    if (c.schedule.kind == SkillSchedule::Kind::constant) {
        j["schedule"] = {{"type", "constant"}};
    } else {
        j["schedule"] = {{"type", "regime_switching"},
                         {"period", c.schedule.period},
                         {"phase", c.schedule.phase},
                         {"alt_bias", c.schedule.alt_bias},
                         {"alt_dispersion", c.schedule.alt_dispersion},
                         {"alt_center_noise", c.schedule.alt_center_noise}};
    }
}

inline void from_json(const nlohmann::json& j, ComponentProfile& c) {
    c = ComponentProfile{};
    c.name = j.at("name").get<std::string>();
    c.bias = j.value("bias", c.bias);
    c.dispersion = j.value("dispersion", c.dispersion);
    c.center_noise = j.value("center_noise", c.center_noise);
    c.outlier_prob = j.value("outlier_prob", c.outlier_prob);
    c.outlier_magnitude = j.value("outlier_magnitude", c.outlier_magnitude);
    c.missing_prob = j.value("missing_prob", c.missing_prob);
    c.oracle = j.value("oracle", c.oracle);
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        const std::string type = s.value("type", std::string("constant"));
        if (type == "regime_switching") {
            c.schedule.kind = SkillSchedule::Kind::regime_switching;
            c.schedule.period = s.value("period", c.schedule.period);
            c.schedule.phase = s.value("phase", c.schedule.phase);
            c.schedule.alt_bias = s.value("alt_bias", c.schedule.alt_bias);
            c.schedule.alt_dispersion = s.value("alt_dispersion", c.schedule.alt_dispersion);
            c.schedule.alt_center_noise = s.value("alt_center_noise", c.schedule.alt_center_noise);
        } else if (type != "constant") {
            throw ConfigError("unknown skill schedule '" + type + "'");
        }
    }
}

inline void to_json(nlohmann::json& j, const SimSpec& s) {
    j = {{"seed", s.seed},
         {"n_locations", s.n_locations},
         {"n_weeks", s.n_weeks},
         {"warmup", s.warmup},
         {"window", s.window},
         {"start", s.start.iso()},
         {"base", s.base},
         {"dispersion", s.dispersion},
         {"waves", s.waves},
         {"location_jitter", s.location_jitter},
         {"revision_prob", s.revision_prob},
         {"revision_fraction", s.revision_fraction},
         {"revision_lag", s.revision_lag},
         {"components", s.components},
         {"levels", s.levels},
         {"include_baseline", s.include_baseline}};
}

inline void from_json(const nlohmann::json& j, SimSpec& s) {
    try {
        s = SimSpec{};
        s.seed = j.value("seed", s.seed);
        s.n_locations = j.value("n_locations", s.n_locations);
        s.n_weeks = j.value("n_weeks", s.n_weeks);
        s.warmup = j.value("warmup", s.warmup);
        s.window = j.value("window", s.window);
        if (j.contains("start")) {
            s.start = Date::parse(j.at("start").get<std::string>());
        }
        s.base = j.value("base", s.base);
        s.dispersion = j.value("dispersion", s.dispersion);
        if (j.contains("waves")) s.waves = j.at("waves").get<std::vector<Wave>>();
        s.location_jitter = j.value("location_jitter", s.location_jitter);
        s.revision_prob = j.value("revision_prob", s.revision_prob);
        s.revision_fraction = j.value("revision_fraction", s.revision_fraction);
        s.revision_lag = j.value("revision_lag", s.revision_lag);
        s.components = j.at("components").get<std::vector<ComponentProfile>>();
        s.levels = j.value("levels", s.levels);
        s.include_baseline = j.value("include_baseline", s.include_baseline);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid simulation spec: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid simulation spec: ") + e.what());
    }
    s.validate();
}

struct SimResult {
    SubmissionSet forecasts;
    TruthStore truth;
    std::vector<AnomalyRecord> anomalies;  ///< injected revisions
    std::vector<Date> forecast_dates;
    /// Generating mean and sd of every observed week (for generator checks).
    std::map<std::string, std::map<Date, std::pair<double, double>>> truth_law;
};

namespace detail {

inline double logistic_wave(const Wave& w, double t) {
    const double e = std::exp(-(t - w.center) / w.width);
    return w.amplitude * 4.0 * e / ((1.0 + e) * (1.0 + e));
}

enum : std::uint64_t { kTagLocation = 1, kTagTruth = 2, kTagRevision = 3, kTagComponent = 4 };

inline std::uint64_t stream_tag(std::uint64_t kind, std::uint64_t a, std::uint64_t b = 0) {
    return (kind << 48) ^ (a << 24) ^ b;
}

}  // namespace detail

inline std::string sim_location_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "L%02d", i + 1);
    return buf;
}

/// Runs the generator. Deterministic in spec (including the seed).
inline SimResult simulate(const SimSpec& spec) {
    spec.validate();
    const QuantileLevelSet levels = QuantileLevelSet::preset(spec.levels);
    const boost::math::normal_distribution<double> std_normal;
    std::vector<double> z(levels.size());
    for (std::size_t k = 0; k < levels.size(); ++k) {
        z[k] = boost::math::quantile(std_normal, levels[k]);
    }

    SimResult out{SubmissionSet(levels), {}, {}, {}, {}};
    for (int i = 0; i < spec.n_weeks; ++i) {
        out.forecast_dates.push_back(spec.start.plus_weeks(i));
    }
    // Observed weeks: Saturdays from `warmup` weeks before the first forecast
    // date through the last horizon-4 target. Week index 0 = first target week.
    const Date first_target = target_end_date(spec.start, 1);
    const int n_obs = spec.warmup + spec.n_weeks + kMaxHorizon - 1;
    auto week_date = [&](int j) { return first_target.plus_weeks(j - spec.warmup); };

    // Truth.
    struct Obs {
        double mean, sd, value, initial;
        bool revised;
    };
    std::vector<std::string> locations;
    std::map<std::string, std::vector<Obs>> series;
    for (int l = 0; l < spec.n_locations; ++l) {
        const std::string loc = sim_location_name(l);
        locations.push_back(loc);
        Rng lrng = Rng::derive(spec.seed, detail::stream_tag(detail::kTagLocation, static_cast<std::uint64_t>(l)));
        std::vector<Wave> waves = spec.waves;
        for (auto& w : waves) {
            w.amplitude *= 1.0 + spec.location_jitter * (2.0 * lrng.uniform() - 1.0);
            w.center += 2.0 * (2.0 * lrng.uniform() - 1.0);
        }
        Rng trng = Rng::derive(spec.seed, detail::stream_tag(detail::kTagTruth, static_cast<std::uint64_t>(l)));
        Rng rrng = Rng::derive(spec.seed, detail::stream_tag(detail::kTagRevision, static_cast<std::uint64_t>(l)));
        auto& obs = series[loc];
        for (int j = 0; j < n_obs; ++j) {
            const double t = static_cast<double>(j - spec.warmup);
            double mean = spec.base;
            for (const auto& w : waves) {
                mean += detail::logistic_wave(w, t);
            }
            const double sd = spec.dispersion * std::sqrt(mean);
            const double value = std::max(std::round(mean + sd * trng.normal()), 0.0);
            const bool revised = rrng.bernoulli(spec.revision_prob);
            const double initial = revised ? std::round(value * (1.0 - spec.revision_fraction)) : value;
            obs.push_back({mean, sd, value, initial, revised});
            out.truth_law[loc][week_date(j)] = {mean, sd};
        }
    }

    // Weekly snapshots: one per forecast date, then a final one after the last target.
    std::vector<Date> snapshot_dates = out.forecast_dates;
    snapshot_dates.push_back(week_date(n_obs - 1).plus_days(2));
    for (Date as_of : snapshot_dates) {
        TruthSnapshot snap;
        const bool final_snapshot = as_of == snapshot_dates.back();
        for (const auto& loc : locations) {
            auto& dst = snap[loc];
            const auto& obs = series[loc];
            for (int j = 0; j < n_obs; ++j) {
                const Date d = week_date(j);
                if (!(d < as_of)) {
                    break;
                }
                const bool corrected = final_snapshot || days_between(d, as_of) > 7 * spec.revision_lag;
                dst[d] = corrected ? obs[static_cast<std::size_t>(j)].value : obs[static_cast<std::size_t>(j)].initial;
            }
        }
        out.truth.add_snapshot(as_of, std::move(snap));
    }
    for (const auto& loc : locations) {
        const auto& obs = series[loc];
        for (int j = 0; j < n_obs; ++j) {
            const auto& o = obs[static_cast<std::size_t>(j)];
            if (o.revised) {
                out.anomalies.push_back({loc, week_date(j), AnomalyKind::revision, o.initial, o.value});
            }
        }
    }

    // Components.
    for (std::size_t c = 0; c < spec.components.size(); ++c) {
        const auto& prof = spec.components[c];
        for (int l = 0; l < spec.n_locations; ++l) {
            const std::string& loc = locations[static_cast<std::size_t>(l)];
            const auto& obs = series[loc];
            Rng rng = Rng::derive(spec.seed, detail::stream_tag(detail::kTagComponent, c, static_cast<std::uint64_t>(l)));
            for (int i = 0; i < spec.n_weeks; ++i) {
                const Date s = out.forecast_dates[static_cast<std::size_t>(i)];
                // Draws are consumed in a fixed pattern so missingness does not shift
                // the remaining stream.
                const bool missing = rng.bernoulli(prof.missing_prob);
                const bool alt = prof.schedule.alternate(i);
                const double bias = alt ? prof.schedule.alt_bias : prof.bias;
                const double disp = alt ? prof.schedule.alt_dispersion : prof.dispersion;
                const double noise = alt ? prof.schedule.alt_center_noise : prof.center_noise;
                std::vector<QuantileForecast> made;
                for (int h = 1; h <= kMaxHorizon; ++h) {
                    const Obs& o = obs[static_cast<std::size_t>(spec.warmup + i + h - 1)];
                    const double e = rng.normal();
                    const bool outlier = rng.bernoulli(prof.outlier_prob);
                    double center = o.mean;
                    double spread = o.sd;
                    if (!prof.oracle) {
                        center = o.mean * bias + noise * o.sd * e;
                        if (outlier) {
                            center *= 1.0 + prof.outlier_magnitude;
                        }
                        spread = o.sd * disp;
                    }
                    std::vector<double> q(levels.size());
                    for (std::size_t k = 0; k < levels.size(); ++k) {
                        q[k] = std::max(center + spread * z[k], 0.0);
                    }
                    made.emplace_back(ForecastKey::make(prof.name, loc, s, target_end_date(s, h)), levels,
                                      std::move(q));
                }
                if (missing) {
                    continue;
                }
                for (auto& f : made) {
                    out.forecasts.add(std::move(f));
                }
            }
        }
    }

    if (spec.include_baseline) {
        out.forecasts.merge(baseline_submissions(out.truth, out.forecast_dates, levels,
                                                 BaselineOptions{.seed = spec.seed}));
    }
    return out;
}

/// Writes forecasts (one CSV per model) and truth snapshots under `dir`.
inline void write_simulation(const SimResult& sim, const std::filesystem::path& dir) {
    std::map<std::string, SubmissionSet> by_model;
    for (const auto* f : sim.forecasts.all()) {
        auto it = by_model.try_emplace(f->key().model, sim.forecasts.levels()).first;
        it->second.add(*f);
    }
    for (const auto& [model, set] : by_model) {
        write_forecasts(dir / "forecasts" / (model + ".csv"), set);
    }
    write_truth_dir(dir / "truth", sim.truth);
    anomaly_writer(sim.anomalies).write_file(dir / "anomalies.csv");
}

}  // namespace qens
