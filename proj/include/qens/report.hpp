#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "qens/analysis.hpp"
#include "qens/errors.hpp"
#include "qens/forecast_data.hpp"
#include "qens/scoring.hpp"
#include "qens/training.hpp"

namespace qens {

/// Configuration of a full backtest-and-evaluate run.
struct RunConfig {
    std::filesystem::path forecast_dir;
    std::filesystem::path truth_dir;
    std::filesystem::path output_dir;
    int levels = 23;
    std::vector<EnsembleSpec> specs;
    std::optional<Date> development_start;  ///< first evaluated forecast date (default: earliest)
    std::optional<Date> prospective_start;  ///< dates on or after it are tagged prospective
    std::string baseline_model = "baseline";
    std::optional<std::string> reference;   ///< spec id of the equal-weight median reference
    std::optional<std::filesystem::path> outliers;  ///< manual outlier list
    bool revision_exclusions = false;
    int peak_radius = 5;
    MedianRule median_rule = MedianRule::interpolated;

    void validate() const {
        if (specs.empty()) {
            throw ConfigError("run config lists no ensemble specs");
        }
        std::set<std::string> ids;
        for (const auto& s : specs) {
            s.validate();
            if (!ids.insert(s.id).second) {
                throw ConfigError("duplicate spec id '" + s.id + "'");
            }
        }
        if (development_start && prospective_start && *prospective_start < *development_start) {
            throw ConfigError("prospective_start precedes development_start");
        }
        if (reference && !ids.count(*reference)) {
            throw ConfigError("reference spec '" + *reference + "' is not listed");
        }
        if (peak_radius < 1) {
            throw ConfigError("peak_radius must be at least 1");
        }
        (void)QuantileLevelSet::preset(levels);
    }
};

/// Parses a run config; relative paths are taken relative to `base_dir`.
inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    RunConfig c;
    auto path = [&](const std::string& key) {
        std::filesystem::path p = j.at(key).get<std::string>();
        return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    };
    auto date = [&](const std::string& key) -> std::optional<Date> {
        if (!j.contains(key) || j.at(key).is_null()) {
            return std::nullopt;
        }
        return Date::parse(j.at(key).get<std::string>());
    };
    try {
        c.forecast_dir = path("forecasts");
        c.truth_dir = path("truth");
        c.output_dir = path("output");
        c.levels = j.value("levels", c.levels);
        c.specs = j.at("specs").get<std::vector<EnsembleSpec>>();
        c.development_start = date("development_start");
        c.prospective_start = date("prospective_start");
        c.baseline_model = j.value("baseline", c.baseline_model);
        if (j.contains("reference")) c.reference = j.at("reference").get<std::string>();
        if (j.contains("outliers")) c.outliers = path("outliers");
        c.revision_exclusions = j.value("revision_exclusions", c.revision_exclusions);
        c.peak_radius = j.value("peak_radius", c.peak_radius);
        const std::string rule = j.value("median_rule", std::string("interpolated"));
        if (rule == "lower") {
            c.median_rule = MedianRule::lower;
        } else if (rule != "interpolated") {
            throw ConfigError("unknown median_rule '" + rule + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid run config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid run config: ") + e.what());
    }
    c.validate();
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot open config '" + file.string() + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(file.string() + ": " + e.what());
    }
    return parse_run_config(j, file.parent_path());
}

enum class Phase { development, prospective };

inline std::string to_string(Phase p) { return p == Phase::development ? "development" : "prospective"; }

/// The equal-weight median of all eligible components.
inline EnsembleSpec equal_median_spec(std::string id = "equal_median") {
    EnsembleSpec s;
    s.id = std::move(id);
    s.combiner = Combiner::median;
    s.weighting = Weighting::equal;
    s.top_k = std::nullopt;
    return s;
}

struct RunSummary {
    std::vector<std::string> files;
    std::vector<std::string> warnings;
    std::string reference;
};

namespace detail {

inline void write_coverage(const std::filesystem::path& path, const SubmissionSet& subs, const TruthSnapshot* truth,
                           std::span<const ScoreRow> scored, const std::vector<std::string>& models) {
    std::set<std::tuple<std::string, std::string, Date, int>> keep;
    for (const auto& r : scored) {
        keep.emplace(r.model, r.location, r.forecast_date, r.horizon);
    }
    csv::Writer w({"model", "level", "coverage", "n"});
    for (const auto& m : models) {
        std::vector<const QuantileForecast*> fs;
        std::vector<double> ys;
        for (const auto* f : subs.all()) {
            const auto& k = f->key();
            if (k.model != m || !keep.count({k.model, k.location, k.forecast_date, k.horizon})) {
                continue;
            }
            fs.push_back(f);
            ys.push_back(*TruthStore::lookup(truth, k.location, k.target_end_date));
        }
        if (fs.empty()) {
            continue;
        }
        const CoverageTable t = coverage_rates(fs, ys);
        for (std::size_t k = 0; k < t.levels.size(); ++k) {
            w.add({m, csv::format_double(t.levels[k]), csv::format_double(t.rate[k]), std::to_string(t.n)});
        }
    }
    w.write_file(path);
}

}  // namespace detail

/// Backtests every spec, scores ensembles and components against the latest
/// truth and writes the report bundle into config.output_dir.
inline RunSummary run(const RunConfig& config) {
    config.validate();
    namespace fs = std::filesystem;
    const QuantileLevelSet levels = QuantileLevelSet::preset(config.levels);
    const SubmissionSet components = load_forecast_dir(config.forecast_dir, levels);
    const TruthStore truth = load_truth_dir(config.truth_dir);
    if (truth.empty()) {
        throw DataError("no truth snapshots in '" + config.truth_dir.string() + "'");
    }
    const TruthSnapshot* final_truth = truth.latest();

    RunSummary summary;
    std::vector<EnsembleSpec> specs = config.specs;
    if (config.reference) {
        summary.reference = *config.reference;
    } else {
        const EnsembleSpec ref = equal_median_spec();
        auto it = std::find_if(specs.begin(), specs.end(), [&](const EnsembleSpec& s) {
            return s.combiner == Combiner::median && s.weighting == Weighting::equal && !s.top_k;
        });
        if (it != specs.end()) {
            summary.reference = it->id;
        } else {
            if (std::any_of(specs.begin(), specs.end(), [&](const EnsembleSpec& s) { return s.id == ref.id; })) {
                throw ConfigError("spec id '" + ref.id + "' is reserved for the equal-weight median reference");
            }
            specs.push_back(ref);
            summary.reference = ref.id;
            summary.warnings.push_back("no equal-weight median spec listed; added '" + ref.id + "' as reference");
        }
    }
    const std::vector<std::string> component_ids = components.models();
    for (const auto& s : specs) {
        if (std::find(component_ids.begin(), component_ids.end(), s.id) != component_ids.end()) {
            throw ConfigError("spec id '" + s.id + "' collides with a component model id");
        }
    }

    std::vector<Date> dates;
    for (Date d : components.forecast_dates()) {
        if (!config.development_start || !(d < *config.development_start)) {
            dates.push_back(d);
        }
    }
    if (dates.empty()) {
        throw DataError("no forecast dates to evaluate");
    }
    auto phase_of = [&](Date d) {
        return config.prospective_start && !(d < *config.prospective_start) ? Phase::prospective
                                                                              : Phase::development;
    };

    fs::create_directories(config.output_dir);
    auto emit = [&](const csv::Writer& w, const std::string& name) {
        w.write_file(config.output_dir / name);
        summary.files.push_back(name);
    };

    // Backtests.
    SubmissionSet everything(levels);
    for (const auto* f : components.all()) {
        if (std::binary_search(dates.begin(), dates.end(), f->key().forecast_date)) {
            everything.add(*f);
        }
    }
    std::vector<WeightLogRow> weight_log;
    TrainOptions opts{config.baseline_model, config.median_rule};
    for (const auto& spec : specs) {
        BacktestResult res;
        try {
            res = train_and_forecast(components, truth, spec, dates, opts);
        } catch (const Error& e) {
            throw DataError("spec " + spec.id + ": " + e.what());
        }
        emit(forecast_writer(res.forecasts), "ensembles/" + spec.id + ".csv");
        everything.merge(res.forecasts);
        weight_log.insert(weight_log.end(), res.weights.begin(), res.weights.end());
        summary.warnings.insert(summary.warnings.end(), res.warnings.begin(), res.warnings.end());
    }
    emit(weight_log_writer(weight_log), "weights.csv");

    // Scores against final truth, optionally minus revision/outlier exclusions.
    std::vector<ScoreRow> scores = score_submissions(everything, final_truth, true);
    if (config.revision_exclusions || config.outliers) {
        std::vector<AnomalyRecord> anomalies;
        if (config.revision_exclusions) {
            anomalies = detect_revisions(truth);
        }
        if (config.outliers) {
            auto extra = load_anomalies(*config.outliers);
            anomalies.insert(anomalies.end(), extra.begin(), extra.end());
        }
        std::vector<ForecastKey> keys;
        for (const auto* f : everything.all()) {
            keys.push_back(f->key());
        }
        const auto excluded = revision_exclusion_set(anomalies, keys, truth);
        std::erase_if(scores, [&](const ScoreRow& r) {
            ForecastKey k{r.model, r.location, r.forecast_date, r.target_end_date, r.horizon};
            return excluded.count(k) > 0;
        });
        emit(anomaly_writer(anomalies), "anomalies.csv");
    }
    emit(score_writer(scores), "scores.csv");
    std::map<Phase, std::vector<ScoreRow>> by_phase;
    for (const auto& r : scores) {
        by_phase[phase_of(r.forecast_date)].push_back(r);
    }
    for (Phase p : {Phase::development, Phase::prospective}) {
        emit(score_writer(by_phase[p]), "scores_" + to_string(p) + ".csv");
    }

    // Relative WIS.
    auto relwis_file = [&](std::span<const ScoreRow> rows, const std::string& name) {
        bool has_baseline = std::any_of(rows.begin(), rows.end(),
                                        [&](const ScoreRow& r) { return r.model == config.baseline_model; });
        if (!has_baseline) {
            summary.warnings.push_back(name + ": baseline '" + config.baseline_model + "' has no scores; skipped");
            return;
        }
        emit(relwis_writer(relative_wis(rows, config.baseline_model, Aggregation::geometric)), name);
    };
    relwis_file(scores, "relwis.csv");
    for (Phase p : {Phase::development, Phase::prospective}) {
        relwis_file(by_phase[p], "relwis_" + to_string(p) + ".csv");
    }

    // Coverage.
    {
        std::vector<std::string> models = everything.models();
        detail::write_coverage(config.output_dir / "coverage.csv", everything, final_truth, scores, models);
        summary.files.push_back("coverage.csv");
    }

    // WIS difference against the reference, per spec and forecast date.
    {
        using Cell = std::tuple<std::string, Date, int>;
        std::map<std::string, std::map<Cell, double>> wis_by;
        for (const auto& r : scores) {
            wis_by[r.model][{r.location, r.forecast_date, r.horizon}] = r.wis;
        }
        const auto& ref = wis_by[summary.reference];
        csv::Writer w({"spec_id", "forecast_date", "phase", "n", "mean_wis", "reference_mean_wis", "difference"});
        for (const auto& spec : specs) {
            std::map<Date, std::tuple<std::size_t, double, double>> acc;
            for (const auto& [cell, v] : wis_by[spec.id]) {
                auto it = ref.find(cell);
                if (it == ref.end()) {
                    continue;
                }
                auto& [n, a, b] = acc[std::get<1>(cell)];
                ++n;
                a += v;
                b += it->second;
            }
            for (const auto& [d, t] : acc) {
                const auto& [n, a, b] = t;
                const double dn = static_cast<double>(n);
                const double ma = a / dn, mb = b / dn;
                w.add({spec.id, d.iso(), to_string(phase_of(d)), std::to_string(n), csv::format_double(ma),
                       csv::format_double(mb), csv::format_double(ma - mb)});
            }
        }
        emit(w, "wis_difference.csv");
    }

    // Errors of the predictive median, overall and for forecasts issued the week before a peak.
    {
        const auto peaks = detect_peaks(*final_truth, config.peak_radius);
        emit(peak_writer(peaks), "peaks.csv");
        std::set<std::pair<std::string, Date>> peak_set;
        for (const auto& p : peaks) {
            peak_set.emplace(p.location, p.peak_week);
        }
        const auto mid = levels.index_of(0.5);
        csv::Writer w({"spec_id", "subset", "horizon", "n", "mean_error", "median_error"});
        csv::Writer detail_w({"spec_id", "location", "peak_week", "forecast_date", "horizon", "median", "observed",
                              "error"});
        if (mid) {
            std::set<std::tuple<std::string, std::string, Date, int>> scored;
            for (const auto& r : scores) {
                scored.emplace(r.model, r.location, r.forecast_date, r.horizon);
            }
            for (const auto& spec : specs) {
                std::map<std::pair<std::string, int>, std::vector<double>> errs;
                for (const auto* f : everything.all()) {
                    const auto& k = f->key();
                    if (k.model != spec.id || !scored.count({k.model, k.location, k.forecast_date, k.horizon})) {
                        continue;
                    }
                    const double y = *TruthStore::lookup(final_truth, k.location, k.target_end_date);
                    const double e = f->value(*mid) - y;
                    errs[{"all", k.horizon}].push_back(e);
                    const Date peak = target_end_date(k.forecast_date, 1);
                    if (peak_set.count({k.location, peak})) {
                        errs[{"pre_peak", k.horizon}].push_back(e);
                        detail_w.add({spec.id, k.location, peak.iso(), k.forecast_date.iso(),
                                      std::to_string(k.horizon), csv::format_double(f->value(*mid)),
                                      csv::format_double(y), csv::format_double(e)});
                    }
                }
                for (auto& [key, v] : errs) {
                    double sum = 0.0;
                    for (double e : v) {
                        sum += e;
                    }
                    std::sort(v.begin(), v.end());
                    const double med = sample_quantile_type7(v, 0.5);
                    w.add({spec.id, key.first, std::to_string(key.second), std::to_string(v.size()),
                           csv::format_double(sum / static_cast<double>(v.size())), csv::format_double(med)});
                }
            }
        } else {
            summary.warnings.push_back("level set has no median; peak errors skipped");
        }
        emit(w, "peak_errors.csv");
        emit(detail_w, "peak_forecasts.csv");
    }

    // Manifest.
    nlohmann::json manifest;
    manifest["levels"] = config.levels;
    manifest["baseline"] = config.baseline_model;
    manifest["reference"] = summary.reference;
    manifest["specs"] = specs;
    manifest["forecast_dates"] = nlohmann::json::array();
    for (Date d : dates) {
        manifest["forecast_dates"].push_back({{"date", d.iso()}, {"phase", to_string(phase_of(d))}});
    }
    manifest["components"] = components.models();
    manifest["n_scores"] = scores.size();
    std::sort(summary.files.begin(), summary.files.end());
    summary.files.push_back("manifest.json");
    manifest["files"] = summary.files;
    manifest["warnings"] = summary.warnings;
    std::ofstream out(config.output_dir / "manifest.json");
    out << manifest.dump(2) << '\n';
    if (!out) {
        throw DataError("cannot write manifest in '" + config.output_dir.string() + "'");
    }
    return summary;
}

}  // namespace qens
