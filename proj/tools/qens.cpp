#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "qens/qens.hpp"

namespace fs = std::filesystem;
using namespace qens;

namespace {

nlohmann::json read_json(const fs::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot open config '" + file.string() + "'");
    }
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(file.string() + ": " + e.what());
    }
}

Date parse_date_flag(const std::string& flag, const std::string& text) {
    try {
        return Date::parse(text);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(flag + ": " + e.what());
    }
}

void emit(const csv::Writer& w, const std::string& out) {
    if (out.empty() || out == "-") {
        std::cout << w.str();
    } else {
        w.write_file(out);
    }
}

const TruthSnapshot* pick_snapshot(const TruthStore& truth, const std::string& as_of) {
    if (as_of.empty()) {
        return truth.latest();
    }
    const TruthSnapshot* snap = truth.snapshot_as_of(parse_date_flag("--as-of", as_of));
    if (!snap) {
        throw DataError("no truth snapshot on or before " + as_of);
    }
    return snap;
}

RunConfig run_config(const std::string& file, const std::string& forecasts, const std::string& truth,
                     const std::string& out) {
    RunConfig cfg = load_run_config(file);
    if (!forecasts.empty()) cfg.forecast_dir = forecasts;
    if (!truth.empty()) cfg.truth_dir = truth;
    if (!out.empty()) cfg.output_dir = out;
    return cfg;
}

SubmissionSet load_forecast_path(const fs::path& p, int levels) {
    return load_forecast_dir(p, QuantileLevelSet::preset(levels));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantile forecast ensembles: simulation, combination, training and evaluation"};
    app.require_subcommand(1);

    int levels = 23;
    std::string config, out, forecasts, truth_dir, as_of, scores_file, baseline = "baseline";
    std::optional<std::uint64_t> seed;

    auto levels_opt = [&](CLI::App* sub) {
        sub->add_option("--levels", levels, "Quantile level preset")->check(CLI::IsMember({7, 23}));
    };

    auto* sim = app.add_subcommand("simulate", "Generate a synthetic forecast hub");
    sim->add_option("--config", config, "Simulation spec (JSON)")->required();
    sim->add_option("--seed", seed, "Override the spec's seed");
    sim->add_option("--out", out, "Output directory")->required();

    auto* ens = app.add_subcommand("ensemble", "Build one ensemble over a range of forecast dates");
    std::string from, to, weights_out;
    ens->add_option("--config", config, "Ensemble spec (JSON)")->required();
    ens->add_option("--forecasts", forecasts, "Component forecast CSV or directory")->required();
    ens->add_option("--truth", truth_dir, "Truth snapshot directory")->required();
    ens->add_option("--from", from, "First forecast date (default: earliest)");
    ens->add_option("--to", to, "Last forecast date (default: latest)");
    ens->add_option("--baseline", baseline, "Baseline model id");
    ens->add_option("--weights", weights_out, "Weight log CSV");
    ens->add_option("--out", out, "Ensemble forecast CSV (default: stdout)");
    levels_opt(ens);

    auto* score = app.add_subcommand("score", "Score forecasts with WIS");
    score->add_option("--forecasts", forecasts, "Forecast CSV or directory")->required();
    score->add_option("--truth", truth_dir, "Truth snapshot directory")->required();
    score->add_option("--as-of", as_of, "Score against the snapshot available on this date");
    score->add_option("--out", out, "Score CSV (default: stdout)");
    levels_opt(score);

    auto* relwis = app.add_subcommand("relwis", "Relative WIS from a score table");
    std::string aggregation = "geometric";
    relwis->add_option("--scores", scores_file, "Score CSV")->required();
    relwis->add_option("--baseline", baseline, "Baseline model id");
    relwis->add_option("--aggregation", aggregation, "geometric or arithmetic");
    relwis->add_option("--out", out, "Output CSV (default: stdout)");

    auto* cov = app.add_subcommand("coverage", "One-sided quantile coverage per model");
    cov->add_option("--forecasts", forecasts, "Forecast CSV or directory")->required();
    cov->add_option("--truth", truth_dir, "Truth snapshot directory")->required();
    cov->add_option("--as-of", as_of, "Use the snapshot available on this date");
    cov->add_option("--out", out, "Output CSV (default: stdout)");
    levels_opt(cov);

    auto* peaks = app.add_subcommand("peaks", "Local peaks of the weekly truth");
    int radius = 5;
    peaks->add_option("--truth", truth_dir, "Truth snapshot directory")->required();
    peaks->add_option("--as-of", as_of, "Use the snapshot available on this date");
    peaks->add_option("--radius", radius, "Half-width of the peak window in weeks")->check(CLI::PositiveNumber);
    peaks->add_option("--out", out, "Output CSV (default: stdout)");

    auto* anom = app.add_subcommand("anomalies", "Reporting revisions between first and latest reports");
    std::string outliers;
    RevisionThresholds thr;
    anom->add_option("--truth", truth_dir, "Truth snapshot directory")->required();
    anom->add_option("--outliers", outliers, "Manual outlier list to append");
    anom->add_option("--absolute", thr.absolute, "Absolute change threshold");
    anom->add_option("--relative", thr.relative, "Relative change threshold");
    anom->add_option("--out", out, "Output CSV (default: stdout)");

    auto* bt = app.add_subcommand("backtest", "Run every spec of a run config; write ensembles and weights");
    bt->add_option("--config", config, "Run config (JSON)")->required();
    bt->add_option("--forecasts", forecasts, "Override the config's forecast directory");
    bt->add_option("--truth", truth_dir, "Override the config's truth directory");
    bt->add_option("--out", out, "Override the config's output directory");

    auto* rep = app.add_subcommand("report", "Backtest, score and write the report bundle");
    rep->add_option("--config", config, "Run config (JSON)")->required();
    rep->add_option("--forecasts", forecasts, "Override the config's forecast directory");
    rep->add_option("--truth", truth_dir, "Override the config's truth directory");
    rep->add_option("--out", out, "Override the config's output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*sim) {
            SimSpec spec = read_json(config).get<SimSpec>();
            if (seed) {
                spec.seed = *seed;
            }
            write_simulation(simulate(spec), out);
        } else if (*ens) {
            const EnsembleSpec spec = read_json(config).get<EnsembleSpec>();
            const SubmissionSet subs = load_forecast_path(forecasts, levels);
            const TruthStore truth = load_truth_dir(truth_dir);
            std::vector<Date> dates;
            const std::optional<Date> lo = from.empty() ? std::nullopt : std::optional(parse_date_flag("--from", from));
            const std::optional<Date> hi = to.empty() ? std::nullopt : std::optional(parse_date_flag("--to", to));
            for (Date d : subs.forecast_dates()) {
                if ((!lo || !(d < *lo)) && (!hi || !(*hi < d))) {
                    dates.push_back(d);
                }
            }
            const BacktestResult res = train_and_forecast(subs, truth, spec, dates, TrainOptions{baseline});
            for (const auto& w : res.warnings) {
                std::cerr << "warning: " << w << '\n';
            }
            emit(forecast_writer(res.forecasts), out);
            if (!weights_out.empty()) {
                weight_log_writer(res.weights).write_file(weights_out);
            }
        } else if (*score) {
            const SubmissionSet subs = load_forecast_path(forecasts, levels);
            const TruthStore truth = load_truth_dir(truth_dir);
            emit(score_writer(score_submissions(subs, pick_snapshot(truth, as_of), true)), out);
        } else if (*relwis) {
            const auto rows = parse_scores(csv::read_file(scores_file));
            emit(relwis_writer(relative_wis(rows, baseline, parse_aggregation(aggregation))), out);
        } else if (*cov) {
            const SubmissionSet subs = load_forecast_path(forecasts, levels);
            const TruthStore truth = load_truth_dir(truth_dir);
            const TruthSnapshot* snap = pick_snapshot(truth, as_of);
            csv::Writer w({"model", "level", "coverage", "n"});
            for (const auto& m : subs.models()) {
                std::vector<const QuantileForecast*> fs_;
                std::vector<double> ys;
                for (const auto* f : subs.all()) {
                    if (f->key().model != m) {
                        continue;
                    }
                    auto y = TruthStore::lookup(snap, f->key().location, f->key().target_end_date);
                    if (!y || *y < 0.0) {
                        continue;
                    }
                    fs_.push_back(f);
                    ys.push_back(*y);
                }
                if (fs_.empty()) {
                    continue;
                }
                const CoverageTable t = coverage_rates(fs_, ys);
                for (std::size_t k = 0; k < t.levels.size(); ++k) {
                    w.add({m, csv::format_double(t.levels[k]), csv::format_double(t.rate[k]), std::to_string(t.n)});
                }
            }
            emit(w, out);
        } else if (*peaks) {
            const TruthStore truth = load_truth_dir(truth_dir);
            emit(peak_writer(detect_peaks(*pick_snapshot(truth, as_of), radius)), out);
        } else if (*anom) {
            const TruthStore truth = load_truth_dir(truth_dir);
            auto records = detect_revisions(truth, thr);
            if (!outliers.empty()) {
                auto extra = load_anomalies(outliers);
                records.insert(records.end(), extra.begin(), extra.end());
            }
            emit(anomaly_writer(records), out);
        } else if (*bt) {
            const RunConfig cfg = run_config(config, forecasts, truth_dir, out);
            const QuantileLevelSet lv = QuantileLevelSet::preset(cfg.levels);
            const SubmissionSet subs = load_forecast_dir(cfg.forecast_dir, lv);
            const TruthStore truth = load_truth_dir(cfg.truth_dir);
            std::vector<Date> dates;
            for (Date d : subs.forecast_dates()) {
                if (!cfg.development_start || !(d < *cfg.development_start)) {
                    dates.push_back(d);
                }
            }
            std::vector<WeightLogRow> log;
            for (const auto& spec : cfg.specs) {
                const BacktestResult res =
                    train_and_forecast(subs, truth, spec, dates, TrainOptions{cfg.baseline_model, cfg.median_rule});
                for (const auto& w : res.warnings) {
                    std::cerr << "warning: " << w << '\n';
                }
                write_forecasts(cfg.output_dir / "ensembles" / (spec.id + ".csv"), res.forecasts);
                log.insert(log.end(), res.weights.begin(), res.weights.end());
            }
            weight_log_writer(log).write_file(cfg.output_dir / "weights.csv");
        } else if (*rep) {
            const RunSummary summary = run(run_config(config, forecasts, truth_dir, out));
            for (const auto& w : summary.warnings) {
                std::cerr << "warning: " << w << '\n';
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
