#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "qens/combination.hpp"
#include "qens/errors.hpp"
#include "qens/forecast_data.hpp"
#include "qens/scoring.hpp"

namespace qens {

enum class Weighting { equal, rel_wis_sigmoid, convex_direct, post_hoc };
enum class Sharing { per_model, per_horizon, per_quantile };

inline std::string to_string(Weighting w) {
    switch (w) {
        case Weighting::rel_wis_sigmoid:
            return "rel_wis_sigmoid";
        case Weighting::convex_direct:
            return "convex_direct";
        case Weighting::post_hoc:
            return "post_hoc";
        default:
            return "equal";
    }
}

inline Weighting parse_weighting(std::string_view s) {
    if (s == "equal") return Weighting::equal;
    if (s == "rel_wis_sigmoid") return Weighting::rel_wis_sigmoid;
    if (s == "convex_direct") return Weighting::convex_direct;
    if (s == "post_hoc") return Weighting::post_hoc;
    throw ConfigError("unknown weighting '" + std::string(s) + "'");
}

inline std::string to_string(Sharing s) {
    switch (s) {
        case Sharing::per_horizon:
            return "per_horizon";
        case Sharing::per_quantile:
            return "per_quantile";
        default:
            return "per_model";
    }
}

inline Sharing parse_sharing(std::string_view s) {
    if (s == "per_model") return Sharing::per_model;
    if (s == "per_horizon") return Sharing::per_horizon;
    if (s == "per_quantile") return Sharing::per_quantile;
    throw ConfigError("unknown sharing mode '" + std::string(s) + "'");
}

/// Candidate values for the sigmoid temperature. Always contains 0.
class ThetaGrid {
public:
    explicit ThetaGrid(std::vector<double> values) : values_(std::move(values)) {
        if (values_.empty() || values_.front() != 0.0) {
            throw ConfigError("theta grid must start at 0");
        }
        for (std::size_t i = 1; i < values_.size(); ++i) {
            if (!(values_[i] > values_[i - 1]) || !std::isfinite(values_[i])) {
                throw ConfigError("theta grid must be strictly increasing and finite");
            }
        }
    }

    /// {0, 0.1, ..., 10} followed by {12, 14, ..., 30}: 91 points.
    static ThetaGrid standard() {
        std::vector<double> v;
        for (int i = 0; i <= 100; ++i) {
            v.push_back(i / 10.0);
        }
        for (int t = 12; t <= 30; t += 2) {
            v.push_back(static_cast<double>(t));
        }
        return ThetaGrid(std::move(v));
    }

    std::span<const double> values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }

private:
    std::vector<double> values_;
};

/// Full configuration of one ensemble method. Defaults are the prospective
/// settings: top 10 components, 12-week window, no weight cap, geometric rWIS.
struct EnsembleSpec {
    std::string id = "ensemble";
    Combiner combiner = Combiner::median;
    Weighting weighting = Weighting::equal;
    std::optional<int> top_k = 10;
    std::optional<int> window_weeks = 12;  ///< nullopt = all available history
    double max_weight = 1.0;
    Sharing sharing = Sharing::per_model;
    Aggregation rwis_aggregation = Aggregation::geometric;
    std::optional<std::vector<double>> theta_grid;  ///< overrides ThetaGrid::standard()

    /// Uses past component performance (selection or weighting).
    bool trained() const { return weighting != Weighting::equal || top_k.has_value(); }

    ThetaGrid grid() const { return theta_grid ? ThetaGrid(*theta_grid) : ThetaGrid::standard(); }

    void validate() const {
        if (id.empty()) {
            throw ConfigError("ensemble spec id is empty");
        }
        if (top_k && *top_k < 1) {
            throw ConfigError("spec " + id + ": top_k must be at least 1");
        }
        if (window_weeks && *window_weeks < 1) {
            throw ConfigError("spec " + id + ": window_weeks must be at least 1");
        }
        if (!(max_weight > 0.0 && max_weight <= 1.0)) {
            throw ConfigError("spec " + id + ": max_weight must lie in (0, 1]");
        }
        if (top_k && max_weight + 1e-12 < 1.0 / static_cast<double>(*top_k)) {
            throw ConfigError("spec " + id + ": max_weight below 1/top_k is infeasible");
        }
        if (theta_grid) {
            (void)grid();
        }
    }
};

inline void to_json(nlohmann::json& j, const EnsembleSpec& s) {
    j = nlohmann::json{{"id", s.id},
                       {"combiner", to_string(s.combiner)},
                       {"weighting", to_string(s.weighting)},
                       {"top_k", s.top_k ? nlohmann::json(*s.top_k) : nlohmann::json(nullptr)},
                       {"window_weeks", s.window_weeks ? nlohmann::json(*s.window_weeks) : nlohmann::json("all")},
                       {"max_weight", s.max_weight},
                       {"sharing", to_string(s.sharing)},
                       {"rwis_aggregation", to_string(s.rwis_aggregation)}};
    if (s.theta_grid) {
        j["theta_grid"] = *s.theta_grid;
    }
}

inline void from_json(const nlohmann::json& j, EnsembleSpec& s) {
    try {
        s = EnsembleSpec{};
        if (!j.is_object()) {
            throw ConfigError("ensemble spec must be a JSON object");
        }
        static const std::set<std::string> known{"id",         "combiner", "weighting",        "top_k",
                                                 "window_weeks", "max_weight", "sharing", "rwis_aggregation",
                                                 "theta_grid"};
        for (const auto& [k, v] : j.items()) {
            if (!known.count(k)) {
                throw ConfigError("unknown ensemble spec field '" + k + "'");
            }
        }
        if (j.contains("id")) s.id = j.at("id").get<std::string>();
        if (j.contains("combiner")) s.combiner = parse_combiner(j.at("combiner").get<std::string>());
        if (j.contains("weighting")) s.weighting = parse_weighting(j.at("weighting").get<std::string>());
        if (!j.contains("top_k") && s.weighting == Weighting::equal) {
            s.top_k = std::nullopt;  // plain equal weighting uses every component
        } else if (j.contains("top_k")) {
            s.top_k = j.at("top_k").is_null() ? std::nullopt : std::optional<int>(j.at("top_k").get<int>());
        }
        if (j.contains("window_weeks")) {
            const auto& w = j.at("window_weeks");
            if (w.is_null() || (w.is_string() && w.get<std::string>() == "all")) {
                s.window_weeks = std::nullopt;
            } else {
                s.window_weeks = w.get<int>();
            }
        }
        if (j.contains("max_weight")) s.max_weight = j.at("max_weight").get<double>();
        if (j.contains("sharing")) s.sharing = parse_sharing(j.at("sharing").get<std::string>());
        if (j.contains("rwis_aggregation")) {
            s.rwis_aggregation = parse_aggregation(j.at("rwis_aggregation").get<std::string>());
        }
        if (j.contains("theta_grid")) s.theta_grid = j.at("theta_grid").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid ensemble spec: ") + e.what());
    }
    s.validate();
}

// ---------------------------------------------------------------------------
// Training data

/// Forecast dates r with s - a weeks <= r < s.
struct TrainingWindow {
    Date forecast_date;
    std::vector<Date> dates;
};

inline TrainingWindow make_training_window(std::span<const Date> known_dates, Date s,
                                           std::optional<int> window_weeks) {
    TrainingWindow w{s, {}};
    for (Date r : known_dates) {
        if (!(r < s)) {
            continue;
        }
        if (window_weeks && days_between(r, s) > 7 * *window_weeks) {
            continue;
        }
        w.dates.push_back(r);
    }
    std::sort(w.dates.begin(), w.dates.end());
    return w;
}

/// One scorable target inside a training window.
struct TrainingCell {
    std::string location;
    Date forecast_date;
    Date target_end_date;
    int horizon = 0;
    double truth = 0.0;
    /// Aligned with TrainingSet::models; nullptr where the model did not submit.
    std::vector<const QuantileForecast*> forecasts;
};

struct TrainingSet {
    std::vector<std::string> models;  ///< sorted
    QuantileLevelSet levels;
    std::vector<TrainingCell> cells;

    bool empty() const noexcept { return cells.empty(); }

    /// Score rows of every available model, optionally for one level's term only.
    std::vector<ScoreRow> score_rows(std::optional<std::size_t> level = std::nullopt) const {
        std::vector<ScoreRow> out;
        for (const auto& c : cells) {
            for (std::size_t m = 0; m < models.size(); ++m) {
                const auto* f = c.forecasts[m];
                if (!f) {
                    continue;
                }
                const double s = level ? wis_term(levels[*level], f->value(*level), c.truth)
                                       : wis_value(levels.levels(), f->values(), c.truth);
                out.push_back(ScoreRow{models[m], c.location, c.forecast_date, c.target_end_date, c.horizon, s});
            }
        }
        return out;
    }

    /// Subset of models (kept in sorted order); cells left with no model are dropped.
    TrainingSet restrict_models(std::span<const std::string> keep) const {
        std::vector<std::string> sorted(keep.begin(), keep.end());
        std::sort(sorted.begin(), sorted.end());
        TrainingSet out{{}, levels, {}};
        std::vector<std::size_t> idx;
        for (std::size_t m = 0; m < models.size(); ++m) {
            if (std::binary_search(sorted.begin(), sorted.end(), models[m])) {
                idx.push_back(m);
                out.models.push_back(models[m]);
            }
        }
        for (const auto& c : cells) {
            TrainingCell nc{c.location, c.forecast_date, c.target_end_date, c.horizon, c.truth, {}};
            bool any = false;
            for (std::size_t i : idx) {
                nc.forecasts.push_back(c.forecasts[i]);
                any = any || c.forecasts[i] != nullptr;
            }
            if (any) {
                out.cells.push_back(std::move(nc));
            }
        }
        return out;
    }

    TrainingSet filter_horizon(int horizon) const {
        TrainingSet out{models, levels, {}};
        for (const auto& c : cells) {
            if (c.horizon == horizon) {
                out.cells.push_back(c);
            }
        }
        return out;
    }
};

/// Collects scorable cells over the window. A model is available at (location, r)
/// when it submitted a complete forecast for all four horizons. Targets after
/// `observed_by` and targets with no or negative truth are skipped.
inline TrainingSet build_training_set(const SubmissionSet& subs, const TruthSnapshot* truth,
                                      const TrainingWindow& window, std::optional<Date> observed_by,
                                      std::span<const std::string> models = {}) {
    TrainingSet set{{}, subs.levels(), {}};
    if (models.empty()) {
        set.models = subs.models();
    } else {
        set.models.assign(models.begin(), models.end());
        std::sort(set.models.begin(), set.models.end());
    }
    for (Date r : window.dates) {
        for (const auto& loc : subs.locations_at(r)) {
            std::vector<const SubmissionSet::Horizons*> subm(set.models.size(), nullptr);
            bool any = false;
            for (std::size_t m = 0; m < set.models.size(); ++m) {
                if (subs.complete(set.models[m], loc, r)) {
                    subm[m] = subs.submission(set.models[m], loc, r);
                    any = true;
                }
            }
            if (!any) {
                continue;
            }
            for (int h = 1; h <= kMaxHorizon; ++h) {
                const Date t = target_end_date(r, h);
                if (observed_by && *observed_by < t) {
                    continue;
                }
                auto y = TruthStore::lookup(truth, loc, t);
                if (!y || *y < 0.0) {
                    continue;
                }
                TrainingCell cell{loc, r, t, h, *y, std::vector<const QuantileForecast*>(set.models.size(), nullptr)};
                for (std::size_t m = 0; m < set.models.size(); ++m) {
                    if (subm[m]) {
                        cell.forecasts[m] = &*(*subm[m])[static_cast<std::size_t>(h - 1)];
                    }
                }
                set.cells.push_back(std::move(cell));
            }
        }
    }
    return set;
}

// ---------------------------------------------------------------------------
// Ensemble evaluation over a training set

namespace detail {

/// Training set with per-cell availability and per-level sort orders cached, so
/// repeated evaluation under different weights only redoes the weighting.
class PreparedSet {
public:
    PreparedSet(const TrainingSet& set, Combiner combiner) : set_(&set), combiner_(combiner) {
        const std::size_t K = set.levels.size();
        cells_.reserve(set.cells.size());
        for (const auto& c : set.cells) {
            Cell pc;
            pc.available.assign(set.models.size(), false);
            for (std::size_t m = 0; m < set.models.size(); ++m) {
                if (c.forecasts[m]) {
                    pc.available[m] = true;
                    pc.models.push_back(m);
                }
            }
            pc.all_available = pc.models.size() == set.models.size();
            if (combiner == Combiner::mean) {
                const std::size_t n = pc.models.size();
                pc.values.resize(K * n);
                for (std::size_t k = 0; k < K; ++k) {
                    for (std::size_t j = 0; j < n; ++j) {
                        pc.values[k * n + j] = c.forecasts[pc.models[j]]->value(k);
                    }
                }
            }
            if (combiner == Combiner::median) {
                pc.order.resize(K);
                for (std::size_t k = 0; k < K; ++k) {
                    auto& ord = pc.order[k];
                    ord.resize(pc.models.size());
                    std::iota(ord.begin(), ord.end(), std::size_t{0});
                    std::stable_sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) {
                        return c.forecasts[pc.models[a]]->value(k) < c.forecasts[pc.models[b]]->value(k);
                    });
                }
            }
            cells_.push_back(std::move(pc));
        }
    }

    std::size_t size() const noexcept { return cells_.size(); }
    const TrainingSet& set() const noexcept { return *set_; }

    /// Effective weights of the models available at cell i (in model order).
    std::vector<double> cell_weights(std::size_t i, std::span<const double> w) const {
        const auto& pc = cells_[i];
        const std::vector<double> eff = renormalize(w, pc.available);
        std::vector<double> out;
        out.reserve(pc.models.size());
        for (std::size_t m : pc.models) {
            out.push_back(eff[m]);
        }
        return out;
    }

    /// cell_weights() into a caller buffer.
    void cell_weights_into(std::size_t i, std::span<const double> w, std::vector<double>& out) const {
        const auto& pc = cells_[i];
        out.resize(pc.models.size());
        if (pc.all_available) {
            std::copy(w.begin(), w.end(), out.begin());
            return;
        }
        double mass = 0.0;
        for (std::size_t m : pc.models) {
            mass += w[m];
        }
        if (!(mass > 0.0)) {
            throw NoMassError("no available component carries positive weight");
        }
        for (std::size_t j = 0; j < pc.models.size(); ++j) {
            out[j] = w[pc.models[j]] / mass;
        }
    }

    /// Ensemble quantile at level k of cell i, given that cell's effective weights.
    double quantile(std::size_t i, std::size_t k, std::span<const double> cw, MedianRule rule,
                    std::vector<double>& sv, std::vector<double>& sw) const {
        const auto& pc = cells_[i];
        const auto& c = set_->cells[i];
        const std::size_t n = pc.models.size();
        if (combiner_ == Combiner::mean) {
            const double* v = pc.values.data() + k * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                acc += cw[j] * v[j];
            }
            return std::max(acc, 0.0);
        }
        sv.resize(n);
        sw.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t src = pc.order[k][j];
            sv[j] = c.forecasts[pc.models[src]]->value(k);
            sw[j] = cw[src];
        }
        return std::max(weighted_median_sorted(sv, sw, rule), 0.0);
    }

    /// Sum over cells of the ensemble WIS, or of one level's WIS term.
    double objective(std::span<const double> w, std::optional<std::size_t> level, MedianRule rule) const {
        const auto& levels = set_->levels;
        std::vector<double> q(levels.size());
        std::vector<double> sv, sw, cw;
        double total = 0.0;
        for (std::size_t i = 0; i < cells_.size(); ++i) {
            if (cells_[i].models.empty()) {
                continue;
            }
            cell_weights_into(i, w, cw);
            const double y = set_->cells[i].truth;
            if (level) {
                total += wis_term(levels[*level], quantile(i, *level, cw, rule, sv, sw), y);
            } else {
                for (std::size_t k = 0; k < levels.size(); ++k) {
                    q[k] = quantile(i, k, cw, rule, sv, sw);
                }
                if (combiner_ == Combiner::median) {
                    std::sort(q.begin(), q.end());
                }
                total += wis_value(levels.levels(), q, y);
            }
        }
        return total;
    }

    /// Subgradient of the mean-combiner objective (as objective()/size()).
    std::vector<double> mean_gradient(std::span<const double> w, std::optional<std::size_t> level) const {
        const auto& levels = set_->levels;
        const std::size_t M = w.size();
        std::vector<double> g(M, 0.0);
        std::vector<double> sv, sw, cw;
        const std::size_t K = levels.size();
        const double level_scale = level ? 1.0 : 1.0 / static_cast<double>(K);
        for (std::size_t i = 0; i < cells_.size(); ++i) {
            const auto& pc = cells_[i];
            if (pc.models.empty()) {
                continue;
            }
            const auto& c = set_->cells[i];
            double mass = 0.0;
            for (std::size_t m : pc.models) {
                mass += w[m];
            }
            if (!(mass > 0.0)) {
                continue;
            }
            cell_weights_into(i, w, cw);
            const std::size_t k0 = level ? *level : 0;
            const std::size_t k1 = level ? *level + 1 : K;
            for (std::size_t k = k0; k < k1; ++k) {
                const double Q = quantile(i, k, cw, MedianRule::interpolated, sv, sw);
                const double slope = 2.0 * ((c.truth <= Q ? 1.0 : 0.0) - levels[k]) * level_scale;
                const double* v = pc.values.data() + k * pc.models.size();
                for (std::size_t j = 0; j < pc.models.size(); ++j) {
                    g[pc.models[j]] += slope * (v[j] - Q) / mass;
                }
            }
        }
        const double n = static_cast<double>(std::max<std::size_t>(cells_.size(), 1));
        for (auto& v : g) {
            v /= n;
        }
        return g;
    }

private:
    struct Cell {
        std::vector<bool> available;
        std::vector<std::size_t> models;               ///< indices of available models
        std::vector<std::vector<std::size_t>> order;   ///< per level, positions into `models`
        std::vector<double> values;                    ///< mean combiner: level-major values of `models`
        bool all_available = false;
    };

    const TrainingSet* set_;
    Combiner combiner_;
    std::vector<Cell> cells_;
};

}  // namespace detail

/// Sum of ensemble WIS over the set under fixed pre-missingness weights `w`
/// (aligned with set.models), or of one level's term when `level` is given.
inline double ensemble_objective(const TrainingSet& set, std::span<const double> w, Combiner combiner,
                                 std::optional<std::size_t> level = std::nullopt,
                                 MedianRule rule = MedianRule::interpolated) {
    return detail::PreparedSet(set, combiner).objective(w, level, rule);
}

// ---------------------------------------------------------------------------
// Weighting rules

/// Softmax of -theta * rWIS over the given models.
inline WeightVector sigmoid_weights(const std::map<std::string, double>& rwis, double theta, Stratum stratum = {}) {
    if (!(theta >= 0.0)) {
        throw InputError("theta must be nonnegative");
    }
    std::vector<std::string> models;
    std::vector<double> r;
    for (const auto& [m, v] : rwis) {
        if (!std::isfinite(v)) {
            throw InputError("relative WIS of " + m + " is not finite");
        }
        models.push_back(m);
        r.push_back(v);
    }
    if (models.empty()) {
        throw InputError("sigmoid weights need at least one model");
    }
    const double rmin = *std::min_element(r.begin(), r.end());
    std::vector<double> w(r.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        w[i] = std::exp(-theta * (r[i] - rmin));
        sum += w[i];
    }
    for (auto& v : w) {
        v /= sum;
    }
    return WeightVector(std::move(models), std::move(w), stratum);
}

/// The k models with smallest rWIS; boundary ties go to the smaller model id.
inline std::vector<std::string> select_top_k(const std::map<std::string, double>& rwis, int k) {
    if (k < 1) {
        throw InputError("top_k must be at least 1");
    }
    std::vector<std::pair<double, std::string>> v;
    for (const auto& [m, r] : rwis) {
        v.emplace_back(r, m);
    }
    std::sort(v.begin(), v.end());
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size() && i < static_cast<std::size_t>(k); ++i) {
        out.push_back(v[i].second);
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct ThetaFit {
    double theta = 0.0;
    WeightVector weights;
    double objective = 0.0;
    /// Objective per grid point; nullopt where the weight cap excludes the point.
    std::vector<std::optional<double>> objective_by_theta;
};

/// Grid search for the sigmoid temperature minimizing ensemble WIS over the set.
/// `rwis` must hold a value for every model in set.models. Grid points whose
/// largest weight exceeds `max_weight` are skipped; near-ties (relative 1e-12)
/// go to the smaller theta.
inline ThetaFit fit_theta(const TrainingSet& set, const std::map<std::string, double>& rwis, Combiner combiner,
                          double max_weight, const ThetaGrid& grid, Stratum stratum = {},
                          std::optional<std::size_t> level = std::nullopt,
                          MedianRule rule = MedianRule::interpolated) {
    std::map<std::string, double> r;
    for (const auto& m : set.models) {
        auto it = rwis.find(m);
        if (it == rwis.end()) {
            throw InputError("no relative WIS for model " + m);
        }
        r.emplace(m, it->second);
    }
    const detail::PreparedSet prepared(set, combiner);
    ThetaFit fit;
    bool found = false;
    for (double theta : grid.values()) {
        WeightVector w = sigmoid_weights(r, theta, stratum);
        if (w.max_weight() > max_weight + 1e-12) {
            fit.objective_by_theta.emplace_back(std::nullopt);
            continue;
        }
        const double obj = prepared.objective(w.weights(), level, rule);
        fit.objective_by_theta.emplace_back(obj);
        const double tol = 1e-12 * std::max(1.0, std::abs(fit.objective));
        if (!found || obj < fit.objective - tol) {
            fit.theta = theta;
            fit.objective = obj;
            fit.weights = std::move(w);
            found = true;
        }
    }
    if (!found) {
        throw InfeasibleError("no theta on the grid satisfies max_weight " + csv::format_double(max_weight));
    }
    return fit;
}

struct ConvexFit {
    WeightVector weights;
    double objective = 0.0;  ///< mean WIS (or mean level term) of the weighted-mean ensemble
    int iterations = 0;
};

/// Weights on the simplex minimizing mean WIS of the weighted-mean ensemble over
/// the set, by exponentiated-gradient descent from uniform weights. The step
/// starts at 0.5 / (largest initial gradient magnitude) and is halved whenever ten
/// iterations pass without an improvement of 1e-8 (relative); the search stops
/// after 10^4 iterations or once the step has shrunk by 2^-40.
inline ConvexFit convex_weights(const TrainingSet& set, Stratum stratum = {},
                                std::optional<std::size_t> level = std::nullopt) {
    const std::size_t M = set.models.size();
    if (M == 0) {
        throw InputError("convex weights need at least one model");
    }
    std::vector<double> w(M, 1.0 / static_cast<double>(M));
    if (set.cells.empty() || M == 1) {
        return ConvexFit{WeightVector(set.models, w, stratum), 0.0, 0};
    }
    const detail::PreparedSet prepared(set, Combiner::mean);
    const double n = static_cast<double>(set.cells.size());
    auto eval = [&](std::span<const double> x) {
        return prepared.objective(x, level, MedianRule::interpolated) / n;
    };

    double f = eval(w);
    std::vector<double> best = w;
    double f_best = f;
    std::vector<double> g = prepared.mean_gradient(w, level);
    double lipschitz = 0.0;
    for (double v : g) {
        lipschitz = std::max(lipschitz, std::abs(v));
    }
    if (!(lipschitz > 0.0)) {
        return ConvexFit{WeightVector(set.models, w, stratum), f, 0};
    }
    const double eta0 = 0.5 / lipschitz;
    double eta = eta0;
    int stall = 0;
    int it = 0;
    for (; it < 10000; ++it) {
        const double gmin = *std::min_element(g.begin(), g.end());
        double z = 0.0;
        for (std::size_t m = 0; m < M; ++m) {
            w[m] *= std::exp(-eta * (g[m] - gmin));
            z += w[m];
        }
        for (auto& v : w) {
            v /= z;
        }
        f = eval(w);
        if (f < f_best - 1e-8 * std::max(1.0, std::abs(f_best))) {
            stall = 0;
        } else {
            ++stall;
        }
        if (f < f_best) {
            f_best = f;
            best = w;
        }
        if (stall >= 10) {
            eta *= 0.5;
            stall = 0;
            w = best;
            if (eta < eta0 * 0x1.0p-40) {
                break;
            }
        }
        g = prepared.mean_gradient(w, level);
    }
    // Renormalize to absorb rounding in the multiplicative updates.
    double z = std::accumulate(best.begin(), best.end(), 0.0);
    for (auto& v : best) {
        v /= z;
    }
    return ConvexFit{WeightVector(set.models, best, stratum), f_best, it};
}

/// Non-causal weights for forecast date `s`, fitted to the realized truth of its
/// own targets. Throws when any target of an available submission is unobserved.
inline ConvexFit post_hoc_weights(const SubmissionSet& subs, const TruthSnapshot* realized, Date s,
                                  std::span<const std::string> models, Stratum stratum = {},
                                  std::optional<std::size_t> level = std::nullopt) {
    TrainingWindow window{s, {s}};
    TrainingSet set = build_training_set(subs, realized, window, std::nullopt, models);
    if (stratum.kind == Stratum::Kind::horizon) {
        set = set.filter_horizon(stratum.horizon);
    }
    for (const auto& loc : subs.locations_at(s)) {
        for (const auto& m : set.models) {
            if (!subs.complete(m, loc, s)) {
                continue;
            }
            for (int h = 1; h <= kMaxHorizon; ++h) {
                if (!TruthStore::lookup(realized, loc, target_end_date(s, h))) {
                    throw DataError("post hoc weights for " + s.iso() + ": target " +
                                    target_end_date(s, h).iso() + " at " + loc + " is not observed");
                }
            }
        }
    }
    return convex_weights(set, stratum, level);
}

// ---------------------------------------------------------------------------
// Rolling backtest

struct WeightLogRow {
    Date forecast_date;
    std::string stratum;
    std::string model;
    double weight = 0.0;
    std::optional<double> theta;
    std::string spec_id;
};

struct TrainOptions {
    std::string baseline_model = "baseline";
    MedianRule median_rule = MedianRule::interpolated;
};

struct BacktestResult {
    SubmissionSet forecasts;
    std::vector<WeightLogRow> weights;
    std::vector<std::string> warnings;
};

namespace detail {

struct StratumWeights {
    Stratum stratum;
    WeightVector weights;
    std::optional<double> theta;
};

inline std::vector<Stratum> strata_for(Sharing sharing, const QuantileLevelSet& levels) {
    std::vector<Stratum> out;
    if (sharing == Sharing::per_horizon) {
        for (int h = 1; h <= kMaxHorizon; ++h) {
            out.push_back(Stratum::for_horizon(h));
        }
    } else if (sharing == Sharing::per_quantile) {
        for (std::size_t k = 0; k < levels.size(); ++k) {
            out.push_back(Stratum::for_level(levels[k]));
        }
    } else {
        out.push_back(Stratum::all());
    }
    return out;
}

inline std::optional<std::size_t> level_index(const Stratum& s, const QuantileLevelSet& levels) {
    if (s.kind != Stratum::Kind::quantile) {
        return std::nullopt;
    }
    return levels.index_of(s.level, 1e-12);
}

}  // namespace detail

/// Builds the ensemble for one forecast date. Uses only forecasts dated on or
/// before `s` and the truth snapshot available as of `s` (post hoc weighting,
/// which is non-causal by definition, reads the latest snapshot instead).
inline void ensemble_for_date(const SubmissionSet& subs, const TruthStore& truth, const EnsembleSpec& spec,
                              Date s, const TrainOptions& opts, BacktestResult& result) {
    const auto& levels = subs.levels();
    const bool trained = spec.trained();
    const bool need_history = trained && spec.weighting != Weighting::post_hoc;
    const auto locations = subs.locations_at(s);

    std::map<std::string, std::vector<std::string>> eligible;
    std::set<std::string> candidates;
    for (const auto& loc : locations) {
        eligible[loc] = eligible_components(subs, loc, s, levels, need_history);
        candidates.insert(eligible[loc].begin(), eligible[loc].end());
    }

    auto warn = [&](const std::string& msg) { result.warnings.push_back(spec.id + " " + s.iso() + ": " + msg); };

    auto equal_fallback = [&](const std::string& why) {
        warn(why + "; using equal weights over eligible components");
        eligible.clear();
        candidates.clear();
        for (const auto& loc : locations) {
            eligible[loc] = eligible_components(subs, loc, s, levels, false);
            candidates.insert(eligible[loc].begin(), eligible[loc].end());
        }
        std::vector<detail::StratumWeights> out;
        if (!candidates.empty()) {
            out.push_back({Stratum::all(), WeightVector::uniform({candidates.begin(), candidates.end()}), std::nullopt});
        }
        return out;
    };

    std::vector<detail::StratumWeights> strata;
    if (candidates.empty() && !trained) {
        warn("no eligible components");
        return;
    }
    if (!trained) {
        strata.push_back({Stratum::all(), WeightVector::uniform({candidates.begin(), candidates.end()}), std::nullopt});
    } else if (spec.weighting == Weighting::post_hoc) {
        const std::vector<std::string> cands(candidates.begin(), candidates.end());
        try {
            for (const auto& st : detail::strata_for(spec.sharing, levels)) {
                ConvexFit fit = post_hoc_weights(subs, truth.latest(), s, cands, st, detail::level_index(st, levels));
                strata.push_back({st, fit.weights, std::nullopt});
            }
        } catch (const DataError& e) {
            warn(std::string("skipped: ") + e.what());
            return;
        }
    } else {
        const std::vector<Date> known = subs.forecast_dates();
        const TrainingWindow window = make_training_window(known, s, spec.window_weeks);
        const TruthSnapshot* snap = truth.snapshot_as_of(s);
        const TrainingSet all = build_training_set(subs, snap, window, s);
        if (candidates.empty() || all.empty()) {
            strata = equal_fallback(candidates.empty() ? "no component with prior submissions"
                                                       : "no scorable training history");
        } else {
            try {
                for (const auto& st : detail::strata_for(spec.sharing, levels)) {
                    const TrainingSet stratum_set =
                        st.kind == Stratum::Kind::horizon ? all.filter_horizon(st.horizon) : all;
                    const auto level = detail::level_index(st, levels);
                    std::map<std::string, double> rw;
                    if (!stratum_set.empty()) {
                        const auto rows = stratum_set.score_rows(level);
                        rw = relative_wis(rows, opts.baseline_model, spec.rwis_aggregation).defined();
                    }
                    std::map<std::string, double> ranked;
                    for (const auto& m : candidates) {
                        auto it = rw.find(m);
                        if (it != rw.end() && std::isfinite(it->second)) {
                            ranked.emplace(m, it->second);
                        }
                    }
                    if (ranked.empty()) {
                        warn("stratum " + st.label() + " has no component with a defined relative WIS");
                        strata.push_back({st, WeightVector::uniform({candidates.begin(), candidates.end()}, st),
                                          std::nullopt});
                        continue;
                    }
                    std::vector<std::string> selected;
                    if (spec.top_k) {
                        selected = select_top_k(ranked, *spec.top_k);
                    } else {
                        for (const auto& [m, v] : ranked) {
                            selected.push_back(m);
                        }
                    }
                    const TrainingSet sub = stratum_set.restrict_models(selected);
                    switch (spec.weighting) {
                        case Weighting::equal:
                            strata.push_back({st, WeightVector::uniform(selected, st), std::nullopt});
                            break;
                        case Weighting::rel_wis_sigmoid: {
                            std::map<std::string, double> sel_rw;
                            for (const auto& m : selected) {
                                sel_rw.emplace(m, ranked.at(m));
                            }
                            try {
                                ThetaFit fit = fit_theta(sub, sel_rw, spec.combiner, spec.max_weight, spec.grid(),
                                                         st, level, opts.median_rule);
                                strata.push_back({st, fit.weights, fit.theta});
                            } catch (const InfeasibleError&) {
                                warn("no theta satisfies max_weight with " + std::to_string(selected.size()) +
                                     " components; using theta = 0");
                                strata.push_back({st, sigmoid_weights(sel_rw, 0.0, st), 0.0});
                            }
                            break;
                        }
                        case Weighting::convex_direct: {
                            ConvexFit fit = convex_weights(sub, st, level);
                            strata.push_back({st, fit.weights, std::nullopt});
                            break;
                        }
                        default:
                            break;
                    }
                }
            } catch (const InputError& e) {
                strata = equal_fallback(e.what());
            }
        }
    }

    if (strata.empty()) {
        warn("no eligible components");
        return;
    }
    const std::vector<detail::StratumWeights>* chosen = &strata;

    for (const auto& sw : *chosen) {
        for (std::size_t i = 0; i < sw.weights.size(); ++i) {
            result.weights.push_back(WeightLogRow{s, sw.stratum.label(), sw.weights.models()[i],
                                                  sw.weights.weights()[i], sw.theta, spec.id});
        }
    }

    auto weights_for = [&](int horizon) -> const detail::StratumWeights& {
        if (chosen->size() == 1) {
            return chosen->front();
        }
        if (chosen->front().stratum.kind == Stratum::Kind::horizon) {
            return (*chosen)[static_cast<std::size_t>(horizon - 1)];
        }
        return chosen->front();
    };
    const bool per_level = chosen->size() > 1 && chosen->front().stratum.kind == Stratum::Kind::quantile;
    std::vector<WeightVector> level_weights;
    if (per_level) {
        for (const auto& sw : *chosen) {
            level_weights.push_back(sw.weights);
        }
    }

    for (const auto& loc : locations) {
        for (int h = 1; h <= kMaxHorizon; ++h) {
            const WeightVector& w = weights_for(h).weights;
            std::vector<const QuantileForecast*> comps;
            bool has_mass = false;
            for (const auto& m : eligible[loc]) {
                const double wm = per_level ? 1.0 : w.weight(m);
                bool in_vector = per_level;
                if (!per_level) {
                    in_vector = std::binary_search(w.models().begin(), w.models().end(), m);
                }
                if (!in_vector) {
                    continue;
                }
                comps.push_back(subs.find(m, loc, s, h));
                has_mass = has_mass || wm > 0.0;
            }
            if (per_level && !comps.empty()) {
                has_mass = true;
                for (const auto& lw : level_weights) {
                    double mass = 0.0;
                    for (const auto* f : comps) {
                        mass += lw.weight(f->key().model);
                    }
                    has_mass = has_mass && mass > 0.0;
                }
            }
            if (comps.empty() || !has_mass) {
                if (h == 1) {
                    warn("no weighted component available at " + loc + "; cell skipped");
                }
                continue;
            }
            if (per_level) {
                result.forecasts.add(combine(comps, level_weights, spec.combiner, spec.id, opts.median_rule));
            } else {
                result.forecasts.add(combine(comps, w, spec.combiner, spec.id, opts.median_rule));
            }
        }
    }
}

/// Runs the spec over the given forecast dates (processed in ascending order).
inline BacktestResult train_and_forecast(const SubmissionSet& subs, const TruthStore& truth,
                                         const EnsembleSpec& spec, std::span<const Date> dates,
                                         const TrainOptions& opts = {}) {
    spec.validate();
    BacktestResult result{SubmissionSet(subs.levels()), {}, {}};
    std::vector<Date> sorted(dates.begin(), dates.end());
    std::sort(sorted.begin(), sorted.end());
    for (Date s : sorted) {
        ensemble_for_date(subs, truth, spec, s, opts, result);
    }
    return result;
}

inline csv::Writer weight_log_writer(std::span<const WeightLogRow> rows) {
    csv::Writer w({"forecast_date", "stratum", "model", "weight", "theta", "spec_id"});
    for (const auto& r : rows) {
        w.add({r.forecast_date.iso(), r.stratum, r.model, csv::format_double(r.weight),
               csv::format_optional(r.theta), r.spec_id});
    }
    return w;
}

}  // namespace qens
