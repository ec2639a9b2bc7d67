#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qens/csv.hpp"
#include "qens/errors.hpp"
#include "qens/forecast_data.hpp"

namespace qens {

struct ScoreRecord {
    ForecastKey key;
    double wis = 0.0;
    /// Per-level terms 2 (1{y <= q_k} - tau_k)(q_k - y); wis is their mean.
    std::vector<double> per_level;
};

/// Single WIS term for one level; always >= 0.
inline double wis_term(double tau, double q, double y) noexcept {
    const double indicator = y <= q ? 1.0 : 0.0;
    return 2.0 * (indicator - tau) * (q - y);
}

/// Weighted interval score of quantiles `q` at `levels` for observation `y`.
inline double wis_value(std::span<const double> levels, std::span<const double> q, double y) {
    if (std::isnan(y)) {
        throw InputError("observation is NaN");
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
        sum += wis_term(levels[k], q[k], y);
    }
    return sum / static_cast<double>(q.size());
}

inline ScoreRecord wis(const QuantileForecast& q, double y) {
    if (std::isnan(y)) {
        throw InputError("observation for " + q.key().describe() + " is NaN");
    }
    ScoreRecord r{q.key(), 0.0, {}};
    r.per_level.resize(q.values().size());
    double sum = 0.0;
    for (std::size_t k = 0; k < r.per_level.size(); ++k) {
        r.per_level[k] = wis_term(q.levels()[k], q.value(k), y);
        sum += r.per_level[k];
    }
    r.wis = sum / static_cast<double>(r.per_level.size());
    return r;
}

struct CoverageTable {
    QuantileLevelSet levels;
    std::vector<double> rate;
    std::size_t n = 0;
};

/// One-sided coverage: fraction of observations <= the predicted quantile.
inline CoverageTable coverage_rates(std::span<const QuantileForecast* const> forecasts,
                                    std::span<const double> truth) {
    if (forecasts.empty()) {
        throw InputError("coverage requires at least one forecast");
    }
    if (forecasts.size() != truth.size()) {
        throw InputError("every forecast needs a matching observation");
    }
    CoverageTable t{forecasts.front()->levels(), {}, forecasts.size()};
    std::vector<std::size_t> hits(t.levels.size(), 0);
    for (std::size_t i = 0; i < forecasts.size(); ++i) {
        if (!(forecasts[i]->levels() == t.levels)) {
            throw InputError("coverage inputs use different level sets");
        }
        for (std::size_t k = 0; k < hits.size(); ++k) {
            if (truth[i] <= forecasts[i]->value(k)) {
                ++hits[k];
            }
        }
    }
    t.rate.resize(hits.size());
    for (std::size_t k = 0; k < hits.size(); ++k) {
        t.rate[k] = static_cast<double>(hits[k]) / static_cast<double>(forecasts.size());
    }
    return t;
}

inline CoverageTable coverage_rates(std::span<const QuantileForecast> forecasts, std::span<const double> truth) {
    std::vector<const QuantileForecast*> ptrs;
    ptrs.reserve(forecasts.size());
    for (const auto& f : forecasts) {
        ptrs.push_back(&f);
    }
    return coverage_rates(std::span<const QuantileForecast* const>(ptrs), truth);
}

// ---------------------------------------------------------------------------
// Score tables and relative WIS

/// One scored (model, location, forecast date, horizon) cell.
struct ScoreRow {
    std::string model;
    std::string location;
    Date forecast_date;
    Date target_end_date;
    int horizon = 0;
    double wis = 0.0;
};

enum class Aggregation { geometric, arithmetic };

inline std::string to_string(Aggregation a) { return a == Aggregation::geometric ? "geometric" : "arithmetic"; }

inline Aggregation parse_aggregation(std::string_view s) {
    if (s == "geometric") {
        return Aggregation::geometric;
    }
    if (s == "arithmetic") {
        return Aggregation::arithmetic;
    }
    throw ConfigError("unknown relative WIS aggregation '" + std::string(s) + "'");
}

struct RelWisEntry {
    std::string model;
    std::optional<double> theta;
    std::optional<double> rel_wis;  ///< nullopt when undefined (disconnected from the baseline)
};

struct RelWisTable {
    Aggregation aggregation = Aggregation::geometric;
    std::string baseline;
    /// Number of (location, forecast date) units in the index set.
    std::size_t index_size = 0;
    /// Shared units for each ordered model pair with a nonempty overlap.
    std::map<std::pair<std::string, std::string>, std::size_t> pair_units;
    std::vector<RelWisEntry> entries;  ///< sorted by model id

    std::optional<double> rel_wis(std::string_view model) const {
        for (const auto& e : entries) {
            if (e.model == model) {
                return e.rel_wis;
            }
        }
        return std::nullopt;
    }

    std::optional<double> theta(std::string_view model) const {
        for (const auto& e : entries) {
            if (e.model == model) {
                return e.theta;
            }
        }
        return std::nullopt;
    }

    /// Models with a defined relative WIS, keyed by id.
    std::map<std::string, double> defined() const {
        std::map<std::string, double> out;
        for (const auto& e : entries) {
            if (e.rel_wis) {
                out.emplace(e.model, *e.rel_wis);
            }
        }
        return out;
    }
};

namespace detail {

struct Unit {
    std::string location;
    Date forecast_date;
    auto operator<=>(const Unit&) const = default;
};

/// Scores of one model at one unit: one slot per horizon.
struct UnitScores {
    std::array<double, kMaxHorizon> wis{};
    unsigned mask = 0;
};

}  // namespace detail

/// Relative WIS from pairwise matched mean-score ratios.
///
/// Units are (location, forecast date). Two models share a unit when both scored it
/// on the same set of horizons. For each model m, the ratio of mean WIS of m to
/// m' over their shared units is aggregated over every m' with a nonempty overlap
/// (including m itself, ratio 1) by geometric or arithmetic mean, then divided by
/// the baseline's value. Models outside the baseline's connected component of the
/// overlap graph get no value.
inline RelWisTable relative_wis(std::span<const ScoreRow> rows, const std::string& baseline,
                                Aggregation aggregation) {
    using detail::Unit;
    using detail::UnitScores;

    std::map<std::string, std::map<Unit, UnitScores>> by_model;
    std::set<Unit> all_units;
    for (const auto& r : rows) {
        if (r.horizon < 1 || r.horizon > kMaxHorizon) {
            throw InputError("score row horizon outside 1..4");
        }
        if (!std::isfinite(r.wis)) {
            throw InputError("non-finite WIS for model " + r.model);
        }
        Unit u{r.location, r.forecast_date};
        auto& us = by_model[r.model][u];
        const unsigned bit = 1u << (r.horizon - 1);
        if (us.mask & bit) {
            throw DuplicateError("duplicate score for model " + r.model + " at " + r.location + " " +
                                 r.forecast_date.iso() + " horizon " + std::to_string(r.horizon));
        }
        us.mask |= bit;
        us.wis[static_cast<std::size_t>(r.horizon - 1)] = r.wis;
        all_units.insert(u);
    }
    if (!by_model.count(baseline)) {
        throw InputError("baseline model '" + baseline + "' has no scores");
    }

    RelWisTable table;
    table.aggregation = aggregation;
    table.baseline = baseline;
    table.index_size = all_units.size();

    std::vector<std::string> models;
    for (const auto& [m, _] : by_model) {
        models.push_back(m);
    }
    const std::size_t n = models.size();

    // ratio[i][j]: mean WIS of i over mean WIS of j on their shared units.
    std::vector<std::vector<std::optional<double>>> ratio(n, std::vector<std::optional<double>>(n));
    for (std::size_t i = 0; i < n; ++i) {
        ratio[i][i] = 1.0;
        const auto& a = by_model[models[i]];
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) {
                continue;
            }
            const auto& b = by_model[models[j]];
            double sum_a = 0.0;
            double sum_b = 0.0;
            std::size_t cells = 0;
            std::size_t units = 0;
            for (const auto& [u, sa] : a) {
                auto it = b.find(u);
                if (it == b.end() || it->second.mask != sa.mask) {
                    continue;
                }
                ++units;
                for (int h = 0; h < kMaxHorizon; ++h) {
                    if (sa.mask & (1u << h)) {
                        sum_a += sa.wis[static_cast<std::size_t>(h)];
                        sum_b += it->second.wis[static_cast<std::size_t>(h)];
                        ++cells;
                    }
                }
            }
            if (units == 0) {
                continue;
            }
            table.pair_units[{models[i], models[j]}] = units;
            const double mean_a = sum_a / static_cast<double>(cells);
            const double mean_b = sum_b / static_cast<double>(cells);
            if (mean_b == 0.0) {
                ratio[i][j] = mean_a == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
            } else {
                ratio[i][j] = mean_a / mean_b;
            }
        }
    }

    // Connected component of the baseline in the overlap graph.
    const std::size_t base_idx =
        static_cast<std::size_t>(std::find(models.begin(), models.end(), baseline) - models.begin());
    std::vector<bool> reached(n, false);
    std::queue<std::size_t> frontier;
    reached[base_idx] = true;
    frontier.push(base_idx);
    while (!frontier.empty()) {
        const std::size_t i = frontier.front();
        frontier.pop();
        for (std::size_t j = 0; j < n; ++j) {
            if (!reached[j] && ratio[i][j]) {
                reached[j] = true;
                frontier.push(j);
            }
        }
    }

    std::vector<std::optional<double>> theta(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!reached[i]) {
            continue;
        }
        double acc = 0.0;
        std::size_t count = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (!ratio[i][j]) {
                continue;
            }
            acc += aggregation == Aggregation::geometric ? std::log(*ratio[i][j]) : *ratio[i][j];
            ++count;
        }
        const double mean = acc / static_cast<double>(count);
        const double t = aggregation == Aggregation::geometric ? std::exp(mean) : mean;
        if (!std::isnan(t)) {
            theta[i] = t;
        }
    }

    const std::optional<double> base_theta = theta[base_idx];
    for (std::size_t i = 0; i < n; ++i) {
        RelWisEntry e{models[i], theta[i], std::nullopt};
        if (i == base_idx) {
            e.rel_wis = 1.0;
        } else if (theta[i] && base_theta && *base_theta > 0.0) {
            const double r = *theta[i] / *base_theta;
            if (!std::isnan(r)) {
                e.rel_wis = r;
            }
        }
        table.entries.push_back(std::move(e));
    }
    return table;
}

/// Ranks standardized to [0, 1]: 0 = best, 1 = worst, ties share their mean
/// ordinal, and a single model gets 0.5.
inline std::map<std::string, double> standardized_rank(const std::map<std::string, double>& values,
                                                       bool lower_is_better = true) {
    std::map<std::string, double> out;
    const std::size_t m = values.size();
    if (m == 0) {
        return out;
    }
    if (m == 1) {
        out.emplace(values.begin()->first, 0.5);
        return out;
    }
    std::vector<std::pair<double, std::string>> sorted;
    for (const auto& [k, v] : values) {
        sorted.emplace_back(lower_is_better ? v : -v, k);
    }
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < m) {
        std::size_t j = i;
        while (j + 1 < m && sorted[j + 1].first == sorted[i].first) {
            ++j;
        }
        // Ordinals i+1 .. j+1 share their mean.
        const double ordinal = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        const double rank = (ordinal - 1.0) / static_cast<double>(m - 1);
        for (std::size_t t = i; t <= j; ++t) {
            out[sorted[t].second] = rank;
        }
        i = j + 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scoring a submission set against truth

/// Scores every complete forecast against the truth snapshot. Cells without an
/// observed value are skipped; negative observations are dropped when requested.
inline std::vector<ScoreRow> score_submissions(const SubmissionSet& subs, const TruthSnapshot* truth,
                                               bool drop_negative_truth = true) {
    std::vector<ScoreRow> out;
    for (const auto* f : subs.all()) {
        const auto& k = f->key();
        auto y = TruthStore::lookup(truth, k.location, k.target_end_date);
        if (!y || (drop_negative_truth && *y < 0.0)) {
            continue;
        }
        out.push_back(ScoreRow{k.model, k.location, k.forecast_date, k.target_end_date, k.horizon,
                               wis_value(f->levels().levels(), f->values(), *y)});
    }
    return out;
}

inline const std::vector<std::string>& score_csv_header() {
    static const std::vector<std::string> h{"model",           "location", "forecast_date",
                                            "target_end_date", "horizon",  "wis"};
    return h;
}

inline csv::Writer score_writer(std::span<const ScoreRow> rows) {
    csv::Writer w(score_csv_header());
    for (const auto& r : rows) {
        w.add({r.model, r.location, r.forecast_date.iso(), r.target_end_date.iso(),
               std::to_string(r.horizon), csv::format_double(r.wis)});
    }
    return w;
}

inline std::vector<ScoreRow> parse_scores(const csv::Table& t) {
    const std::string& src = t.source();
    const std::size_t c_model = t.column("model");
    const std::size_t c_loc = t.column("location");
    const std::size_t c_fd = t.column("forecast_date");
    const std::size_t c_td = t.column("target_end_date");
    const std::size_t c_h = t.column("horizon");
    const std::size_t c_w = t.column("wis");
    std::vector<ScoreRow> out;
    for (const auto& row : t.rows()) {
        const auto& f = row.fields;
        out.push_back(ScoreRow{f[c_model], f[c_loc], detail::parse_date_field(f[c_fd], src, row.line),
                               detail::parse_date_field(f[c_td], src, row.line),
                               static_cast<int>(csv::parse_int(f[c_h], src, row.line)),
                               csv::parse_double(f[c_w], src, row.line)});
    }
    return out;
}

inline csv::Writer relwis_writer(const RelWisTable& t) {
    csv::Writer w({"model", "theta", "rel_wis", "aggregation"});
    for (const auto& e : t.entries) {
        w.add({e.model, csv::format_optional(e.theta), csv::format_optional(e.rel_wis),
               to_string(t.aggregation)});
    }
    return w;
}

}  // namespace qens
