#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "qens/combination.hpp"
#include "qens/csv.hpp"
#include "qens/errors.hpp"
#include "qens/forecast_data.hpp"
#include "qens/scoring.hpp"

namespace qens {

// ---------------------------------------------------------------------------
// Revisions and outliers

struct RevisionThresholds {
    double absolute = 20.0;
    double relative = 0.4;
};

/// Flag rule: |final - initial| >= absolute and the change is at least
/// `relative` of |initial| or of |final|.
inline bool is_revision(double initial, double final_value, const RevisionThresholds& thr = {}) {
    const double diff = std::abs(final_value - initial);
    return diff >= thr.absolute &&
           (diff >= thr.relative * std::abs(initial) || diff >= thr.relative * std::abs(final_value));
}

enum class AnomalyKind { revision, outlier };

inline std::string to_string(AnomalyKind k) { return k == AnomalyKind::revision ? "revision" : "outlier"; }

inline AnomalyKind parse_anomaly_kind(std::string_view s) {
    if (s == "revision") return AnomalyKind::revision;
    if (s == "outlier") return AnomalyKind::outlier;
    throw DataError("unknown anomaly kind '" + std::string(s) + "'");
}

struct AnomalyRecord {
    std::string location;
    Date target_end_date;
    AnomalyKind kind = AnomalyKind::revision;
    std::optional<double> initial_value;
    std::optional<double> final_value;

    auto tie() const { return std::tie(location, target_end_date, kind); }
    bool operator<(const AnomalyRecord& o) const { return tie() < o.tie(); }
    bool operator==(const AnomalyRecord& o) const {
        return tie() == o.tie() && initial_value == o.initial_value && final_value == o.final_value;
    }
};

/// Compares two aligned series (dates present in both).
inline std::vector<AnomalyRecord> detect_revisions(const std::string& location,
                                                   const std::map<Date, double>& initial,
                                                   const std::map<Date, double>& final_series,
                                                   const RevisionThresholds& thr = {}) {
    std::vector<AnomalyRecord> out;
    for (const auto& [d, v0] : initial) {
        auto it = final_series.find(d);
        if (it == final_series.end()) {
            continue;
        }
        if (is_revision(v0, it->second, thr)) {
            out.push_back({location, d, AnomalyKind::revision, v0, it->second});
        }
    }
    return out;
}

/// First reported value of every (location, week): the value in the earliest
/// snapshot that contains it.
inline TruthSnapshot initial_reports(const TruthStore& truth) {
    TruthSnapshot out;
    for (const auto& [as_of, snap] : truth.snapshots()) {
        for (const auto& [loc, series] : snap) {
            auto& dst = out[loc];
            for (const auto& [d, v] : series) {
                dst.emplace(d, v);
            }
        }
    }
    return out;
}

/// Revisions between first reports and the latest snapshot, for every location.
inline std::vector<AnomalyRecord> detect_revisions(const TruthStore& truth, const RevisionThresholds& thr = {}) {
    std::vector<AnomalyRecord> out;
    const TruthSnapshot* latest = truth.latest();
    if (!latest) {
        return out;
    }
    const TruthSnapshot initial = initial_reports(truth);
    for (const auto& [loc, series] : initial) {
        auto it = latest->find(loc);
        if (it == latest->end()) {
            continue;
        }
        auto found = detect_revisions(loc, series, it->second, thr);
        out.insert(out.end(), found.begin(), found.end());
    }
    return out;
}

/// Forecast keys to drop from evaluation. A forecast is excluded when its target
/// is a listed outlier, or when it was issued on a revised week or within the
/// three weeks after it while its as-of data still lacked the revised value.
inline std::set<ForecastKey> revision_exclusion_set(std::span<const AnomalyRecord> anomalies,
                                                    std::span<const ForecastKey> forecasts,
                                                    const TruthStore& truth) {
    std::set<std::pair<std::string, Date>> outliers;
    std::map<std::string, std::vector<const AnomalyRecord*>> revisions;
    for (const auto& a : anomalies) {
        if (a.kind == AnomalyKind::outlier) {
            outliers.emplace(a.location, a.target_end_date);
        } else {
            revisions[a.location].push_back(&a);
        }
    }
    const TruthSnapshot* latest = truth.latest();
    std::set<ForecastKey> out;
    for (const auto& k : forecasts) {
        if (outliers.count({k.location, k.target_end_date})) {
            out.insert(k);
            continue;
        }
        auto it = revisions.find(k.location);
        if (it == revisions.end()) {
            continue;
        }
        for (const auto* a : it->second) {
            const long lag = days_between(a->target_end_date, k.forecast_date);
            if (lag < 0 || lag >= 28) {
                continue;
            }
            std::optional<double> final_value = a->final_value;
            if (!final_value) {
                final_value = TruthStore::lookup(latest, a->location, a->target_end_date);
            }
            const auto as_of = truth.value_as_of(k.forecast_date, a->location, a->target_end_date);
            const bool already_made = as_of && final_value && std::abs(*as_of - *final_value) <= 1e-9;
            if (!already_made) {
                out.insert(k);
                break;
            }
        }
    }
    return out;
}

inline csv::Writer anomaly_writer(std::span<const AnomalyRecord> records) {
    csv::Writer w({"location", "target_end_date", "kind", "initial_value", "final_value"});
    std::vector<AnomalyRecord> sorted(records.begin(), records.end());
    std::sort(sorted.begin(), sorted.end());
    for (const auto& r : sorted) {
        w.add({r.location, r.target_end_date.iso(), to_string(r.kind), csv::format_optional(r.initial_value),
               csv::format_optional(r.final_value)});
    }
    return w;
}

/// Reads an anomaly CSV. The value columns are optional, so a manual outlier list
/// with only `location,target_end_date,kind` is accepted too.
inline std::vector<AnomalyRecord> parse_anomalies(const csv::Table& table) {
    const std::size_t c_loc = table.column("location");
    const std::size_t c_date = table.column("target_end_date");
    const std::size_t c_kind = table.column("kind");
    auto optional_column = [&](const std::string& name) -> std::optional<std::size_t> {
        auto it = std::find(table.header().begin(), table.header().end(), name);
        if (it == table.header().end()) {
            return std::nullopt;
        }
        return static_cast<std::size_t>(it - table.header().begin());
    };
    const auto c_init = optional_column("initial_value");
    const auto c_final = optional_column("final_value");
    auto value = [&](const csv::Row& row, std::optional<std::size_t> c) -> std::optional<double> {
        if (!c || row.fields[*c].empty() || row.fields[*c] == "NA") {
            return std::nullopt;
        }
        return csv::parse_double(row.fields[*c], table.source(), row.line);
    };
    std::vector<AnomalyRecord> out;
    for (const auto& row : table.rows()) {
        AnomalyRecord r;
        r.location = row.fields[c_loc];
        r.target_end_date = detail::parse_date_field(row.fields[c_date], table.source(), row.line);
        try {
            r.kind = parse_anomaly_kind(row.fields[c_kind]);
        } catch (const DataError& e) {
            throw ParseError(table.source(), row.line, e.what());
        }
        r.initial_value = value(row, c_init);
        r.final_value = value(row, c_final);
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<AnomalyRecord> load_anomalies(const std::filesystem::path& path) {
    return parse_anomalies(csv::read_file(path));
}

// ---------------------------------------------------------------------------
// Peaks

struct PeakRecord {
    std::string location;
    Date peak_week;
    int window_radius = 5;

    bool operator==(const PeakRecord& o) const {
        return location == o.location && peak_week == o.peak_week && window_radius == o.window_radius;
    }
};

/// Indices t whose value is strictly above every other value in [t - radius, t + radius];
/// weeks without the full window are never peaks.
inline std::vector<std::size_t> detect_peaks(std::span<const double> values, int radius = 5) {
    std::vector<std::size_t> out;
    const auto r = static_cast<std::size_t>(radius);
    if (radius < 0 || values.size() < 2 * r + 1) {
        return out;
    }
    for (std::size_t t = r; t + r < values.size(); ++t) {
        bool peak = true;
        for (std::size_t u = t - r; u <= t + r && peak; ++u) {
            if (u != t && !(values[t] > values[u])) {
                peak = false;
            }
        }
        if (peak) {
            out.push_back(t);
        }
    }
    return out;
}

/// Peaks of every location's weekly series. A gap in the weeks splits the series.
inline std::vector<PeakRecord> detect_peaks(const TruthSnapshot& truth, int radius = 5) {
    std::vector<PeakRecord> out;
    for (const auto& [loc, series] : truth) {
        std::vector<Date> dates;
        std::vector<double> vals;
        auto flush = [&]() {
            for (std::size_t i : detect_peaks(vals, radius)) {
                out.push_back({loc, dates[i], radius});
            }
            dates.clear();
            vals.clear();
        };
        for (const auto& [d, v] : series) {
            if (!dates.empty() && days_between(dates.back(), d) != 7) {
                flush();
            }
            dates.push_back(d);
            vals.push_back(v);
        }
        flush();
    }
    return out;
}

inline csv::Writer peak_writer(std::span<const PeakRecord> peaks) {
    csv::Writer w({"location", "peak_week"});
    for (const auto& p : peaks) {
        w.add({p.location, p.peak_week.iso()});
    }
    return w;
}

// ---------------------------------------------------------------------------
// Interval widths and weight diagnostics

/// Ranks central 95% interval widths on [0, 1], narrowest = 0. Models lacking the
/// 0.025 or 0.975 level are skipped.
inline std::map<std::string, double> pi_width_rank(std::span<const QuantileForecast* const> forecasts) {
    std::map<std::string, double> widths;
    for (const auto* f : forecasts) {
        auto lo = f->levels().index_of(0.025);
        auto hi = f->levels().index_of(0.975);
        if (!lo || !hi) {
            continue;
        }
        widths[f->key().model] = f->value(*hi) - f->value(*lo);
    }
    return standardized_rank(widths, true);
}

inline std::map<std::string, double> pi_width_rank(const std::map<std::string, double>& widths) {
    return standardized_rank(widths, true);
}

/// Pearson correlation of consecutive pairs; nullopt when either margin is constant.
inline std::optional<double> lag1_autocorrelation(std::span<const double> series) {
    if (series.size() < 3) {
        throw InputError("lag-1 autocorrelation needs at least 3 values");
    }
    const std::size_t n = series.size() - 1;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += series[i];
        my += series[i + 1];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = series[i] - mx;
        const double dy = series[i + 1] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) {
        return std::nullopt;
    }
    return sxy / std::sqrt(sxx * syy);
}

/// Fewest components (largest weights first) whose weights add up to `threshold`.
inline int components_to_cumulative_weight(std::span<const double> weights, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw InputError("cumulative weight threshold must lie in (0, 1]");
    }
    std::vector<double> w(weights.begin(), weights.end());
    std::sort(w.begin(), w.end(), std::greater<>());
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        acc += w[i];
        // Slack for weights that sum to one only up to rounding.
        if (acc >= threshold - 1e-12) {
            return static_cast<int>(i + 1);
        }
    }
    return static_cast<int>(w.size());
}

inline int components_to_cumulative_weight(const WeightVector& w, double threshold) {
    return components_to_cumulative_weight(w.weights(), threshold);
}

}  // namespace qens
