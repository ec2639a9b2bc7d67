#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "qens/csv.hpp"
#include "qens/date.hpp"
#include "qens/errors.hpp"

namespace qens {

inline constexpr int kMaxHorizon = 4;

/// Ordered probability levels tau_1 < ... < tau_K in (0, 1). Cheap to copy.
class QuantileLevelSet {
public:
    QuantileLevelSet() : levels_(std::make_shared<const std::vector<double>>()) {}

    explicit QuantileLevelSet(std::vector<double> levels) {
        if (levels.empty()) {
            throw ValidationError("quantile level set is empty");
        }
        for (std::size_t k = 0; k < levels.size(); ++k) {
            if (!(levels[k] > 0.0 && levels[k] < 1.0)) {
                throw ValidationError("quantile level outside (0,1): " + csv::format_double(levels[k]));
            }
            if (k > 0 && !(levels[k] > levels[k - 1])) {
                throw ValidationError("quantile levels must be strictly increasing");
            }
        }
        levels_ = std::make_shared<const std::vector<double>>(std::move(levels));
    }

    /// Hub-convention presets: 7 levels (cases) or 23 levels (deaths).
    static QuantileLevelSet preset(int count) {
        if (count == 7) {
            return QuantileLevelSet({0.025, 0.1, 0.25, 0.5, 0.75, 0.9, 0.975});
        }
        if (count == 23) {
            return QuantileLevelSet({0.01, 0.025, 0.05, 0.1,  0.15,  0.2,  0.25, 0.3,
                                     0.35, 0.4,   0.45, 0.5,  0.55,  0.6,  0.65, 0.7,
                                     0.75, 0.8,   0.85, 0.9,  0.95,  0.975, 0.99});
        }
        throw ConfigError("no preset with " + std::to_string(count) + " quantile levels (use 7 or 23)");
    }

    std::size_t size() const noexcept { return levels_->size(); }
    double operator[](std::size_t k) const { return (*levels_)[k]; }
    std::span<const double> levels() const noexcept { return *levels_; }

    /// Index of `tau`, matched to within half of the third printed decimal.
    std::optional<std::size_t> index_of(double tau, double tol = 5e-4) const {
        const auto& v = *levels_;
        auto it = std::lower_bound(v.begin(), v.end(), tau - tol);
        if (it != v.end() && std::abs(*it - tau) <= tol) {
            return static_cast<std::size_t>(it - v.begin());
        }
        return std::nullopt;
    }

    /// Every level other than 0.5 has its mirror 1 - tau in the set.
    bool is_symmetric(double tol = 1e-9) const {
        const auto& v = *levels_;
        const std::size_t n = v.size();
        for (std::size_t k = 0; k < n; ++k) {
            if (std::abs(v[k] + v[n - 1 - k] - 1.0) > tol) {
                return false;
            }
        }
        return true;
    }

    /// Indices of the (1-c)/2 and (1+c)/2 levels of the central c-interval, if present.
    std::optional<std::pair<std::size_t, std::size_t>> central_interval(double coverage) const {
        auto lo = index_of((1.0 - coverage) / 2.0, 1e-9);
        auto hi = index_of((1.0 + coverage) / 2.0, 1e-9);
        if (!lo || !hi) {
            return std::nullopt;
        }
        return std::make_pair(*lo, *hi);
    }

    friend bool operator==(const QuantileLevelSet& a, const QuantileLevelSet& b) {
        return a.levels_ == b.levels_ || *a.levels_ == *b.levels_;
    }

private:
    std::shared_ptr<const std::vector<double>> levels_;
};

struct ForecastKey {
    std::string model;
    std::string location;
    Date forecast_date;
    Date target_end_date;
    int horizon = 0;

    /// Builds a key with the horizon derived from the two dates.
    static ForecastKey make(std::string model, std::string location, Date forecast_date,
                            Date target_end_date) {
        ForecastKey k{std::move(model), std::move(location), forecast_date, target_end_date,
                      horizon_between(forecast_date, target_end_date)};
        if (k.horizon < 1 || k.horizon > kMaxHorizon) {
            throw ValidationError("horizon of " + k.describe() + " is outside 1.." +
                                  std::to_string(kMaxHorizon));
        }
        return k;
    }

    std::string describe() const {
        return "(model=" + model + ", location=" + location + ", forecast_date=" +
               forecast_date.iso() + ", target_end_date=" + target_end_date.iso() + ")";
    }

    auto tie() const { return std::tie(model, location, forecast_date, target_end_date); }
    friend bool operator==(const ForecastKey& a, const ForecastKey& b) { return a.tie() == b.tie(); }
    friend bool operator<(const ForecastKey& a, const ForecastKey& b) { return a.tie() < b.tie(); }
};

/// One model's predictive quantiles for a (location, forecast date, target date).
class QuantileForecast {
public:
    QuantileForecast(ForecastKey key, QuantileLevelSet levels, std::vector<double> values)
        : key_(std::move(key)), levels_(std::move(levels)), values_(std::move(values)) {
        if (values_.size() != levels_.size()) {
            throw ValidationError("forecast " + key_.describe() + " has " +
                                  std::to_string(values_.size()) + " values for " +
                                  std::to_string(levels_.size()) + " levels");
        }
        for (std::size_t k = 0; k < values_.size(); ++k) {
            if (!std::isfinite(values_[k]) || values_[k] < 0.0) {
                throw ValidationError("forecast " + key_.describe() +
                                      " has a negative or non-finite quantile");
            }
            if (k > 0 && values_[k] < values_[k - 1]) {
                throw ValidationError("forecast " + key_.describe() +
                                      " has non-monotone quantiles at level " +
                                      csv::format_double(levels_[k]));
            }
        }
    }

    const ForecastKey& key() const noexcept { return key_; }
    const QuantileLevelSet& levels() const noexcept { return levels_; }
    std::span<const double> values() const noexcept { return values_; }
    double value(std::size_t k) const { return values_[k]; }

private:
    ForecastKey key_;
    QuantileLevelSet levels_;
    std::vector<double> values_;
};

/// (model, forecast date, location): one submission covering horizons 1..4.
struct SubmissionKey {
    std::string model;
    Date forecast_date;
    std::string location;

    auto operator<=>(const SubmissionKey&) const = default;
};

/// Complete quantile forecasts grouped by submission. Immutable once built.
class SubmissionSet {
public:
    using Horizons = std::array<std::optional<QuantileForecast>, kMaxHorizon>;

    SubmissionSet() = default;
    explicit SubmissionSet(QuantileLevelSet levels) : levels_(std::move(levels)) {}

    const QuantileLevelSet& levels() const noexcept { return levels_; }

    void add(QuantileForecast f) {
        if (!(f.levels() == levels_)) {
            throw ValidationError("forecast " + f.key().describe() + " uses a different level set");
        }
        const auto& k = f.key();
        auto& slot = groups_[SubmissionKey{k.model, k.forecast_date, k.location}];
        auto& cell = slot[static_cast<std::size_t>(k.horizon - 1)];
        if (cell) {
            throw DuplicateError("duplicate forecast " + k.describe());
        }
        auto [it, inserted] = first_date_.try_emplace(k.model, k.forecast_date);
        if (!inserted && k.forecast_date < it->second) {
            it->second = k.forecast_date;
        }
        by_date_[k.forecast_date].insert(k.location);
        cell.emplace(std::move(f));
        ++count_;
    }

    /// Records an incomplete forecast; kept for diagnostics and history.
    void add_incomplete(const ForecastKey& key) {
        incomplete_.push_back(key);
        auto [it, inserted] = first_date_.try_emplace(key.model, key.forecast_date);
        if (!inserted && key.forecast_date < it->second) {
            it->second = key.forecast_date;
        }
    }

    const QuantileForecast* find(std::string_view model, std::string_view location, Date forecast_date,
                                 int horizon) const {
        if (horizon < 1 || horizon > kMaxHorizon) {
            return nullptr;
        }
        auto it = groups_.find(SubmissionKey{std::string(model), forecast_date, std::string(location)});
        if (it == groups_.end()) {
            return nullptr;
        }
        const auto& cell = it->second[static_cast<std::size_t>(horizon - 1)];
        return cell ? &*cell : nullptr;
    }

    /// All four horizons, or nullptr when the submission is absent.
    const Horizons* submission(std::string_view model, std::string_view location, Date forecast_date) const {
        auto it = groups_.find(SubmissionKey{std::string(model), forecast_date, std::string(location)});
        return it == groups_.end() ? nullptr : &it->second;
    }

    /// True iff the model has a complete forecast at every horizon 1..4.
    bool complete(std::string_view model, std::string_view location, Date forecast_date) const {
        const Horizons* h = submission(model, location, forecast_date);
        if (!h) {
            return false;
        }
        return std::all_of(h->begin(), h->end(), [](const auto& c) { return c.has_value(); });
    }

    const std::map<SubmissionKey, Horizons>& groups() const noexcept { return groups_; }
    const std::vector<ForecastKey>& incomplete() const noexcept { return incomplete_; }

    /// Earliest forecast date with any submission from the model.
    std::optional<Date> first_submission(std::string_view model) const {
        auto it = first_date_.find(std::string(model));
        if (it == first_date_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    std::vector<std::string> models() const {
        std::vector<std::string> out;
        for (const auto& [m, d] : first_date_) {
            out.push_back(m);
        }
        return out;
    }

    std::vector<Date> forecast_dates() const {
        std::vector<Date> out;
        for (const auto& [d, locs] : by_date_) {
            out.push_back(d);
        }
        return out;
    }

    /// Locations with at least one complete forecast on the date, sorted.
    std::vector<std::string> locations_at(Date forecast_date) const {
        auto it = by_date_.find(forecast_date);
        if (it == by_date_.end()) {
            return {};
        }
        return {it->second.begin(), it->second.end()};
    }

    std::vector<std::string> locations() const {
        std::set<std::string> s;
        for (const auto& [k, v] : groups_) {
            s.insert(k.location);
        }
        return {s.begin(), s.end()};
    }

    /// Every complete forecast, in (model, forecast date, location, horizon) order.
    std::vector<const QuantileForecast*> all() const {
        std::vector<const QuantileForecast*> out;
        out.reserve(count_);
        for (const auto& [k, hs] : groups_) {
            for (const auto& c : hs) {
                if (c) {
                    out.push_back(&*c);
                }
            }
        }
        return out;
    }

    std::size_t size() const noexcept { return count_; }
    bool empty() const noexcept { return count_ == 0; }

    /// Adds every forecast of `other` (same level set required).
    void merge(const SubmissionSet& other) {
        for (const auto* f : other.all()) {
            add(*f);
        }
        for (const auto& k : other.incomplete()) {
            add_incomplete(k);
        }
    }

private:
    QuantileLevelSet levels_;
    std::map<SubmissionKey, Horizons> groups_;
    std::map<std::string, Date> first_date_;
    std::map<Date, std::set<std::string>> by_date_;
    std::vector<ForecastKey> incomplete_;
    std::size_t count_ = 0;
};

// ---------------------------------------------------------------------------
// Forecast CSV: model,forecast_date,location,target_end_date,type,quantile,value

inline const std::vector<std::string>& forecast_csv_header() {
    static const std::vector<std::string> h{"model",           "forecast_date", "location",
                                            "target_end_date", "type",          "quantile",
                                            "value"};
    return h;
}

namespace detail {

inline Date parse_date_field(std::string_view text, const std::string& source, std::size_t line) {
    try {
        return Date::parse(text);
    } catch (const std::invalid_argument& e) {
        throw ParseError(source, line, e.what());
    }
}

}  // namespace detail

/// Parses a forecast table. Rows whose type is not "quantile", whose level is not
/// in `levels`, or whose horizon is beyond 4 weeks are ignored.
inline SubmissionSet parse_forecasts(const csv::Table& table, const QuantileLevelSet& levels) {
    const std::string& src = table.source();
    const std::size_t c_model = table.column("model");
    const std::size_t c_fdate = table.column("forecast_date");
    const std::size_t c_loc = table.column("location");
    const std::size_t c_tdate = table.column("target_end_date");
    const std::size_t c_type = table.column("type");
    const std::size_t c_q = table.column("quantile");
    const std::size_t c_val = table.column("value");

    struct Partial {
        std::vector<double> values;
        std::vector<bool> present;
        std::vector<std::size_t> lines;
    };
    std::map<ForecastKey, Partial> cells;

    for (const auto& row : table.rows()) {
        const auto& f = row.fields;
        if (f[c_type] != "quantile") {
            continue;
        }
        if (f[c_model].empty() || f[c_loc].empty()) {
            throw ParseError(src, row.line, "empty model or location");
        }
        const Date fdate = detail::parse_date_field(f[c_fdate], src, row.line);
        const Date tdate = detail::parse_date_field(f[c_tdate], src, row.line);
        const double tau = csv::parse_double(f[c_q], src, row.line);
        const double value = csv::parse_double(f[c_val], src, row.line);
        const int h = horizon_between(fdate, tdate);
        if (h < 1) {
            throw ParseError(src, row.line, "target_end_date is not after forecast_date");
        }
        if (h > kMaxHorizon) {
            continue;
        }
        const auto k = levels.index_of(tau);
        if (!k) {
            continue;
        }
        ForecastKey key{f[c_model], f[c_loc], fdate, tdate, h};
        auto& p = cells[key];
        if (p.values.empty()) {
            p.values.assign(levels.size(), 0.0);
            p.present.assign(levels.size(), false);
            p.lines.assign(levels.size(), 0);
        }
        if (p.present[*k]) {
            throw DuplicateError(src + ":" + std::to_string(row.line) + ": duplicate cell " +
                                 key.describe() + " at level " + csv::format_double(levels[*k]) +
                                 " (first seen on line " + std::to_string(p.lines[*k]) + ")");
        }
        p.present[*k] = true;
        p.values[*k] = value;
        p.lines[*k] = row.line;
    }

    SubmissionSet out(levels);
    for (auto& [key, p] : cells) {
        const bool full = std::all_of(p.present.begin(), p.present.end(), [](bool b) { return b; });
        // Ordering is checked over whatever levels are present.
        double prev = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < p.values.size(); ++k) {
            if (!p.present[k]) {
                continue;
            }
            if (p.values[k] < prev) {
                throw ValidationError("non-monotone quantiles in forecast " + key.describe() +
                                      " at level " + csv::format_double(levels[k]));
            }
            prev = p.values[k];
        }
        if (full) {
            out.add(QuantileForecast(key, levels, std::move(p.values)));
        } else {
            out.add_incomplete(key);
        }
    }
    return out;
}

inline SubmissionSet load_forecasts(const std::filesystem::path& path, const QuantileLevelSet& levels) {
    if (!std::filesystem::exists(path)) {
        throw DataError("forecast file '" + path.string() + "' does not exist");
    }
    return parse_forecasts(csv::read_file(path), levels);
}

/// Loads every `*.csv` under a directory (sorted by name) into one set.
inline SubmissionSet load_forecast_dir(const std::filesystem::path& dir, const QuantileLevelSet& levels) {
    if (std::filesystem::is_regular_file(dir)) {
        return load_forecasts(dir, levels);
    }
    if (!std::filesystem::is_directory(dir)) {
        throw DataError("forecast directory '" + dir.string() + "' does not exist");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") {
            files.push_back(e.path());
        }
    }
    if (files.empty()) {
        throw DataError("no forecast CSV files in '" + dir.string() + "'");
    }
    std::sort(files.begin(), files.end());
    SubmissionSet out(levels);
    for (const auto& f : files) {
        out.merge(load_forecasts(f, levels));
    }
    return out;
}

inline void add_forecast_rows(csv::Writer& w, const QuantileForecast& f) {
    const auto& k = f.key();
    for (std::size_t i = 0; i < f.values().size(); ++i) {
        w.add({k.model, k.forecast_date.iso(), k.location, k.target_end_date.iso(), "quantile",
               csv::format_double(f.levels()[i]), csv::format_double(f.value(i))});
    }
}

/// Canonical order: model, forecast date, location, target date, level.
inline csv::Writer forecast_writer(const SubmissionSet& subs) {
    csv::Writer w(forecast_csv_header());
    for (const auto* f : subs.all()) {
        add_forecast_rows(w, *f);
    }
    return w;
}

inline void write_forecasts(const std::filesystem::path& path, const SubmissionSet& subs) {
    forecast_writer(subs).write_file(path);
}

// ---------------------------------------------------------------------------
// Truth

struct TruthPoint {
    Date target_end_date;
    double value = 0.0;

    friend bool operator==(const TruthPoint&, const TruthPoint&) = default;
};

/// One vintage: location -> target_end_date -> value.
using TruthSnapshot = std::map<std::string, std::map<Date, double>>;

/// Versioned observations with as-of semantics.
class TruthStore {
public:
    void add_snapshot(Date as_of, TruthSnapshot snapshot) {
        auto [it, inserted] = snapshots_.emplace(as_of, std::move(snapshot));
        if (!inserted) {
            throw DuplicateError("duplicate truth snapshot for " + as_of.iso());
        }
    }

    bool empty() const noexcept { return snapshots_.empty(); }
    const std::map<Date, TruthSnapshot>& snapshots() const noexcept { return snapshots_; }

    std::vector<Date> snapshot_dates() const {
        std::vector<Date> out;
        for (const auto& [d, s] : snapshots_) {
            out.push_back(d);
        }
        return out;
    }

    /// Latest snapshot dated on or before `as_of`; nullptr if none.
    const TruthSnapshot* snapshot_as_of(Date as_of) const {
        auto it = snapshots_.upper_bound(as_of);
        if (it == snapshots_.begin()) {
            return nullptr;
        }
        return &std::prev(it)->second;
    }

    std::optional<Date> snapshot_date_as_of(Date as_of) const {
        auto it = snapshots_.upper_bound(as_of);
        if (it == snapshots_.begin()) {
            return std::nullopt;
        }
        return std::prev(it)->first;
    }

    const TruthSnapshot* latest() const {
        return snapshots_.empty() ? nullptr : &snapshots_.rbegin()->second;
    }

    std::optional<Date> latest_date() const {
        if (snapshots_.empty()) {
            return std::nullopt;
        }
        return snapshots_.rbegin()->first;
    }

    std::vector<TruthPoint> truth_as_of(Date as_of, std::string_view location) const {
        std::vector<TruthPoint> out;
        const TruthSnapshot* snap = snapshot_as_of(as_of);
        if (!snap) {
            return out;
        }
        auto it = snap->find(std::string(location));
        if (it == snap->end()) {
            return out;
        }
        for (const auto& [d, v] : it->second) {
            out.push_back(TruthPoint{d, v});
        }
        return out;
    }

    std::optional<double> value_as_of(Date as_of, std::string_view location, Date target) const {
        return lookup(snapshot_as_of(as_of), location, target);
    }

    std::optional<double> latest_value(std::string_view location, Date target) const {
        return lookup(latest(), location, target);
    }

    static std::optional<double> lookup(const TruthSnapshot* snap, std::string_view location, Date target) {
        if (!snap) {
            return std::nullopt;
        }
        auto it = snap->find(std::string(location));
        if (it == snap->end()) {
            return std::nullopt;
        }
        auto jt = it->second.find(target);
        if (jt == it->second.end()) {
            return std::nullopt;
        }
        return jt->second;
    }

private:
    std::map<Date, TruthSnapshot> snapshots_;
};

inline TruthSnapshot parse_truth_snapshot(const csv::Table& table) {
    const std::string& src = table.source();
    const std::size_t c_loc = table.column("location");
    const std::size_t c_date = table.column("target_end_date");
    const std::size_t c_val = table.column("value");
    TruthSnapshot snap;
    for (const auto& row : table.rows()) {
        const auto& f = row.fields;
        const Date d = detail::parse_date_field(f[c_date], src, row.line);
        const double v = csv::parse_double(f[c_val], src, row.line);
        auto [it, inserted] = snap[f[c_loc]].emplace(d, v);
        if (!inserted) {
            throw DuplicateError(src + ":" + std::to_string(row.line) + ": duplicate truth row for " +
                                 f[c_loc] + " " + d.iso());
        }
    }
    return snap;
}

/// Loads `<dir>/<YYYY-MM-DD>.csv` snapshots; the file stem is the as-of date.
inline TruthStore load_truth_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw DataError("truth directory '" + dir.string() + "' does not exist");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    TruthStore store;
    for (const auto& f : files) {
        Date as_of;
        try {
            as_of = Date::parse(f.stem().string());
        } catch (const std::invalid_argument&) {
            throw DataError("truth snapshot file name '" + f.filename().string() +
                            "' is not an ISO date");
        }
        store.add_snapshot(as_of, parse_truth_snapshot(csv::read_file(f)));
    }
    if (store.empty()) {
        throw DataError("no truth snapshots in '" + dir.string() + "'");
    }
    return store;
}

inline csv::Writer truth_snapshot_writer(const TruthSnapshot& snap) {
    csv::Writer w({"location", "target_end_date", "value"});
    for (const auto& [loc, series] : snap) {
        for (const auto& [d, v] : series) {
            w.add({loc, d.iso(), csv::format_double(v)});
        }
    }
    return w;
}

inline void write_truth_dir(const std::filesystem::path& dir, const TruthStore& store) {
    std::filesystem::create_directories(dir);
    for (const auto& [as_of, snap] : store.snapshots()) {
        truth_snapshot_writer(snap).write_file(dir / (as_of.iso() + ".csv"));
    }
}

/// Weekly counts from a cumulative series sampled on consecutive Saturdays.
/// Each increment is dated at the later Saturday; negative values are kept.
inline std::vector<TruthPoint> weekly_increments(std::span<const TruthPoint> cumulative) {
    std::vector<TruthPoint> out;
    for (std::size_t i = 0; i < cumulative.size(); ++i) {
        if (!cumulative[i].target_end_date.is_saturday()) {
            throw MissingWeekError("cumulative series date " + cumulative[i].target_end_date.iso() +
                                   " is not a Saturday");
        }
        if (i == 0) {
            continue;
        }
        if (days_between(cumulative[i - 1].target_end_date, cumulative[i].target_end_date) != 7) {
            throw MissingWeekError("gap in Saturday sequence between " +
                                   cumulative[i - 1].target_end_date.iso() + " and " +
                                   cumulative[i].target_end_date.iso());
        }
        out.push_back(TruthPoint{cumulative[i].target_end_date,
                                 cumulative[i].value - cumulative[i - 1].value});
    }
    return out;
}

/// Models with a complete forecast (all levels, horizons 1..4) for the location and
/// date. With `require_history`, the model must also have submitted on some earlier
/// forecast date at any location. Sorted by model id.
inline std::vector<std::string> eligible_components(const SubmissionSet& subs, std::string_view location,
                                                    Date forecast_date, const QuantileLevelSet& levels,
                                                    bool require_history) {
    std::vector<std::string> out;
    if (!(subs.levels() == levels)) {
        return out;
    }
    for (const auto& model : subs.models()) {
        if (!subs.complete(model, location, forecast_date)) {
            continue;
        }
        if (require_history) {
            auto first = subs.first_submission(model);
            if (!first || !(*first < forecast_date)) {
                continue;
            }
        }
        out.push_back(model);
    }
    return out;
}

}  // namespace qens
