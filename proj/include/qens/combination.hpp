#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qens/errors.hpp"
#include "qens/forecast_data.hpp"

namespace qens {

/// What a weight vector applies to: all cells, one horizon, or one quantile level.
struct Stratum {
    enum class Kind { all, horizon, quantile };
    Kind kind = Kind::all;
    int horizon = 0;
    double level = 0.0;

    static Stratum all() { return {}; }
    static Stratum for_horizon(int h) { return {Kind::horizon, h, 0.0}; }
    static Stratum for_level(double tau) { return {Kind::quantile, 0, tau}; }

    std::string label() const {
        switch (kind) {
            case Kind::horizon:
                return "h" + std::to_string(horizon);
            case Kind::quantile:
                return "q" + csv::format_double(level);
            default:
                return "all";
        }
    }
};

/// Nonnegative component weights summing to one, keyed by model id (sorted).
class WeightVector {
public:
    WeightVector() = default;

    WeightVector(std::vector<std::string> models, std::vector<double> weights, Stratum stratum = {})
        : models_(std::move(models)), weights_(std::move(weights)), stratum_(stratum) {
        if (models_.size() != weights_.size()) {
            throw ValidationError("weight vector has mismatched models and weights");
        }
        if (!std::is_sorted(models_.begin(), models_.end()) ||
            std::adjacent_find(models_.begin(), models_.end()) != models_.end()) {
            throw ValidationError("weight vector models must be sorted and unique");
        }
        double sum = 0.0;
        for (double w : weights_) {
            if (!(w >= 0.0) || !std::isfinite(w)) {
                throw ValidationError("weights must be finite and nonnegative");
            }
            sum += w;
        }
        if (!models_.empty() && std::abs(sum - 1.0) > 1e-12 * static_cast<double>(models_.size())) {
            throw ValidationError("weights must sum to 1 (got " + csv::format_double(sum) + ")");
        }
    }

    static WeightVector uniform(std::vector<std::string> models, Stratum stratum = {}) {
        std::sort(models.begin(), models.end());
        const double w = 1.0 / static_cast<double>(models.size());
        std::vector<double> weights(models.size(), w);
        return WeightVector(std::move(models), std::move(weights), stratum);
    }

    const std::vector<std::string>& models() const noexcept { return models_; }
    std::span<const double> weights() const noexcept { return weights_; }
    std::size_t size() const noexcept { return models_.size(); }
    const Stratum& stratum() const noexcept { return stratum_; }

    double weight(std::string_view model) const {
        auto it = std::lower_bound(models_.begin(), models_.end(), model);
        if (it == models_.end() || *it != model) {
            return 0.0;
        }
        return weights_[static_cast<std::size_t>(it - models_.begin())];
    }

    double max_weight() const {
        return weights_.empty() ? 0.0 : *std::max_element(weights_.begin(), weights_.end());
    }

private:
    std::vector<std::string> models_;
    std::vector<double> weights_;
    Stratum stratum_;
};

/// Per-model values at one (location, forecast date, target, level).
struct ComponentSlice {
    std::vector<double> values;
    std::vector<bool> available;
};

/// Raw renormalization behind effective_weights(): missing entries become 0 and
/// the rest are divided by their total. Untouched when all are available.
inline std::vector<double> renormalize(std::span<const double> weights, const std::vector<bool>& available) {
    std::vector<double> out(weights.begin(), weights.end());
    if (std::all_of(available.begin(), available.end(), [](bool b) { return b; })) {
        return out;
    }
    double mass = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (available[i]) {
            mass += weights[i];
        }
    }
    if (!(mass > 0.0)) {
        throw NoMassError("no available component carries positive weight");
    }
    for (std::size_t i = 0; i < weights.size(); ++i) {
        out[i] = available[i] ? weights[i] / mass : 0.0;
    }
    return out;
}

/// Zeroes missing models and rescales the rest to sum to one. Returned unchanged
/// when every model is available.
inline WeightVector effective_weights(const WeightVector& w, const std::vector<bool>& available) {
    if (available.size() != w.size()) {
        throw ValidationError("availability does not match the weight vector");
    }
    return WeightVector(w.models(), renormalize(w.weights(), available), w.stratum());
}

/// Sum of weight * value.
inline double weighted_mean(std::span<const double> values, std::span<const double> weights) {
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        acc += weights[i] * values[i];
    }
    return acc;
}

enum class MedianRule {
    interpolated,  ///< linear interpolation between central weighted sample quantiles
    lower,         ///< inf { q : weight of values <= q is at least 1/2 }
};

/// Weighted median of values already sorted ascending. Zero-weight entries carry
/// no mass and are skipped.
///
/// The interpolated rule places each value at the midpoint of its weight block,
/// P_i = sum_{j<i} w_j + w_i / 2, and reads off the piecewise-linear curve through
/// (P_i, v_i) at half the total weight, clamped to the extreme values.
inline double weighted_median_sorted(std::span<const double> values, std::span<const double> weights,
                                     MedianRule rule = MedianRule::interpolated) {
    double total = 0.0;
    bool all_equal = true;
    double first_w = -1.0;
    for (double w : weights) {
        if (w > 0.0) {
            total += w;
            if (first_w < 0.0) {
                first_w = w;
            } else if (w != first_w) {
                all_equal = false;
            }
        }
    }
    if (!(total > 0.0)) {
        throw NoMassError("weighted median with no positive weight");
    }
    // Equal weights reduce to unit weights, which keeps the arithmetic exact.
    auto weight_of = [&](std::size_t i) { return all_equal ? 1.0 : weights[i]; };
    if (all_equal) {
        total = 0.0;
        for (double w : weights) {
            total += w > 0.0 ? 1.0 : 0.0;
        }
    }

    if (rule == MedianRule::lower) {
        double cum = 0.0;
        double last = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!(weights[i] > 0.0)) {
                continue;
            }
            cum += weight_of(i);
            last = values[i];
            if (2.0 * cum >= total) {
                return values[i];
            }
        }
        return last;
    }

    // Positions are doubled (2 * cum_before + w_i) and compared against the total.
    double cum = 0.0;
    double prev_pos = 0.0;
    double prev_val = 0.0;
    bool have_prev = false;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(weights[i] > 0.0)) {
            continue;
        }
        const double w = weight_of(i);
        const double pos = 2.0 * cum + w;
        cum += w;
        if (pos >= total) {
            if (!have_prev || pos == total) {
                return values[i];
            }
            const double frac = (total - prev_pos) / (pos - prev_pos);
            return prev_val + frac * (values[i] - prev_val);
        }
        prev_pos = pos;
        prev_val = values[i];
        have_prev = true;
    }
    return prev_val;
}

/// Sorts (value, weight) pairs by value, keeping input order among ties.
inline double weighted_median(std::span<const double> values, std::span<const double> weights,
                              MedianRule rule = MedianRule::interpolated) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> v(values.size()), w(values.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        v[i] = values[order[i]];
        w[i] = weights[order[i]];
    }
    return weighted_median_sorted(v, w, rule);
}

namespace detail {

inline void check_slice(const ComponentSlice& slice, const WeightVector& w) {
    if (slice.values.size() != w.size() || slice.available.size() != w.size()) {
        throw ValidationError("component slice does not match the weight vector");
    }
}

}  // namespace detail

inline double weighted_mean_quantile(const ComponentSlice& slice, const WeightVector& w) {
    detail::check_slice(slice, w);
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (slice.available[i]) {
            acc += w.weights()[i] * slice.values[i];
        }
    }
    return acc;
}

inline double weighted_median_quantile(const ComponentSlice& slice, const WeightVector& w,
                                       MedianRule rule = MedianRule::interpolated) {
    detail::check_slice(slice, w);
    std::vector<double> v, wt;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (slice.available[i]) {
            v.push_back(slice.values[i]);
            wt.push_back(w.weights()[i]);
        }
    }
    if (v.empty()) {
        throw NoMassError("no available component in slice");
    }
    return weighted_median(v, wt, rule);
}

enum class Combiner { mean, median };

inline std::string to_string(Combiner c) { return c == Combiner::mean ? "mean" : "median"; }

inline Combiner parse_combiner(std::string_view s) {
    if (s == "mean") {
        return Combiner::mean;
    }
    if (s == "median") {
        return Combiner::median;
    }
    throw ConfigError("unknown combiner '" + std::string(s) + "'");
}

/// Combines one level across components; `values` and `weights` are aligned and
/// the weights already effective.
inline double combine_level(Combiner method, std::span<const double> values, std::span<const double> weights,
                            MedianRule rule = MedianRule::interpolated) {
    const double v = method == Combiner::mean ? weighted_mean(values, weights)
                                              : weighted_median(values, weights, rule);
    return std::max(v, 0.0);
}

namespace detail {

inline void check_components(std::span<const QuantileForecast* const> forecasts) {
    if (forecasts.empty()) {
        throw ValidationError("cannot combine an empty component set");
    }
    const auto& k0 = forecasts.front()->key();
    for (const auto* f : forecasts) {
        if (!(f->levels() == forecasts.front()->levels())) {
            throw ValidationError("component " + f->key().describe() + " uses a different level set");
        }
        const auto& k = f->key();
        if (k.location != k0.location || k.forecast_date != k0.forecast_date ||
            k.target_end_date != k0.target_end_date) {
            throw ValidationError("component " + k.describe() + " does not share the target of " +
                                  k0.describe());
        }
    }
}

/// Effective weights of `w` over the given components, ordered like `forecasts`.
inline std::vector<double> component_weights(std::span<const QuantileForecast* const> forecasts,
                                             const WeightVector& w) {
    std::vector<bool> available(w.size(), false);
    for (const auto* f : forecasts) {
        auto it = std::lower_bound(w.models().begin(), w.models().end(), f->key().model);
        if (it != w.models().end() && *it == f->key().model) {
            available[static_cast<std::size_t>(it - w.models().begin())] = true;
        }
    }
    const WeightVector eff = effective_weights(w, available);
    std::vector<double> out;
    out.reserve(forecasts.size());
    for (const auto* f : forecasts) {
        out.push_back(eff.weight(f->key().model));
    }
    return out;
}

}  // namespace detail

/// Applies the combiner level by level. Components missing from `w` get weight 0
/// and the weights of the present ones are renormalized. Crossing quantiles are
/// sorted back into order.
inline QuantileForecast combine(std::span<const QuantileForecast* const> forecasts, const WeightVector& w,
                                Combiner method, const std::string& ensemble_model,
                                MedianRule rule = MedianRule::interpolated) {
    detail::check_components(forecasts);
    const std::vector<double> weights = detail::component_weights(forecasts, w);
    const auto& levels = forecasts.front()->levels();
    std::vector<double> out(levels.size());
    std::vector<double> column(forecasts.size());
    for (std::size_t k = 0; k < levels.size(); ++k) {
        for (std::size_t m = 0; m < forecasts.size(); ++m) {
            column[m] = forecasts[m]->value(k);
        }
        out[k] = combine_level(method, column, weights, rule);
    }
    // The interpolated median can cross where component values swap order.
    std::sort(out.begin(), out.end());
    ForecastKey key = forecasts.front()->key();
    key.model = ensemble_model;
    return QuantileForecast(std::move(key), levels, std::move(out));
}

/// Level-specific weights (one WeightVector per level). Crossing quantiles are
/// sorted back into order.
inline QuantileForecast combine(std::span<const QuantileForecast* const> forecasts,
                                std::span<const WeightVector> per_level, Combiner method,
                                const std::string& ensemble_model, MedianRule rule = MedianRule::interpolated) {
    detail::check_components(forecasts);
    const auto& levels = forecasts.front()->levels();
    if (per_level.size() != levels.size()) {
        throw ValidationError("need one weight vector per quantile level");
    }
    std::vector<double> out(levels.size());
    std::vector<double> column(forecasts.size());
    for (std::size_t k = 0; k < levels.size(); ++k) {
        const std::vector<double> weights = detail::component_weights(forecasts, per_level[k]);
        for (std::size_t m = 0; m < forecasts.size(); ++m) {
            column[m] = forecasts[m]->value(k);
        }
        out[k] = combine_level(method, column, weights, rule);
    }
    std::sort(out.begin(), out.end());
    ForecastKey key = forecasts.front()->key();
    key.model = ensemble_model;
    return QuantileForecast(std::move(key), levels, std::move(out));
}

}  // namespace qens
