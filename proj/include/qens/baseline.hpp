#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "qens/errors.hpp"
#include "qens/forecast_data.hpp"
#include "qens/random.hpp"

namespace qens {

/// R's default (type 7) sample quantile: linear interpolation between order
/// statistics at h = (n - 1) p + 1.
inline double sample_quantile_type7(std::span<const double> sorted, double p) {
    if (sorted.empty()) {
        throw InputError("sample quantile of an empty sample");
    }
    if (!(p >= 0.0 && p <= 1.0)) {
        throw InputError("probability outside [0,1]");
    }
    const std::size_t n = sorted.size();
    const double h = static_cast<double>(n - 1) * p;
    const double lo = std::floor(h);
    const std::size_t j = static_cast<std::size_t>(lo);
    if (j + 1 >= n) {
        return sorted[n - 1];
    }
    return sorted[j] + (h - lo) * (sorted[j + 1] - sorted[j]);
}

/// Type-7 quantile of a multiset given as sorted distinct values with counts.
inline double sample_quantile_type7(std::span<const double> values, std::span<const std::uint64_t> counts,
                                    double p) {
    std::uint64_t total = 0;
    for (auto c : counts) {
        total += c;
    }
    if (total == 0) {
        throw InputError("sample quantile of an empty sample");
    }
    const long double h = static_cast<long double>(total - 1) * static_cast<long double>(p);
    const long double lo = std::floor(h);
    const std::uint64_t j = static_cast<std::uint64_t>(lo);  // 0-based order statistic
    const double frac = static_cast<double>(h - lo);
    auto order_stat = [&](std::uint64_t idx) {
        std::uint64_t cum = 0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            cum += counts[i];
            if (idx < cum) {
                return values[i];
            }
        }
        return values.back();
    };
    const double xj = order_stat(j);
    if (j + 1 >= total) {
        return xj;
    }
    const double xj1 = order_stat(j + 1);
    return xj + frac * (xj1 - xj);
}

struct BaselineOptions {
    int max_horizon = kMaxHorizon;
    /// Largest number of distinct partial sums tracked by the exact convolution.
    std::size_t max_support = 1'000'000;
    std::size_t mc_trajectories = 100'000;
    std::uint64_t seed = 0;
    bool floor_at_zero = true;
    std::string model = "baseline";
};

/// Innovation multiset: every observed weekly difference and its negation.
inline std::vector<double> difference_multiset(std::span<const double> history) {
    if (history.size() < 2) {
        throw InsufficientHistoryError("random walk baseline needs at least two observations");
    }
    std::vector<double> d;
    d.reserve(2 * (history.size() - 1));
    for (std::size_t i = 1; i < history.size(); ++i) {
        const double diff = history[i] - history[i - 1];
        d.push_back(diff);
        d.push_back(-diff);
    }
    std::sort(d.begin(), d.end());
    return d;
}

/// Predictive quantiles of the random walk before flooring, one vector per
/// horizon 1..max_horizon. Horizon h uses the h-fold sum of independent draws
/// from the innovation multiset, by exact convolution while the number of
/// distinct sums stays within `max_support`, otherwise by seeded Monte Carlo.
inline std::vector<std::vector<double>> baseline_quantiles(std::span<const double> history,
                                                           const QuantileLevelSet& levels,
                                                           const BaselineOptions& opts = {}) {
    const std::vector<double> diffs = difference_multiset(history);
    const double last = history.back();

    std::map<double, std::uint64_t> step;
    for (double d : diffs) {
        ++step[d];
    }

    std::vector<std::vector<double>> out;
    std::map<double, std::uint64_t> dist{{0.0, 1}};
    bool exact = true;
    const long double max_count = 1.8e19L;
    long double total = 1.0L;
    for (int h = 1; h <= opts.max_horizon; ++h) {
        std::vector<double> q(levels.size());
        if (exact) {
            total *= static_cast<long double>(diffs.size());
            exact = total < max_count;
        }
        if (exact) {
            std::map<double, std::uint64_t> next;
            for (const auto& [v, c] : dist) {
                for (const auto& [d, cd] : step) {
                    next[v + d] += c * cd;
                }
                if (next.size() > opts.max_support) {
                    break;
                }
            }
            if (next.size() <= opts.max_support) {
                dist = std::move(next);
                std::vector<double> vals;
                std::vector<std::uint64_t> counts;
                vals.reserve(dist.size());
                counts.reserve(dist.size());
                for (const auto& [v, c] : dist) {
                    vals.push_back(v);
                    counts.push_back(c);
                }
                for (std::size_t k = 0; k < levels.size(); ++k) {
                    q[k] = last + sample_quantile_type7(vals, counts, levels[k]);
                }
                out.push_back(std::move(q));
                continue;
            }
            exact = false;
        }
        Rng rng(opts.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(h)));
        std::vector<double> sums(opts.mc_trajectories);
        for (auto& s : sums) {
            double acc = 0.0;
            for (int step_i = 0; step_i < h; ++step_i) {
                acc += diffs[rng.index(diffs.size())];
            }
            s = acc;
        }
        std::sort(sums.begin(), sums.end());
        for (std::size_t k = 0; k < levels.size(); ++k) {
            q[k] = last + sample_quantile_type7(sums, levels[k]);
        }
        out.push_back(std::move(q));
    }
    return out;
}

/// Baseline forecasts for horizons 1..max_horizon from `history` (weekly values in
/// date order, last entry = most recent observation as of `forecast_date`).
inline std::vector<QuantileForecast> baseline_forecast(std::span<const double> history,
                                                       const std::string& location, Date forecast_date,
                                                       const QuantileLevelSet& levels,
                                                       const BaselineOptions& opts = {}) {
    auto raw = baseline_quantiles(history, levels, opts);
    std::vector<QuantileForecast> out;
    for (int h = 1; h <= static_cast<int>(raw.size()); ++h) {
        auto& q = raw[static_cast<std::size_t>(h - 1)];
        if (opts.floor_at_zero) {
            for (auto& v : q) {
                v = std::max(v, 0.0);
            }
        }
        // Guard against ulp-level crossings from floating-point interpolation.
        for (std::size_t k = 1; k < q.size(); ++k) {
            q[k] = std::max(q[k], q[k - 1]);
        }
        out.emplace_back(ForecastKey::make(opts.model, location, forecast_date, target_end_date(forecast_date, h)),
                         levels, std::move(q));
    }
    return out;
}

/// Baseline submissions for every (location, date) with at least two observed
/// weeks in the truth available as of that date.
inline SubmissionSet baseline_submissions(const TruthStore& truth, std::span<const Date> dates,
                                          const QuantileLevelSet& levels, const BaselineOptions& opts = {}) {
    SubmissionSet out(levels);
    for (Date s : dates) {
        const TruthSnapshot* snap = truth.snapshot_as_of(s);
        if (!snap) {
            continue;
        }
        for (const auto& [loc, series] : *snap) {
            std::vector<double> hist;
            for (const auto& [d, v] : series) {
                if (d < s) {
                    hist.push_back(v);
                }
            }
            if (hist.size() < 2) {
                continue;
            }
            for (auto& f : baseline_forecast(hist, loc, s, levels, opts)) {
                out.add(std::move(f));
            }
        }
    }
    return out;
}

}  // namespace qens
