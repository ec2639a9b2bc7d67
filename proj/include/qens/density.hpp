#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/cauchy.hpp>
#include <boost/math/distributions/normal.hpp>

#include "qens/errors.hpp"
#include "qens/forecast_data.hpp"

namespace qens {

/// Standard member Z of a location-scale family used for tail extrapolation.
enum class TailFamily { normal, cauchy };

inline std::string to_string(TailFamily f) { return f == TailFamily::normal ? "normal" : "cauchy"; }

inline TailFamily parse_tail_family(std::string_view s) {
    if (s == "normal") {
        return TailFamily::normal;
    }
    if (s == "cauchy") {
        return TailFamily::cauchy;
    }
    throw ConfigError("unknown tail family '" + std::string(s) + "'");
}

namespace family {

inline double quantile(TailFamily f, double p) {
    if (f == TailFamily::normal) {
        return boost::math::quantile(boost::math::normal_distribution<double>(), p);
    }
    return boost::math::quantile(boost::math::cauchy_distribution<double>(), p);
}

inline double cdf(TailFamily f, double z) {
    if (f == TailFamily::normal) {
        return boost::math::cdf(boost::math::normal_distribution<double>(), z);
    }
    return boost::math::cdf(boost::math::cauchy_distribution<double>(), z);
}

inline double pdf(TailFamily f, double z) {
    if (f == TailFamily::normal) {
        return boost::math::pdf(boost::math::normal_distribution<double>(), z);
    }
    return boost::math::pdf(boost::math::cauchy_distribution<double>(), z);
}

}  // namespace family

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
class MonotoneCubic {
public:
    MonotoneCubic() = default;

    MonotoneCubic(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        if (n < 2 || y_.size() != n) {
            throw InputError("monotone spline needs at least two matching knots");
        }
        std::vector<double> h(n - 1), delta(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            h[i] = x_[i + 1] - x_[i];
            if (!(h[i] > 0.0)) {
                throw DegenerateError("spline knots must be strictly increasing");
            }
            delta[i] = (y_[i + 1] - y_[i]) / h[i];
        }
        d_.assign(n, 0.0);
        if (n == 2) {
            d_[0] = d_[1] = delta[0];
            return;
        }
        for (std::size_t i = 1; i + 1 < n; ++i) {
            if (delta[i - 1] * delta[i] <= 0.0) {
                d_[i] = 0.0;
            } else {
                // Weighted harmonic mean keeps the interpolant monotone.
                const double w1 = 2.0 * h[i] + h[i - 1];
                const double w2 = h[i] + 2.0 * h[i - 1];
                d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        d_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
        d_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }

    double front() const { return x_.front(); }
    double back() const { return x_.back(); }
    std::span<const double> knots() const { return x_; }
    std::span<const double> slopes() const { return d_; }

    /// Interpolated value on [x_1, x_n]; exact at the knots.
    double value(double x) const {
        const std::size_t i = segment(x);
        if (x == x_[i]) {
            return y_[i];
        }
        if (x == x_[i + 1]) {
            return y_[i + 1];
        }
        const double h = x_[i + 1] - x_[i];
        const double t = (x - x_[i]) / h;
        const double t2 = t * t;
        const double t3 = t2 * t;
        const double h00 = 2 * t3 - 3 * t2 + 1;
        const double h10 = t3 - 2 * t2 + t;
        const double h01 = -2 * t3 + 3 * t2;
        const double h11 = t3 - t2;
        return h00 * y_[i] + h10 * h * d_[i] + h01 * y_[i + 1] + h11 * h * d_[i + 1];
    }

    double derivative(double x) const {
        const std::size_t i = segment(x);
        const double h = x_[i + 1] - x_[i];
        const double t = (x - x_[i]) / h;
        const double t2 = t * t;
        const double dh00 = (6 * t2 - 6 * t) / h;
        const double dh10 = 3 * t2 - 4 * t + 1;
        const double dh01 = (-6 * t2 + 6 * t) / h;
        const double dh11 = 3 * t2 - 2 * t;
        return dh00 * y_[i] + dh10 * d_[i] + dh01 * y_[i + 1] + dh11 * d_[i + 1];
    }

private:
    static double end_slope(double h0, double h1, double del0, double del1) {
        double d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
        if (std::signbit(d) != std::signbit(del0) || d == 0.0) {
            return 0.0;
        }
        if (std::signbit(del0) != std::signbit(del1) && std::abs(d) > std::abs(3.0 * del0)) {
            d = 3.0 * del0;
        }
        return d;
    }

    std::size_t segment(double x) const {
        auto it = std::upper_bound(x_.begin(), x_.end(), x);
        std::size_t i = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
        return std::min(i, x_.size() - 2);
    }

    std::vector<double> x_, y_, d_;
};

enum class TailSide { lower, upper };

/// Y = location + scale * Z fitted through two quantiles.
struct TailFit {
    double location = 0.0;
    double scale = 1.0;
    TailSide side = TailSide::lower;
};

inline TailFit fit_tail(TailFamily family, double tau_i, double q_i, double tau_j, double q_j, TailSide side) {
    const double z_i = family::quantile(family, tau_i);
    const double z_j = family::quantile(family, tau_j);
    const double b = (q_i - q_j) / (z_i - z_j);
    assert(b > 0.0);
    if (!(b > 0.0)) {
        throw DegenerateError("tail scale is not positive");
    }
    return TailFit{q_i - b * z_i, b, side};
}

/// Predictive density rebuilt from quantiles: monotone spline CDF between the
/// outermost quantiles and location-scale tails outside them.
class DensityApprox {
public:
    DensityApprox(std::vector<double> levels, std::vector<double> values, TailFamily family)
        : levels_(std::move(levels)), values_(std::move(values)), family_(family) {
        const std::size_t k = values_.size();
        if (k < 2 || levels_.size() != k) {
            throw InputError("density reconstruction needs at least two quantiles");
        }
        for (std::size_t i = 1; i < k; ++i) {
            if (!(values_[i] > values_[i - 1])) {
                throw DegenerateError("density reconstruction needs strictly increasing quantiles");
            }
        }
        interior_ = MonotoneCubic(values_, levels_);
        lower_ = fit_tail(family, levels_[0], values_[0], levels_[1], values_[1], TailSide::lower);
        upper_ = fit_tail(family, levels_[k - 1], values_[k - 1], levels_[k - 2], values_[k - 2],
                          TailSide::upper);
    }

    TailFamily family() const noexcept { return family_; }
    const TailFit& lower_tail() const noexcept { return lower_; }
    const TailFit& upper_tail() const noexcept { return upper_; }
    const MonotoneCubic& interior() const noexcept { return interior_; }
    std::span<const double> levels() const noexcept { return levels_; }
    std::span<const double> values() const noexcept { return values_; }

    double cdf(double y) const {
        if (y < values_.front()) {
            return family::cdf(family_, (y - lower_.location) / lower_.scale);
        }
        if (y > values_.back()) {
            return family::cdf(family_, (y - upper_.location) / upper_.scale);
        }
        return interior_.value(y);
    }

    /// Density; the interior spline's side is used at q_1 and q_K.
    double density(double y) const {
        if (y < values_.front()) {
            return family::pdf(family_, (y - lower_.location) / lower_.scale) / lower_.scale;
        }
        if (y > values_.back()) {
            return family::pdf(family_, (y - upper_.location) / upper_.scale) / upper_.scale;
        }
        return interior_.derivative(y);
    }

private:
    std::vector<double> levels_;
    std::vector<double> values_;
    TailFamily family_;
    MonotoneCubic interior_;
    TailFit lower_;
    TailFit upper_;
};

inline DensityApprox density_from_quantiles(const QuantileForecast& q, TailFamily family) {
    return DensityApprox(std::vector<double>(q.levels().levels().begin(), q.levels().levels().end()),
                         std::vector<double>(q.values().begin(), q.values().end()), family);
}

/// -log density at y; +infinity where the density vanishes.
inline double neg_log_score(const DensityApprox& d, double y) {
    if (std::isnan(y)) {
        throw InputError("observation is NaN");
    }
    const double f = d.density(y);
    if (!(f > 0.0)) {
        return std::numeric_limits<double>::infinity();
    }
    return -std::log(f);
}

}  // namespace qens
