#pragma once

#include <charconv>
#include <chrono>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <string_view>

#include "qens/errors.hpp"

namespace qens {

/// Calendar day stored as days since 1970-01-01.
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::int32_t days_since_epoch) : days_(days_since_epoch) {}

    static Date from_ymd(int year, unsigned month, unsigned day) {
        const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                              std::chrono::day{day}};
        if (!ymd.ok()) {
            throw std::invalid_argument("invalid calendar date");
        }
        return Date(static_cast<std::int32_t>(std::chrono::sys_days{ymd}.time_since_epoch().count()));
    }

    /// Parses strict ISO-8601 `YYYY-MM-DD`; throws std::invalid_argument.
    static Date parse(std::string_view text) {
        if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
            throw std::invalid_argument("expected YYYY-MM-DD, got '" + std::string(text) + "'");
        }
        auto field = [&](std::size_t pos, std::size_t len) {
            int value = 0;
            const char* first = text.data() + pos;
            const char* last = first + len;
            auto [ptr, ec] = std::from_chars(first, last, value);
            if (ec != std::errc{} || ptr != last) {
                throw std::invalid_argument("expected YYYY-MM-DD, got '" + std::string(text) + "'");
            }
            return value;
        };
        return from_ymd(field(0, 4), static_cast<unsigned>(field(5, 2)),
                        static_cast<unsigned>(field(8, 2)));
    }

    std::string iso() const {
        const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days_}}};
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
        return buf;
    }

    constexpr std::int32_t days_since_epoch() const noexcept { return days_; }

    /// 0 = Sunday ... 6 = Saturday.
    constexpr int weekday() const noexcept {
        // 1970-01-01 was a Thursday.
        const int r = (days_ + 4) % 7;
        return r < 0 ? r + 7 : r;
    }
    constexpr bool is_saturday() const noexcept { return weekday() == 6; }

    constexpr Date plus_days(std::int32_t n) const noexcept { return Date(days_ + n); }
    constexpr Date plus_weeks(std::int32_t n) const noexcept { return Date(days_ + 7 * n); }

    constexpr auto operator<=>(const Date&) const = default;

private:
    std::int32_t days_ = 0;
};

constexpr std::int32_t days_between(Date from, Date to) noexcept {
    return to.days_since_epoch() - from.days_since_epoch();
}

/// Week-based horizon of target `t` relative to forecast date `s`: the number of
/// 7-day blocks needed to reach `t`, so that a Monday forecast targets the coming
/// Saturday at horizon 1. Returns 0 when `t` is not after `s`.
constexpr int horizon_between(Date s, Date t) noexcept {
    const std::int32_t d = days_between(s, t);
    return d <= 0 ? 0 : static_cast<int>((d + 6) / 7);
}

/// Saturday ending the target week at `horizon` for a forecast made on `s`.
constexpr Date target_end_date(Date s, int horizon) noexcept {
    int to_saturday = (6 - s.weekday() + 7) % 7;
    if (to_saturday == 0) {
        to_saturday = 7;
    }
    return s.plus_days(to_saturday).plus_weeks(horizon - 1);
}

}  // namespace qens

template <>
struct std::hash<qens::Date> {
    std::size_t operator()(const qens::Date& d) const noexcept {
        return std::hash<std::int32_t>{}(d.days_since_epoch());
    }
};
