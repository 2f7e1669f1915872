#pragma once

#include <chrono>
#include <compare>
#include <cstdio>
#include <string>

#include "rpo/errors.hpp"

namespace rpo {

/// Calendar date (no time zone, no time of day). Stored as days since the
/// Unix epoch so ordering and arithmetic are integer operations.
class Date {
  public:
    Date() = default;

    Date(int year, unsigned month, unsigned day) {
        const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                              std::chrono::day{day}};
        if (!ymd.ok()) {
            throw ParseError("invalid calendar date " + std::to_string(year) + "-" + std::to_string(month) + "-" +
                             std::to_string(day));
        }
        days_ = std::chrono::sys_days(ymd).time_since_epoch().count();
    }

    /// Parse an ISO-8601 date (YYYY-MM-DD).
    static Date parse(const std::string& text, long line = -1) {
        int y = 0;
        unsigned m = 0, d = 0;
        char dash1 = 0, dash2 = 0, extra = 0;
        if (std::sscanf(text.c_str(), "%d%c%u%c%u%c", &y, &dash1, &m, &dash2, &d, &extra) != 5 || dash1 != '-' ||
            dash2 != '-') {
            throw ParseError("expected ISO-8601 date, got '" + text + "'", line);
        }
        try {
            return Date(y, m, d);
        } catch (const ParseError& e) {
            throw ParseError(e.what(), line);
        }
    }

    std::string to_string() const {
        const auto ymd = ymd_();
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day()));
        return buf;
    }

    int year() const { return int(ymd_().year()); }
    unsigned month() const { return unsigned(ymd_().month()); }
    unsigned day() const { return unsigned(ymd_().day()); }

    /// Days since 1970-01-01.
    long serial() const { return days_; }

    Date next_day() const {
        Date d;
        d.days_ = days_ + 1;
        return d;
    }

    auto operator<=>(const Date&) const = default;

  private:
    std::chrono::year_month_day ymd_() const {
        return std::chrono::year_month_day(std::chrono::sys_days(std::chrono::days(days_)));
    }

    long days_ = 0;
};

/// True when a and b fall in the same calendar month.
inline bool same_month(const Date& a, const Date& b) {
    return a.year() == b.year() && a.month() == b.month();
}

}  // namespace rpo
