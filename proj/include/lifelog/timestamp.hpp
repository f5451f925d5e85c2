#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace lifelog {

// Local wall-clock date. No timezone is attached.
struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  auto operator<=>(const Date&) const = default;

  // Days since 1970-01-01.
  std::int64_t serial() const;
  static Date from_serial(std::int64_t days);
  // 0 = Monday ... 6 = Sunday.
  int weekday() const;

  std::string to_string() const;  // YYYY-MM-DD
  static Date parse(std::string_view text);
};

struct Timestamp {
  Date date;
  int hour = 0;
  int minute = 0;
  int second = 0;

  auto operator<=>(const Timestamp&) const = default;

  std::int64_t seconds_since_epoch() const;
  static Timestamp from_seconds(std::int64_t seconds);

  std::string to_string() const;  // YYYY-MM-DDTHH:MM:SS
  // Throws ValidationError on anything but the exact format or an impossible date.
  static Timestamp parse(std::string_view text);
};

}  // namespace lifelog
