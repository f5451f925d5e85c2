#include "lifelog/timestamp.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

#include "lifelog/error.hpp"

namespace lifelog {
namespace {

using std::chrono::day;
using std::chrono::days;
using std::chrono::month;
using std::chrono::sys_days;
using std::chrono::year;
using std::chrono::year_month_day;

year_month_day to_ymd(const Date& d) {
  return year_month_day{year{d.year}, month{static_cast<unsigned>(d.month)},
                        day{static_cast<unsigned>(d.day)}};
}

bool parse_fixed(std::string_view text, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > text.size()) return false;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (text[i] < '0' || text[i] > '9') return false;
  }
  auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
  return ec == std::errc{} && ptr == text.data() + pos + len;
}

}  // namespace

std::int64_t Date::serial() const {
  return sys_days{to_ymd(*this)}.time_since_epoch().count();
}

Date Date::from_serial(std::int64_t n) {
  year_month_day ymd{sys_days{days{n}}};
  return Date{static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month())),
              static_cast<int>(static_cast<unsigned>(ymd.day()))};
}

int Date::weekday() const {
  return static_cast<int>(std::chrono::weekday{sys_days{to_ymd(*this)}}.iso_encoding()) - 1;
}

std::string Date::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
  return buf;
}

Date Date::parse(std::string_view text) {
  Date d;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !parse_fixed(text, 0, 4, d.year) ||
      !parse_fixed(text, 5, 2, d.month) || !parse_fixed(text, 8, 2, d.day) ||
      !to_ymd(d).ok()) {
    throw ValidationError("unparsable date '" + std::string(text) + "'");
  }
  return d;
}

std::int64_t Timestamp::seconds_since_epoch() const {
  return date.serial() * 86400 + hour * 3600 + minute * 60 + second;
}

Timestamp Timestamp::from_seconds(std::int64_t s) {
  std::int64_t d = s >= 0 ? s / 86400 : -((-s + 86399) / 86400);
  std::int64_t rem = s - d * 86400;
  Timestamp t;
  t.date = Date::from_serial(d);
  t.hour = static_cast<int>(rem / 3600);
  t.minute = static_cast<int>(rem % 3600 / 60);
  t.second = static_cast<int>(rem % 60);
  return t;
}

std::string Timestamp::to_string() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02d", date.to_string().c_str(), hour, minute,
                second);
  return buf;
}

Timestamp Timestamp::parse(std::string_view text) {
  Timestamp t;
  bool ok = text.size() == 19 && text[10] == 'T' && text[13] == ':' && text[16] == ':' &&
            parse_fixed(text, 11, 2, t.hour) && parse_fixed(text, 14, 2, t.minute) &&
            parse_fixed(text, 17, 2, t.second) && t.hour < 24 && t.minute < 60 && t.second < 60;
  if (!ok) throw ValidationError("unparsable timestamp '" + std::string(text) + "'");
  try {
    t.date = Date::parse(text.substr(0, 10));
  } catch (const ValidationError&) {
    throw ValidationError("unparsable timestamp '" + std::string(text) + "'");
  }
  return t;
}

}  // namespace lifelog
