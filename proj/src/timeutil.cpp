#include "xregion/timeutil.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>

namespace xregion {
namespace {

constexpr std::int64_t kSecondsPerDay = 86400;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  auto res = std::from_chars(s.data() + pos, s.data() + pos + len, out);
  return res.ec == std::errc{};
}

bool valid_civil(int y, int mo, int d, int h, int mi, int sec) {
  static constexpr int kDays[] = {31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (y < 1900 || y > 2200 || mo < 1 || mo > 12 || d < 1 || d > kDays[mo - 1]) return false;
  if (mo == 2 && d == 29) {
    bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    if (!leap) return false;
  }
  return h >= 0 && h < 24 && mi >= 0 && mi < 60 && sec >= 0 && sec < 60;
}

std::optional<UnixSeconds> compose(int y, int mo, int d, int h, int mi, int sec, int offset_min) {
  if (!valid_civil(y, mo, d, h, mi, sec)) return std::nullopt;
  std::int64_t days = days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d));
  return days * kSecondsPerDay + h * 3600 + mi * 60 + sec - std::int64_t{offset_min} * 60;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::int64_t days_from_civil(int year, unsigned month, unsigned day) {
  // Howard Hinnant's algorithm.
  year -= month <= 2;
  const std::int64_t era = (year >= 0 ? year : year - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(year - era * 400);
  const unsigned doy = (153 * (month + (month > 2 ? -3 : 9)) + 2) / 5 + day - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::optional<UnixSeconds> parse_iso8601_utc(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.back() == 'Z') text.remove_suffix(1);
  if (text.size() != 19 || text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') ||
      text[13] != ':' || text[16] != ':') {
    return std::nullopt;
  }
  int y, mo, d, h, mi, s;
  if (!read_int(text, 0, 4, y) || !read_int(text, 5, 2, mo) || !read_int(text, 8, 2, d) ||
      !read_int(text, 11, 2, h) || !read_int(text, 14, 2, mi) || !read_int(text, 17, 2, s)) {
    return std::nullopt;
  }
  return compose(y, mo, d, h, mi, s, 0);
}

std::optional<UnixSeconds> parse_local_datetime(std::string_view text, int utc_offset_minutes) {
  auto utc = parse_iso8601_utc(text);
  if (!utc) return std::nullopt;
  return *utc - std::int64_t{utc_offset_minutes} * 60;
}

std::optional<UnixSeconds> parse_us_datetime_ampm(std::string_view text, int utc_offset_minutes) {
  text = trim(text);
  // MM/DD/YYYY HH:MM:SS AM
  if (text.size() != 22 || text[2] != '/' || text[5] != '/' || text[10] != ' ' || text[13] != ':' ||
      text[16] != ':' || text[19] != ' ') {
    return std::nullopt;
  }
  int mo, d, y, h, mi, s;
  if (!read_int(text, 0, 2, mo) || !read_int(text, 3, 2, d) || !read_int(text, 6, 4, y) ||
      !read_int(text, 11, 2, h) || !read_int(text, 14, 2, mi) || !read_int(text, 17, 2, s)) {
    return std::nullopt;
  }
  std::string_view ampm = text.substr(20, 2);
  if (h < 1 || h > 12) return std::nullopt;
  if (ampm == "AM") {
    if (h == 12) h = 0;
  } else if (ampm == "PM") {
    if (h != 12) h += 12;
  } else {
    return std::nullopt;
  }
  return compose(y, mo, d, h, mi, s, utc_offset_minutes);
}

std::string format_iso8601_utc(UnixSeconds t) {
  std::int64_t days = floor_div(t, kSecondsPerDay);
  std::int64_t secs = t - days * kSecondsPerDay;
  // civil_from_days
  days += 719468;
  const std::int64_t era = (days >= 0 ? days : days - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(days - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400 + (m <= 2);
  char buf[80];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<long long>(y), m, d,
                static_cast<long long>(secs / 3600), static_cast<long long>((secs / 60) % 60),
                static_cast<long long>(secs % 60));
  return buf;
}

int day_of_week(UnixSeconds t, int utc_offset_minutes) {
  std::int64_t local = t + std::int64_t{utc_offset_minutes} * 60;
  std::int64_t days = floor_div(local, kSecondsPerDay);
  // 1970-01-01 was a Thursday (index 3 with Monday = 0).
  return static_cast<int>(((days + 3) % 7 + 7) % 7);
}

int minutes_into_day(UnixSeconds t, int utc_offset_minutes) {
  std::int64_t local = t + std::int64_t{utc_offset_minutes} * 60;
  std::int64_t secs = local - floor_div(local, kSecondsPerDay) * kSecondsPerDay;
  return static_cast<int>(secs / 60);
}

UnixSeconds local_midnight(UnixSeconds t, int utc_offset_minutes) {
  std::int64_t offset = std::int64_t{utc_offset_minutes} * 60;
  std::int64_t local = t + offset;
  return floor_div(local, kSecondsPerDay) * kSecondsPerDay - offset;
}

}  // namespace xregion
