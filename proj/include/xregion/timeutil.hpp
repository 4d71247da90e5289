#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace xregion {

/// Seconds since the Unix epoch, UTC.
using UnixSeconds = std::int64_t;

/// Days since 1970-01-01 for a proleptic Gregorian civil date.
std::int64_t days_from_civil(int year, unsigned month, unsigned day);

/// Parses "YYYY-MM-DDTHH:MM:SSZ" (also accepts a space separator and a missing Z).
std::optional<UnixSeconds> parse_iso8601_utc(std::string_view text);

/// "YYYY-MM-DD HH:MM:SS" in local time shifted by utc_offset_minutes.
std::optional<UnixSeconds> parse_local_datetime(std::string_view text, int utc_offset_minutes);

/// "MM/DD/YYYY HH:MM:SS AM" (Chicago portal export) in local time.
std::optional<UnixSeconds> parse_us_datetime_ampm(std::string_view text, int utc_offset_minutes);

std::string format_iso8601_utc(UnixSeconds t);

/// Day of week with 0 = Monday, for a local time offset.
int day_of_week(UnixSeconds t, int utc_offset_minutes);

/// Minutes elapsed since local midnight.
int minutes_into_day(UnixSeconds t, int utc_offset_minutes);

/// UTC instant of local midnight of the local day containing t.
UnixSeconds local_midnight(UnixSeconds t, int utc_offset_minutes);

}  // namespace xregion
