#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <string_view>

namespace leakaudit {

using Timestamp = std::chrono::sys_seconds;
using Date = std::chrono::year_month_day;

// Accepts "YYYY-MM-DDTHH:MM:SS[.fff](Z|+HH:MM|-HH:MM)" and normalizes to UTC.
// Throws Error(MalformedRecord) on anything else.
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);

// "YYYY-MM-DD"
Date parse_date(std::string_view text);
std::string format_date(Date date);

Date utc_date(Timestamp ts);

using Clock = std::function<Timestamp()>;
Clock system_clock();
Clock fixed_clock(Timestamp ts);

}  // namespace leakaudit
