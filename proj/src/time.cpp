#include "leakaudit/time.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>

#include "leakaudit/error.hpp"

namespace leakaudit {
namespace {

int read_digits(std::string_view text, std::size_t pos, std::size_t count, std::string_view what) {
  if (pos + count > text.size()) {
    throw Error(ErrorCode::MalformedRecord, "truncated " + std::string(what) + " in '" + std::string(text) + "'");
  }
  int value = 0;
  for (std::size_t i = pos; i < pos + count; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
      throw Error(ErrorCode::MalformedRecord, "expected digit in " + std::string(what) + " of '" + std::string(text) + "'");
    }
    value = value * 10 + (text[i] - '0');
  }
  return value;
}

void expect_char(std::string_view text, std::size_t pos, char c) {
  if (pos >= text.size() || text[pos] != c) {
    throw Error(ErrorCode::MalformedRecord, std::string("expected '") + c + "' at offset " + std::to_string(pos) +
                                                " of '" + std::string(text) + "'");
  }
}

Date checked_date(int y, int m, int d, std::string_view text) {
  Date date{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
            std::chrono::day{static_cast<unsigned>(d)}};
  if (!date.ok()) {
    throw Error(ErrorCode::MalformedRecord, "invalid calendar date '" + std::string(text) + "'");
  }
  return date;
}

}  // namespace

Date parse_date(std::string_view text) {
  if (text.size() != 10) {
    throw Error(ErrorCode::MalformedRecord, "expected YYYY-MM-DD, got '" + std::string(text) + "'");
  }
  const int y = read_digits(text, 0, 4, "year");
  expect_char(text, 4, '-');
  const int m = read_digits(text, 5, 2, "month");
  expect_char(text, 7, '-');
  const int d = read_digits(text, 8, 2, "day");
  return checked_date(y, m, d, text);
}

Timestamp parse_timestamp(std::string_view text) {
  if (text.size() < 20) {
    throw Error(ErrorCode::MalformedRecord, "timestamp too short: '" + std::string(text) + "'");
  }
  const Date date = parse_date(text.substr(0, 10));
  if (text[10] != 'T' && text[10] != 't' && text[10] != ' ') {
    throw Error(ErrorCode::MalformedRecord, "expected 'T' separator in '" + std::string(text) + "'");
  }
  const int hh = read_digits(text, 11, 2, "hour");
  expect_char(text, 13, ':');
  const int mm = read_digits(text, 14, 2, "minute");
  expect_char(text, 16, ':');
  const int ss = read_digits(text, 17, 2, "second");
  if (hh > 23 || mm > 59 || ss > 60) {
    throw Error(ErrorCode::MalformedRecord, "time of day out of range in '" + std::string(text) + "'");
  }
  std::size_t pos = 19;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
  }
  int offset_seconds = 0;
  if (pos < text.size() && (text[pos] == 'Z' || text[pos] == 'z')) {
    ++pos;
  } else if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) {
    const int sign = text[pos] == '+' ? 1 : -1;
    const int oh = read_digits(text, pos + 1, 2, "offset hour");
    expect_char(text, pos + 3, ':');
    const int om = read_digits(text, pos + 4, 2, "offset minute");
    offset_seconds = sign * (oh * 3600 + om * 60);
    pos += 6;
  } else {
    throw Error(ErrorCode::MalformedRecord, "timestamp lacks a UTC designator: '" + std::string(text) + "'");
  }
  if (pos != text.size()) {
    throw Error(ErrorCode::MalformedRecord, "trailing characters in timestamp '" + std::string(text) + "'");
  }
  const auto local = std::chrono::sys_days{date} + std::chrono::hours{hh} + std::chrono::minutes{mm} +
                     std::chrono::seconds{ss};
  return std::chrono::time_point_cast<std::chrono::seconds>(local - std::chrono::seconds{offset_seconds});
}

std::string format_date(Date date) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
  return buf;
}

Date utc_date(Timestamp ts) { return Date{std::chrono::floor<std::chrono::days>(ts)}; }

std::string format_timestamp(Timestamp ts) {
  const auto day = std::chrono::floor<std::chrono::days>(ts);
  const std::chrono::hh_mm_ss tod{ts - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", format_date(Date{day}).c_str(),
                static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                static_cast<int>(tod.seconds().count()));
  return buf;
}

Clock system_clock() {
  return [] { return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()); };
}

Clock fixed_clock(Timestamp ts) {
  return [ts] { return ts; };
}

}  // namespace leakaudit
