#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "leakaudit/forecast_harness.hpp"
#include "leakaudit/metrics_aggregation.hpp"

namespace leakaudit {

using CsvRow = std::vector<std::string>;

std::string write_csv(std::span<const CsvRow> rows);
// RFC 4180 subset: quoted fields may hold commas, quotes ("") and newlines.
std::vector<CsvRow> parse_csv(std::string_view text);

struct ReportInputs {
  std::span<const UrlJudgmentRecord> records;
  std::span<const std::int64_t> universe;          // all audited question ids (may be empty)
  std::span<const ConditionSummary> forecast;      // may be empty
  std::optional<AgreementReport> agreement;
};

struct ReportBundle {
  std::string text;
  std::map<std::string, std::string> csv;  // file name -> contents

  // Writes report.txt and every CSV into `dir`.
  void write(const std::filesystem::path& dir) const;
};

ReportBundle render_report(const ReportInputs& inputs);

// Inverse readers for the CSV files of a bundle.
std::vector<LeakageProfile> profiles_from_csv(std::string_view csv);
std::vector<YearRate> year_rates_from_csv(std::string_view csv);
std::vector<ConditionSummary> forecast_summaries_from_csv(std::string_view csv);

}  // namespace leakaudit
