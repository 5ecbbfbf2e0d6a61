#include "leakaudit/report.hpp"

#include <fmt/format.h>

#include <cstdio>
#include <set>

#include "leakaudit/error.hpp"

namespace leakaudit {
namespace {

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t to_count(const std::string& field) { return static_cast<std::size_t>(std::stoull(field)); }

// Maps header names to column positions and checks every expected column is present.
std::map<std::string, std::size_t> header_index(const CsvRow& header, std::initializer_list<const char*> required) {
  std::map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < header.size(); ++i) idx[header[i]] = i;
  for (const char* name : required) {
    if (!idx.contains(name)) throw Error(ErrorCode::MalformedRecord, std::string("CSV lacks column '") + name + "'");
  }
  return idx;
}

std::vector<CsvRow> checked_rows(std::string_view csv) {
  auto rows = parse_csv(csv);
  if (rows.empty()) throw Error(ErrorCode::MalformedRecord, "CSV has no header");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) {
      throw Error(ErrorCode::MalformedRecord, "CSV row " + std::to_string(i + 1) + " has the wrong width");
    }
  }
  return rows;
}

std::string pct_with_counts(const Rate& r) {
  return fmt::format("{}% ({}/{})", r.percent(), r.numerator, r.denominator);
}

}  // namespace

std::string write_csv(std::span<const CsvRow> rows) {
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i > 0) out += ',';
      const auto& f = row[i];
      if (f.find_first_of(",\"\n\r") == std::string::npos) {
        out += f;
      } else {
        out += '"';
        for (char c : f) {
          if (c == '"') out += '"';
          out += c;
        }
        out += '"';
      }
    }
    out += '\n';
  }
  return out;
}

std::vector<CsvRow> parse_csv(std::string_view text) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool quoted = false;
  bool any = false;  // current row has content
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw Error(ErrorCode::MalformedRecord, "unterminated quoted CSV field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

void ReportBundle::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "report.txt", text);
  for (const auto& [name, contents] : csv) write_file_atomic(dir / name, contents);
}

ReportBundle render_report(const ReportInputs& in) {
  ReportBundle bundle;
  std::string& t = bundle.text;
  const auto profiles = leakage_profiles(in.records, in.universe);

  // Leakage profile by engine.
  t += "LEAKAGE PROFILE\n";
  const std::string label_fmt = "{:<40}";
  t += fmt::format(fmt::runtime(label_fmt), "Metric");
  for (const auto& [engine, _] : profiles) t += fmt::format("{:<22}", to_string(engine));
  t += "\n";
  auto row = [&](std::string_view label, auto&& cell) {
    t += fmt::format(fmt::runtime(label_fmt), label);
    for (const auto& [_, p] : profiles) t += fmt::format("{:<22}", cell(p));
    t += "\n";
  };
  if (!profiles.empty()) {
    row("Questions evaluated", [](const LeakageProfile& p) { return std::to_string(p.questions_total); });
    row("Unusable questions (no judged URL)", [](const LeakageProfile& p) { return std::to_string(p.questions_unusable); });
    row("URLs judged", [](const LeakageProfile& p) { return std::to_string(p.urls_post_cutoff.denominator); });
    row("URLs with post-cutoff info", [](const LeakageProfile& p) {
      return fmt::format("{} ({}%)", p.urls_post_cutoff.numerator, p.urls_post_cutoff.percent());
    });
    row("Questions with a URL scored >= 1", [](const LeakageProfile& p) { return p.frac_ge1.percent() + "%"; });
    row("Questions with a URL scored >= 2", [](const LeakageProfile& p) { return p.frac_ge2.percent() + "%"; });
    row("Questions with a URL scored >= 3", [](const LeakageProfile& p) { return p.frac_ge3.percent() + "%"; });
    row("Questions with a URL scored = 4", [](const LeakageProfile& p) { return p.frac_eq4.percent() + "%"; });
  }
  t += "Unusable questions:";
  if (profiles.empty()) t += " none";
  for (const auto& [engine, p] : profiles) {
    t += fmt::format(" {} {}{}", to_string(engine), p.questions_unusable, engine == profiles.rbegin()->first ? "" : ",");
  }
  t += " (excluded from question-level fractions)\n";

  std::vector<CsvRow> profile_csv{{"engine", "urls_total", "urls_post_cutoff", "pct_post_cutoff", "questions_total",
                                   "questions_unusable", "questions_ge1", "questions_ge2", "questions_ge3",
                                   "questions_eq4", "pct_ge1", "pct_ge2", "pct_ge3", "pct_eq4"}};
  for (const auto& [engine, p] : profiles) {
    profile_csv.push_back({std::string(to_string(engine)), std::to_string(p.urls_post_cutoff.denominator),
                           std::to_string(p.urls_post_cutoff.numerator), p.urls_post_cutoff.percent(),
                           std::to_string(p.questions_total), std::to_string(p.questions_unusable),
                           std::to_string(p.frac_ge1.numerator), std::to_string(p.frac_ge2.numerator),
                           std::to_string(p.frac_ge3.numerator), std::to_string(p.frac_eq4.numerator),
                           p.frac_ge1.percent(), p.frac_ge2.percent(), p.frac_ge3.percent(), p.frac_eq4.percent()});
  }
  bundle.csv["leakage_profile.csv"] = write_csv(profile_csv);

  // Post-cutoff rate by cutoff year.
  const auto years = per_year_rates(in.records);
  std::set<int> year_set;
  for (const auto& y : years) year_set.insert(y.year);
  t += "\nPOST-CUTOFF RATE BY CUTOFF YEAR\n";
  t += fmt::format("{:<8}", "Year");
  for (const auto& [engine, _] : profiles) t += fmt::format("{:<26}", to_string(engine));
  t += "\n";
  for (int year : year_set) {
    t += fmt::format("{:<8}", year);
    for (const auto& [engine, _] : profiles) {
      std::string cell = "--";
      for (const auto& y : years) {
        if (y.year == year && y.engine == engine) cell = pct_with_counts(y.rate);
      }
      t += fmt::format("{:<26}", cell);
    }
    t += "\n";
  }
  if (!profiles.empty()) {
    t += fmt::format("{:<8}", "Total");
    for (const auto& [_, p] : profiles) t += fmt::format("{:<26}", pct_with_counts(p.urls_post_cutoff));
    t += "\n";
  }
  std::vector<CsvRow> year_csv{{"year", "engine", "flagged", "total", "pct"}};
  for (const auto& y : years) {
    year_csv.push_back({std::to_string(y.year), std::string(to_string(y.engine)), std::to_string(y.rate.numerator),
                        std::to_string(y.rate.denominator), y.rate.percent()});
  }
  bundle.csv["per_year.csv"] = write_csv(year_csv);

  // Forecast conditions.
  t += "\nFORECAST CONDITIONS\n";
  t += fmt::format("{:<16}{:<11}{:<10}{:<13}{:<12}{}\n", "Condition", "Questions", "Failures", "Avg sources",
                   "Mean Brier", "Median Brier");
  std::vector<CsvRow> forecast_csv{{"condition", "n", "failures", "avg_sources", "mean_brier", "median_brier",
                                    "avg_sources_display", "mean_brier_display", "median_brier_display"}};
  for (const auto& s : in.forecast) {
    const bool none = s.condition == ConditionName::NoRetrieval;
    const std::string sources = none ? "--" : format_fixed(s.avg_sources, 1);
    const std::string mean_b = s.n ? format_fixed(s.mean_brier, 3) : "--";
    const std::string median_b = s.n ? format_fixed(s.median_brier, 3) : "--";
    t += fmt::format("{:<16}{:<11}{:<10}{:<13}{:<12}{}\n", to_string(s.condition), s.n, s.failures, sources, mean_b,
                     median_b);
    forecast_csv.push_back({std::string(to_string(s.condition)), std::to_string(s.n), std::to_string(s.failures),
                            exact(s.avg_sources), exact(s.mean_brier), exact(s.median_brier), sources, mean_b,
                            median_b});
  }
  bundle.csv["forecast_summary.csv"] = write_csv(forecast_csv);

  if (in.agreement) {
    const auto& a = *in.agreement;
    t += "\nHUMAN-JUDGE AGREEMENT\n";
    t += fmt::format("Documents                      {}\n", a.n);
    t += fmt::format("Exact accuracy (0/1 merged)    {}%\n", format_fixed(100.0 * a.exact_accuracy_merged01, 1));
    t += fmt::format("Quadratic weighted kappa       {}\n", a.qwk ? format_fixed(*a.qwk, 2) : "undefined");
    for (int c = 0; c < kNumScores; ++c) {
      const auto& f = a.f1_per_class[c];
      t += fmt::format("F1 score {}                     {}\n", c, f.degenerate ? "undefined" : format_fixed(f.f1, 2));
    }
    t += "Confusion matrix (rows human, columns judge)\n";
    for (int i = 0; i < kNumScores; ++i) {
      t += fmt::format("  {}", i);
      for (int j = 0; j < kNumScores; ++j) t += fmt::format("{:>6}", a.confusion[i][j]);
      t += "\n";
    }
    std::vector<CsvRow> agreement_csv{{"metric", "value"}};
    agreement_csv.push_back({"n", std::to_string(a.n)});
    agreement_csv.push_back({"exact_accuracy_merged01", exact(a.exact_accuracy_merged01)});
    agreement_csv.push_back({"qwk", a.qwk ? exact(*a.qwk) : ""});
    for (int c = 0; c < kNumScores; ++c) {
      agreement_csv.push_back({"f1_" + std::to_string(c), exact(a.f1_per_class[c].f1)});
    }
    bundle.csv["agreement.csv"] = write_csv(agreement_csv);
  }
  return bundle;
}

std::vector<LeakageProfile> profiles_from_csv(std::string_view csv) {
  const auto rows = checked_rows(csv);
  const auto idx = header_index(rows[0], {"engine", "urls_total", "urls_post_cutoff", "questions_total",
                                          "questions_unusable", "questions_ge1", "questions_ge2", "questions_ge3",
                                          "questions_eq4"});
  std::vector<LeakageProfile> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    LeakageProfile p;
    p.engine = engine_from_string(r[idx.at("engine")]);
    p.urls_post_cutoff = Rate{to_count(r[idx.at("urls_post_cutoff")]), to_count(r[idx.at("urls_total")])};
    p.questions_total = to_count(r[idx.at("questions_total")]);
    p.questions_unusable = to_count(r[idx.at("questions_unusable")]);
    p.frac_ge1 = Rate{to_count(r[idx.at("questions_ge1")]), p.questions_total};
    p.frac_ge2 = Rate{to_count(r[idx.at("questions_ge2")]), p.questions_total};
    p.frac_ge3 = Rate{to_count(r[idx.at("questions_ge3")]), p.questions_total};
    p.frac_eq4 = Rate{to_count(r[idx.at("questions_eq4")]), p.questions_total};
    out.push_back(p);
  }
  return out;
}

std::vector<YearRate> year_rates_from_csv(std::string_view csv) {
  const auto rows = checked_rows(csv);
  const auto idx = header_index(rows[0], {"year", "engine", "flagged", "total"});
  std::vector<YearRate> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out.push_back(YearRate{std::stoi(r[idx.at("year")]), engine_from_string(r[idx.at("engine")]),
                           Rate{to_count(r[idx.at("flagged")]), to_count(r[idx.at("total")])}});
  }
  return out;
}

std::vector<ConditionSummary> forecast_summaries_from_csv(std::string_view csv) {
  const auto rows = checked_rows(csv);
  const auto idx = header_index(rows[0], {"condition", "n", "failures", "avg_sources", "mean_brier", "median_brier"});
  std::vector<ConditionSummary> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    ConditionSummary s;
    s.condition = condition_from_string(r[idx.at("condition")]);
    s.n = to_count(r[idx.at("n")]);
    s.failures = to_count(r[idx.at("failures")]);
    s.avg_sources = std::stod(r[idx.at("avg_sources")]);
    s.mean_brier = std::stod(r[idx.at("mean_brier")]);
    s.median_brier = std::stod(r[idx.at("median_brier")]);
    out.push_back(s);
  }
  return out;
}

}  // namespace leakaudit
