#include "bamp/results.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bamp/errors.hpp"

namespace bamp {

namespace {

std::string fixed(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.6f", value);
  return buffer;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

template <typename T>
T field_value(const std::string& text, const std::string& where) {
  T value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || end != text.data() + text.size()) {
    throw FormatError(where + ": bad field '" + text + "'");
  }
  return value;
}

}  // namespace

std::string format_session_row(const SessionRecord& record) {
  return "session," + std::to_string(record.session) + "," +
         std::to_string(record.seen_classes.size()) + "," + std::to_string(record.test_samples()) +
         "," + std::to_string(record.correct) + "," + fixed(record.accuracy) + ",,";
}

std::string format_summary_row(const MetricPair& metrics) {
  return "summary,,,,,," + fixed(metrics.a_last) + "," + fixed(metrics.a_inc);
}

std::string format_failure_row(std::size_t session) {
  return "failed," + std::to_string(session) + ",,,,,,";
}

ResultsFile parse_results(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) {
    throw FormatError(name + ": missing results header");
  }
  ResultsFile out;
  bool have_summary = false;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(number);
    const auto fields = split_fields(line);
    if (fields.size() != 8) throw FormatError(where + ": expected 8 fields");
    if (have_summary) throw FormatError(where + ": rows after the summary");
    if (fields[0] == "failed") {
      throw FormatError(name + ": run failed at session " + fields[1]);
    } else if (fields[0] == "session") {
      SessionRow row;
      row.session = field_value<std::size_t>(fields[1], where);
      row.seen_classes = field_value<std::size_t>(fields[2], where);
      row.test_samples = field_value<std::size_t>(fields[3], where);
      row.correct = field_value<std::size_t>(fields[4], where);
      row.accuracy = field_value<double>(fields[5], where);
      if (row.session != out.sessions.size()) throw FormatError(where + ": sessions out of order");
      if (row.correct > row.test_samples) throw FormatError(where + ": correct exceeds test samples");
      const double expected =
          row.test_samples == 0 ? 0.0
                                : 100.0 * static_cast<double>(row.correct) /
                                      static_cast<double>(row.test_samples);
      if (std::abs(expected - row.accuracy) > 5e-6) {
        throw FormatError(where + ": accuracy does not match correct / test_samples");
      }
      out.sessions.push_back(row);
    } else if (fields[0] == "summary") {
      out.summary.a_last = field_value<double>(fields[6], where);
      out.summary.a_inc = field_value<double>(fields[7], where);
      have_summary = true;
    } else {
      throw FormatError(where + ": unknown record type '" + fields[0] + "'");
    }
  }
  if (!have_summary) throw FormatError(name + ": no summary row");
  if (!out.sessions.empty()) {
    std::vector<double> accuracies;
    for (const auto& row : out.sessions) accuracies.push_back(row.accuracy);
    const MetricPair recomputed = session_metrics(accuracies);
    if (std::abs(recomputed.a_last - out.summary.a_last) > 1e-5 ||
        std::abs(recomputed.a_inc - out.summary.a_inc) > 1e-5) {
      throw FormatError(name + ": summary does not match the session rows");
    }
  }
  return out;
}

ResultsFile read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open results file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_results(text.str(), path.string());
}

}  // namespace bamp
