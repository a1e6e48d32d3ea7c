#pragma once

// Results CSV written by `run` and read back by `report`.
//
//   record,session,seen_classes,test_samples,correct,accuracy,a_last,a_inc
//   session,0,2,80,79,98.750000,,
//   ...
//   summary,,,,,,71.250000,80.312500
//
// A run that stops early ends with a "failed,<session>,,,,,," row instead
// of the summary.

#include <filesystem>
#include <string>
#include <vector>

#include "bamp/ensemble.hpp"

namespace bamp {

inline constexpr const char* kResultsHeader =
    "record,session,seen_classes,test_samples,correct,accuracy,a_last,a_inc";

std::string format_session_row(const SessionRecord& record);
std::string format_summary_row(const MetricPair& metrics);
std::string format_failure_row(std::size_t session);

struct SessionRow {
  std::size_t session = 0;
  std::size_t seen_classes = 0;
  std::size_t test_samples = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct ResultsFile {
  std::vector<SessionRow> sessions;
  MetricPair summary;
};

/// Parses and cross-checks a results file: accuracies must match their
/// counts and the summary must match the session rows (when present).
/// Throws FormatError on malformed or failed runs.
ResultsFile parse_results(const std::string& text, const std::string& name = "results");
ResultsFile read_results(const std::filesystem::path& path);

}  // namespace bamp
