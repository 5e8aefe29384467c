#pragma once

#include <string>
#include <vector>

#include "entlab/entropy_diagnostics.hpp"

namespace entlab {

/// CSV schema of an EntropyReport time series: one row per observation time,
/// one column per named quantity (paper symbols transliterated). The first
/// line carries the schema version.
extern const char* kReportSchemaVersion;

std::vector<std::string> report_columns();
std::string report_csv_header();
std::string report_csv_row(const EntropyReport& r);
void write_report_csv(const std::string& path, const std::vector<EntropyReport>& series);

}  // namespace entlab
