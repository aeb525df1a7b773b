#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace apex::harness {

struct Curve {
    std::string run;
    std::vector<std::pair<double, double>> points;  ///< (wall_clock_s, value)
};

/// Reads `column` against wall_clock_s from a metrics CSV. A directory means its eval.csv;
/// the run name is the CSV's run_id field.
Curve read_curve(const std::filesystem::path& path, const std::string& column = "mean_return");

/// One row per `step_s` of wall clock; each run's column holds its latest value at or before
/// that time, blank before its first point.
std::string aligned_table(const std::vector<Curve>& curves, double step_s, const std::string& column = "mean_return");

}  // namespace apex::harness
