#pragma once

#include <string>
#include <vector>

#include "bilevel/types.hpp"

namespace bilevel {

/// One per-iteration record of an outer run.
struct TraceRow {
  int t = 0;
  double x_norm = 0.0;
  double fval = std::numeric_limits<double>::quiet_NaN();  // optional
  double grad_norm = std::numeric_limits<double>::quiet_NaN();
  double stat_measure = std::numeric_limits<double>::quiet_NaN();
  OracleCounter counters;  // cumulative at this iteration
  double wall_ms = 0.0;    // cumulative since run start
};

struct RunTrace {
  std::vector<TraceRow> rows;
  Vec final_x;
  std::string termination = "completed";
};

/// CSV schema (exact column order, header mandatory, UTF-8, '.' decimal):
///   t, fval, grad_norm, stat_measure, f_evals, f_grads, g_evals, g_grads, wall_ms
/// Doubles are written with 17 significant digits so files round-trip
/// bit-identically through read_trace_csv.  zero_wall drops the (wall-clock,
/// hence nondeterministic) timing column to keep reruns byte-identical.
std::string trace_to_csv(const RunTrace& trace, bool zero_wall = true);
void write_trace_csv(const RunTrace& trace, const std::string& path, bool zero_wall = true);
RunTrace read_trace_csv(const std::string& path);
RunTrace parse_trace_csv(const std::string& text);

/// Format a double as the shortest representation that parses back exactly.
std::string format_double(double v);

}  // namespace bilevel
