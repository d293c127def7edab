#include "bilevel/trace.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "bilevel/errors.hpp"

namespace bilevel {

std::string format_double(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v || (std::isnan(v) && std::isnan(std::strtod(buf, nullptr))))
      return buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trace_to_csv(const RunTrace& trace, bool zero_wall) {
  std::ostringstream out;
  out << "t,fval,grad_norm,stat_measure,f_evals,f_grads,g_evals,g_grads,wall_ms\n";
  for (const TraceRow& r : trace.rows) {
    out << r.t << ',' << format_double(r.fval) << ',' << format_double(r.grad_norm) << ','
        << format_double(r.stat_measure) << ',' << r.counters.f_evals << ',' << r.counters.f_grads
        << ',' << r.counters.g_evals << ',' << r.counters.g_grads << ','
        << format_double(zero_wall ? 0.0 : r.wall_ms) << '\n';
  }
  return out.str();
}

void write_trace_csv(const RunTrace& trace, const std::string& path, bool zero_wall) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << trace_to_csv(trace, zero_wall);
  if (!out) throw IoError("write failed: " + path);
}

RunTrace parse_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      line != "t,fval,grad_norm,stat_measure,f_evals,f_grads,g_evals,g_grads,wall_ms")
    throw IoError("trace csv: bad or missing header");
  RunTrace tr;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9) throw IoError("trace csv: wrong column count");
    TraceRow r;
    r.t = std::atoi(cells[0].c_str());
    r.fval = std::strtod(cells[1].c_str(), nullptr);
    r.grad_norm = std::strtod(cells[2].c_str(), nullptr);
    r.stat_measure = std::strtod(cells[3].c_str(), nullptr);
    r.counters.f_evals = std::atoll(cells[4].c_str());
    r.counters.f_grads = std::atoll(cells[5].c_str());
    r.counters.g_evals = std::atoll(cells[6].c_str());
    r.counters.g_grads = std::atoll(cells[7].c_str());
    r.wall_ms = std::strtod(cells[8].c_str(), nullptr);
    tr.rows.push_back(r);
  }
  return tr;
}

RunTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open trace file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_trace_csv(ss.str());
}

}  // namespace bilevel
