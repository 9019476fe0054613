#pragma once

#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "gms/error.hpp"
#include "gms/io.hpp"
#include "gms/sampling.hpp"

namespace gms {

/// Runs `command` once for a whole design. Inputs go to its standard input as
/// one whitespace-separated row per line; it must print one output row per
/// input row (whitespace-separated values) on standard output.
inline std::vector<std::vector<double>> run_line_protocol(const std::string& command, std::span<const double> rows,
                                                          std::size_t cols, std::size_t values_per_row) {
  const std::size_t n = cols == 0 ? 0 : rows.size() / cols;
  char path[] = "/tmp/gms_inputs_XXXXXX";
  const int fd = mkstemp(path);
  if (fd < 0) throw EvaluationError(0, "cannot create a temporary input file");
  close(fd);
  struct Cleanup {
    const char* p;
    ~Cleanup() { std::remove(p); }
  } cleanup{path};
  {
    std::ofstream out(path);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < cols; ++j) out << (j ? " " : "") << format_double(rows[i * cols + j]);
      out << '\n';
    }
    if (!out) throw EvaluationError(0, "cannot write the temporary input file");
  }
  const std::string cmd = command + " < " + path;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw EvaluationError(0, "cannot start external command '" + command + "'");
  std::vector<std::vector<double>> result;
  std::string line;
  char buf[4096];
  std::string pending;
  auto flush_line = [&](const std::string& l) {
    std::istringstream is(l);
    std::vector<double> vals;
    std::string tok;
    while (is >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') {
        vals.clear();
        vals.push_back(std::nan(""));
        vals.resize(values_per_row + 1);  // forces the size check below to fail
        break;
      }
      vals.push_back(v);
    }
    if (vals.size() != values_per_row)
      throw EvaluationError(result.size(), "external command printed " + std::to_string(vals.size()) +
                                               " values where " + std::to_string(values_per_row) + " were expected");
    result.push_back(std::move(vals));
  };
  try {
    while (std::fgets(buf, sizeof buf, pipe)) {
      pending += buf;
      if (!pending.empty() && pending.back() == '\n') {
        pending.pop_back();
        if (!pending.empty()) flush_line(pending);
        pending.clear();
      }
    }
    if (!pending.empty()) flush_line(pending);
  } catch (...) {
    pclose(pipe);
    throw;
  }
  const int status = pclose(pipe);
  if (status != 0) {
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    throw EvaluationError(result.size(), "external command exited with status " + std::to_string(code));
  }
  if (result.size() != n)
    throw EvaluationError(result.size(), "external command returned " + std::to_string(result.size()) + " rows for " +
                                             std::to_string(n) + " inputs");
  return result;
}

/// External model with scalar outputs.
inline InputModel<double> external_scalar_model(std::string command, std::vector<Distribution> inputs,
                                                std::vector<std::string> names = {}) {
  InputModel<double> m;
  m.name = "external";
  m.coordinates = std::move(inputs);
  m.input_names = std::move(names);
  m.batch = [command](std::span<const double> rows, std::size_t cols) {
    auto raw = run_line_protocol(command, rows, cols, 1);
    std::vector<double> out;
    out.reserve(raw.size());
    for (const auto& r : raw) out.push_back(r[0]);
    return out;
  };
  return m;
}

/// External model with vector (or flattened field) outputs of fixed length.
inline InputModel<std::vector<double>> external_vector_model(std::string command, std::vector<Distribution> inputs,
                                                             std::size_t values_per_row,
                                                             std::vector<std::string> names = {}) {
  InputModel<std::vector<double>> m;
  m.name = "external";
  m.coordinates = std::move(inputs);
  m.input_names = std::move(names);
  m.batch = [command, values_per_row](std::span<const double> rows, std::size_t cols) {
    return run_line_protocol(command, rows, cols, values_per_row);
  };
  return m;
}

}  // namespace gms
