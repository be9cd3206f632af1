#pragma once

#include "hsnorm/pssm.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hsnorm {

struct BenchRow {
  int tokens = 0;            // M
  double wall_ms = 0.0;      // best of the timed repeats
  long peak_rss_kb = 0;      // process high-water mark after the run
  bool out_of_memory = false;
};

struct BenchOptions {
  PssmConfig chain;  // E, depth and block type of the measured chain
  int repeats = 3;
  std::uint64_t seed = 0;
};

// Forward passes of the block chain at each token count, ascending. An
// allocation failure records an OOM row and stops the sweep.
std::vector<BenchRow> bench_scaling(const std::vector<int>& lengths, const BenchOptions& options = {});

// Least-squares slope of log(wall_ms) against log(M) over the completed rows.
std::optional<double> loglog_slope(const std::vector<BenchRow>& rows);

std::string bench_csv(const std::vector<BenchRow>& rows);

// VmHWM of this process in kB, or -1 when unavailable.
long peak_rss_kb();

}  // namespace hsnorm
