#include "hsnorm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <new>
#include <random>

namespace hsnorm {

long peak_rss_kb() {
  std::ifstream in("/proc/self/status");
  std::string key;
  while (in >> key) {
    if (key == "VmHWM:") {
      long kb = -1;
      in >> kb;
      return kb;
    }
    std::getline(in, key);
  }
  return -1;
}

namespace {
// Resets the high-water mark so each row reports its own peak (Linux only).
void reset_peak_rss() {
  std::ofstream out("/proc/self/clear_refs");
  if (out) out << "5";
}
}  // namespace

std::vector<BenchRow> bench_scaling(const std::vector<int>& lengths, const BenchOptions& options) {
  if (lengths.empty()) fail(ErrorKind::config, "bench needs at least one length");
  if (!std::is_sorted(lengths.begin(), lengths.end())) fail(ErrorKind::config, "bench lengths must be ascending");
  for (int m : lengths) {
    if (m < 1) fail(ErrorKind::config, "bench lengths must be positive");
  }
  nn::ParameterStore store;
  nn::Rng rng(options.seed);
  PssmConfig cfg = options.chain;
  cfg.zero_init_output = false;  // time a chain that does real work
  const BlockChain chain(store, cfg, rng);

  std::vector<BenchRow> rows;
  for (int m : lengths) {
    BenchRow row;
    row.tokens = m;
    try {
      std::normal_distribution<double> d(0.0, 1.0);
      MatX tokens(m, cfg.encoding_dim);
      for (Eigen::Index i = 0; i < tokens.size(); ++i) tokens.data()[i] = d(rng);
      reset_peak_rss();
      double best = std::numeric_limits<double>::infinity();
      for (int r = 0; r < std::max(1, options.repeats); ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const MatX out = chain.infer(tokens);
        const auto t1 = std::chrono::steady_clock::now();
        if (!out.allFinite()) fail(ErrorKind::numerical, "bench chain produced non-finite output");
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
      row.wall_ms = best;
      row.peak_rss_kb = peak_rss_kb();
    } catch (const std::bad_alloc&) {
      row.out_of_memory = true;
      rows.push_back(row);
      log_warn("bench: out of memory at M = " + std::to_string(m) + "; skipping larger lengths");
      break;
    }
    rows.push_back(row);
  }
  return rows;
}

std::optional<double> loglog_slope(const std::vector<BenchRow>& rows) {
  std::vector<double> x, y;
  for (const auto& r : rows) {
    if (r.out_of_memory || r.wall_ms <= 0.0) continue;
    x.push_back(std::log(static_cast<double>(r.tokens)));
    y.push_back(std::log(r.wall_ms));
  }
  if (x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) return std::nullopt;
  return (n * sxy - sx * sy) / den;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = "tokens,wall_ms,peak_rss_kb,status\n";
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%d,%.3f,%ld,%s\n", r.tokens, r.wall_ms, r.peak_rss_kb,
                  r.out_of_memory ? "OOM" : "ok");
    out += buf;
  }
  return out;
}

}  // namespace hsnorm
