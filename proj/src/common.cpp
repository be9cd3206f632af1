#include "hsnorm/common.hpp"

#include <atomic>
#include <iostream>

namespace hsnorm {

namespace {
std::atomic<bool> g_quiet{false};
}

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::consistency: return "consistency";
    case ErrorKind::validation: return "validation";
    case ErrorKind::degenerate_patch: return "degenerate_patch";
    case ErrorKind::shape: return "shape";
    case ErrorKind::config: return "config";
    case ErrorKind::dataset_missing: return "dataset_missing";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

void log_info(const std::string& message) {
  if (!g_quiet) std::clog << "[info] " << message << '\n';
}

void log_warn(const std::string& message) {
  if (!g_quiet) std::clog << "[warn] " << message << '\n';
}

void set_log_quiet(bool quiet) { g_quiet = quiet; }

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace hsnorm
