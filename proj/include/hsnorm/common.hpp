#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hsnorm {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
// Row-per-point coordinate block.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using MatX = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using NeighborTable = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ErrorKind {
  parse,
  consistency,
  validation,
  degenerate_patch,
  shape,
  config,
  dataset_missing,
  numerical,
  unsupported,
  io,
};

std::string_view to_string(ErrorKind kind);

// Every recoverable failure in the library is reported through this type; the
// kind is what the CLI maps onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

void log_info(const std::string& message);
void log_warn(const std::string& message);
void set_log_quiet(bool quiet);

// Deterministic 64-bit mixing used for seeding independent random substreams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t hash_string(std::string_view s);

}  // namespace hsnorm
