#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "classify/dataset.hpp"
#include "classify/error.hpp"
#include "classify/rng.hpp"

namespace test {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline classify::Dataset breast_cancer() {
  return classify::parse_csv(read_file(std::string(CLASSIFY_DATA_DIR) + "/breast_cancer.csv"));
}

/// Runs `fn` and returns the error code it throws, or nullopt.
template <class F>
std::optional<classify::ErrorCode> error_of(F&& fn) {
  try {
    fn();
  } catch (const classify::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

/// Two Gaussian blobs, `d` numeric features, labels balanced unless
/// `positive_rate` says otherwise.
inline std::string blobs_csv(std::size_t n, std::size_t d, double separation, std::uint64_t seed,
                             double positive_rate = 0.5) {
  classify::Rng rng(seed);
  std::ostringstream out;
  out << "index";
  for (std::size_t j = 0; j < d; ++j) out << ",x" << j;
  out << ",class\n";
  for (std::size_t i = 0; i < n; ++i) {
    const int y = rng.uniform() < positive_rate ? 1 : 0;
    out << i + 1;
    for (std::size_t j = 0; j < d; ++j) {
      const double shift = j < 2 ? (y ? separation : 0.0) : 0.0;
      out << ',' << rng.normal() + shift;
    }
    out << ',' << y << '\n';
  }
  return out.str();
}

}  // namespace test

namespace test {

/// Two uniform features, a curved class boundary and 10% flipped labels:
/// one neighbor memorizes the noise, a dozen or so average it out.
inline std::string noisy_knn_csv(std::size_t n, std::uint64_t seed) {
  classify::Rng rng(seed);
  std::ostringstream out;
  out << "index,x0,x1,class\n";
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
    int y = b > 0.5 * std::sin(3.0 * a) ? 1 : 0;
    if (rng.uniform() < 0.1) y = 1 - y;
    out << i + 1 << ',' << a << ',' << b << ',' << y << '\n';
  }
  return out.str();
}

}  // namespace test
