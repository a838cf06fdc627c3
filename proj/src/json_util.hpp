#pragma once

#include <json.hpp>

#include "classify/matrix.hpp"

namespace classify::detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

inline Matrix matrix_from_json(const nlohmann::json& doc) {
  const auto rows = doc.at("rows").get<Eigen::Index>();
  const auto cols = doc.at("cols").get<Eigen::Index>();
  const auto data = doc.at("data").get<std::vector<double>>();
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Vector vector_from_json(const nlohmann::json& doc) {
  const auto data = doc.get<std::vector<double>>();
  return Eigen::Map<const Vector>(data.data(), Eigen::Index(data.size()));
}

}  // namespace classify::detail
