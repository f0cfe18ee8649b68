#pragma once

#include <map>
#include <string>

#include <Eigen/Dense>

namespace graphamp {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Named side matrices attached to an update function; rows follow the
// function's output rows.
using SideData = std::map<std::string, Mat>;

struct Shape {
  long rows = 0;
  long cols = 0;
  bool operator==(const Shape&) const = default;
};

inline Shape shape_of(const Mat& m) { return {m.rows(), m.cols()}; }

inline std::string to_string(Shape s) { return std::to_string(s.rows) + "x" + std::to_string(s.cols); }

}  // namespace graphamp
