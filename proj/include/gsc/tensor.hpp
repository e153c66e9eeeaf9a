#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace gsc {

// Dense row-major matrix of 64-bit reals. Rank <= 2 everywhere; vectors are
// stored as 1 x n.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0)
      : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}

  static Tensor scalar(double x) {
    Tensor t(1, 1);
    t.v[0] = x;
    return t;
  }

  static Tensor row(std::vector<double> vals) {
    Tensor t;
    t.rows = 1;
    t.cols = static_cast<int>(vals.size());
    t.v = std::move(vals);
    return t;
  }

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const {
    return v[static_cast<std::size_t>(r) * cols + c];
  }

  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }

  int size() const { return rows * cols; }

  bool same_shape(const Tensor& o) const {
    return rows == o.rows && cols == o.cols;
  }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

inline std::string shape_str(const Tensor& t) {
  return "[" + std::to_string(t.rows) + " x " + std::to_string(t.cols) + "]";
}

}  // namespace gsc
