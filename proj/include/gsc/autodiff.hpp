#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "gsc/tensor.hpp"

namespace gsc {

// Handle into a Tape. Valid only for the tape that produced it.
struct Value {
  int id = -1;
};

// Reverse-mode tape. Nodes are recorded in execution order, which is a
// topological order by construction; backward walks it in exact reverse.
//
// A tape is single-threaded. Distinct tapes over shared read-only inputs may
// run concurrently; gradient accumulation across tapes is the caller's job.
class Tape {
 public:
  Value leaf(Tensor data);

  // y = a + b, same shape
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  // Hadamard product
  Value mul(Value a, Value b);
  Value scale(Value a, double c);
  Value add_const(Value a, double c);
  Value neg(Value a) { return scale(a, -1.0); }

  // y[n x m] = a[n x k] . b[k x m]
  Value matmul(Value a, Value b);
  // y[n x out] = x[n x in] . w[in x out] + b (b is 1 x out, broadcast per row)
  Value affine(Value weights, Value bias, Value x);
  // Edge-encoder layer 1: each item's input is a three-hot row; the matmul
  // reduces to summing three rows of w. rows[i] holds the three hot indices.
  Value threehot_affine(Value weights, Value bias,
                        const std::vector<std::array<int, 3>>& rows);

  Value sigmoid(Value a);
  Value relu(Value a);
  Value tanh_(Value a);
  Value exp_(Value a);
  Value log_(Value a);
  Value sqrt_(Value a);
  Value square(Value a);
  Value softplus(Value a);  // log(1 + e^x), stable
  Value clamp(Value a, double lo, double hi);

  Value sum(Value a);   // scalar
  Value mean(Value a);  // scalar
  Value pick(Value a, int flat_index);
  Value concat_scalars(const std::vector<Value>& scalars);  // 1 x C
  Value reshape(Value a, int rows, int cols);

  // out[e] = edge_vals[e] + node_vals[src_index[e]]
  Value gather_add(Value edge_vals, Value node_vals,
                   const std::vector<int>& src_index);
  // out[v] = sum over e with dst_index[e] == v of edge_vals[e]; nodes with no
  // incoming edge get exactly 0. Accumulation follows edge index order.
  Value scatter_add(Value edge_vals, const std::vector<int>& dst_index,
                    int node_count);

  // loss = -log softmax(scores)[label], max-subtracted
  Value softmax_cross_entropy(Value scores, int label);

  // Seeds d(loss)/d(loss) = 1, sweeps the tape in reverse order, then adds
  // the sweep's result into every node's persistent grad. Repeated calls
  // accumulate.
  void backward(Value loss);

  void zero_grads();

  const Tensor& data(Value v) const { return nodes_[v.id].data; }
  const Tensor& grad(Value v) const { return nodes_[v.id].grad; }
  double value(Value v) const { return nodes_[v.id].data.v[0]; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor data;
    Tensor grad;
    // Propagates the upstream gradient into the scratch buffers of parents.
    std::function<void(Tape&, const Tensor&)> back;
  };

  Value push(Tensor data, std::function<void(Tape&, const Tensor&)> back);
  Tensor& scratch(int id) { return scratch_[id]; }
  void check_same_shape(Value a, Value b, const char* op) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> scratch_;
};

enum class FdMode { central, forward };

struct DiffProblem {
  Value loss;
  std::vector<Value> params;  // concatenated sizes must cover the x vector
};

using ProblemBuilder =
    std::function<DiffProblem(Tape&, std::span<const double>)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_coord = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Compares the backward-pass gradient of the builder's loss against finite
// differences, coordinate by coordinate. Relative error uses an absolute
// floor of 1e-8 in the denominator.
GradCheckReport grad_check(const ProblemBuilder& build,
                           std::vector<double> x, double step,
                           FdMode mode = FdMode::central);

// Same comparison for externally computed values and gradients.
GradCheckReport grad_check_values(std::span<const double> analytic,
                                  std::span<const double> numeric);

}  // namespace gsc
