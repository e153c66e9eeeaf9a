#include "gsc/autodiff.hpp"

#include <cmath>
#include <cstdlib>

#include "gsc/errors.hpp"

namespace gsc {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  // max(x, 0) + log1p(exp(-|x|))
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

Value Tape::push(Tensor data, std::function<void(Tape&, const Tensor&)> back) {
  Node n;
  n.grad = Tensor(data.rows, data.cols);
  n.data = std::move(data);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_same_shape(Value a, Value b, const char* op) const {
  const Tensor& ta = nodes_[a.id].data;
  const Tensor& tb = nodes_[b.id].data;
  if (!ta.same_shape(tb)) {
    throw shape_error(std::string(op) + ": shape mismatch " + shape_str(ta) +
                      " vs " + shape_str(tb));
  }
}

Value Tape::leaf(Tensor data) { return push(std::move(data), {}); }

Value Tape::add(Value a, Value b) {
  check_same_shape(a, b, "add");
  Tensor out = nodes_[a.id].data;
  const Tensor& tb = nodes_[b.id].data;
  for (int i = 0; i < out.size(); ++i) out.v[i] += tb.v[i];
  return push(std::move(out), [a, b](Tape& t, const Tensor& up) {
    Tensor& ga = t.scratch(a.id);
    Tensor& gb = t.scratch(b.id);
    for (int i = 0; i < up.size(); ++i) {
      ga.v[i] += up.v[i];
      gb.v[i] += up.v[i];
    }
  });
}

Value Tape::sub(Value a, Value b) {
  check_same_shape(a, b, "sub");
  Tensor out = nodes_[a.id].data;
  const Tensor& tb = nodes_[b.id].data;
  for (int i = 0; i < out.size(); ++i) out.v[i] -= tb.v[i];
  return push(std::move(out), [a, b](Tape& t, const Tensor& up) {
    Tensor& ga = t.scratch(a.id);
    Tensor& gb = t.scratch(b.id);
    for (int i = 0; i < up.size(); ++i) {
      ga.v[i] += up.v[i];
      gb.v[i] -= up.v[i];
    }
  });
}

Value Tape::mul(Value a, Value b) {
  check_same_shape(a, b, "mul");
  Tensor out = nodes_[a.id].data;
  const Tensor& tb = nodes_[b.id].data;
  for (int i = 0; i < out.size(); ++i) out.v[i] *= tb.v[i];
  return push(std::move(out), [a, b](Tape& t, const Tensor& up) {
    const Tensor& da = t.nodes_[a.id].data;
    const Tensor& db = t.nodes_[b.id].data;
    Tensor& ga = t.scratch(a.id);
    Tensor& gb = t.scratch(b.id);
    for (int i = 0; i < up.size(); ++i) {
      ga.v[i] += up.v[i] * db.v[i];
      gb.v[i] += up.v[i] * da.v[i];
    }
  });
}

Value Tape::scale(Value a, double c) {
  Tensor out = nodes_[a.id].data;
  for (double& x : out.v) x *= c;
  return push(std::move(out), [a, c](Tape& t, const Tensor& up) {
    Tensor& ga = t.scratch(a.id);
    for (int i = 0; i < up.size(); ++i) ga.v[i] += c * up.v[i];
  });
}

Value Tape::add_const(Value a, double c) {
  Tensor out = nodes_[a.id].data;
  for (double& x : out.v) x += c;
  return push(std::move(out), [a](Tape& t, const Tensor& up) {
    Tensor& ga = t.scratch(a.id);
    for (int i = 0; i < up.size(); ++i) ga.v[i] += up.v[i];
  });
}

Value Tape::matmul(Value a, Value b) {
  const Tensor& ta = nodes_[a.id].data;
  const Tensor& tb = nodes_[b.id].data;
  if (ta.cols != tb.rows) {
    throw shape_error("matmul: inner dimensions differ " + shape_str(ta) +
                      " vs " + shape_str(tb));
  }
  Tensor out(ta.rows, tb.cols);
  for (int i = 0; i < ta.rows; ++i) {
    for (int k = 0; k < ta.cols; ++k) {
      const double aik = ta.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < tb.cols; ++j) {
        out.at(i, j) += aik * tb.at(k, j);
      }
    }
  }
  return push(std::move(out), [a, b](Tape& t, const Tensor& up) {
    const Tensor& da = t.nodes_[a.id].data;
    const Tensor& db = t.nodes_[b.id].data;
    Tensor& ga = t.scratch(a.id);
    Tensor& gb = t.scratch(b.id);
    // ga += up . db^T
    for (int i = 0; i < up.rows; ++i) {
      for (int j = 0; j < up.cols; ++j) {
        const double u = up.at(i, j);
        if (u == 0.0) continue;
        for (int k = 0; k < da.cols; ++k) {
          ga.at(i, k) += u * db.at(k, j);
        }
      }
    }
    // gb += da^T . up
    for (int i = 0; i < da.rows; ++i) {
      for (int k = 0; k < da.cols; ++k) {
        const double aik = da.at(i, k);
        if (aik == 0.0) continue;
        for (int j = 0; j < up.cols; ++j) {
          gb.at(k, j) += aik * up.at(i, j);
        }
      }
    }
  });
}

Value Tape::affine(Value weights, Value bias, Value x) {
  const Tensor& w = nodes_[weights.id].data;
  const Tensor& b = nodes_[bias.id].data;
  const Tensor& tx = nodes_[x.id].data;
  if (tx.cols != w.rows || b.rows != 1 || b.cols != w.cols) {
    throw shape_error("affine: incompatible shapes w=" + shape_str(w) +
                      " b=" + shape_str(b) + " x=" + shape_str(tx));
  }
  Tensor out(tx.rows, w.cols);
  for (int i = 0; i < tx.rows; ++i) {
    for (int j = 0; j < w.cols; ++j) out.at(i, j) = b.v[j];
  }
  for (int i = 0; i < tx.rows; ++i) {
    for (int k = 0; k < tx.cols; ++k) {
      const double xik = tx.at(i, k);
      if (xik == 0.0) continue;
      for (int j = 0; j < w.cols; ++j) {
        out.at(i, j) += xik * w.at(k, j);
      }
    }
  }
  return push(std::move(out), [weights, bias, x](Tape& t, const Tensor& up) {
    const Tensor& w = t.nodes_[weights.id].data;
    const Tensor& tx = t.nodes_[x.id].data;
    Tensor& gw = t.scratch(weights.id);
    Tensor& gb = t.scratch(bias.id);
    Tensor& gx = t.scratch(x.id);
    for (int i = 0; i < up.rows; ++i) {
      for (int j = 0; j < up.cols; ++j) gb.v[j] += up.at(i, j);
    }
    // gw += x^T . up ; gx += up . w^T
    for (int i = 0; i < tx.rows; ++i) {
      for (int k = 0; k < tx.cols; ++k) {
        const double xik = tx.at(i, k);
        if (xik == 0.0) continue;
        for (int j = 0; j < up.cols; ++j) {
          gw.at(k, j) += xik * up.at(i, j);
        }
      }
    }
    for (int i = 0; i < up.rows; ++i) {
      for (int j = 0; j < up.cols; ++j) {
        const double u = up.at(i, j);
        if (u == 0.0) continue;
        for (int k = 0; k < w.rows; ++k) {
          gx.at(i, k) += u * w.at(k, j);
        }
      }
    }
  });
}

Value Tape::threehot_affine(Value weights, Value bias,
                            const std::vector<std::array<int, 3>>& rows) {
  const Tensor& w = nodes_[weights.id].data;
  const Tensor& b = nodes_[bias.id].data;
  if (b.rows != 1 || b.cols != w.cols) {
    throw shape_error("threehot_affine: bias shape " + shape_str(b) +
                      " does not match weights " + shape_str(w));
  }
  for (const auto& r : rows) {
    for (int idx : r) {
      if (idx < 0 || idx >= w.rows) {
        throw index_error("threehot_affine: row index " + std::to_string(idx) +
                          " out of range for " + shape_str(w));
      }
    }
  }
  const int n = static_cast<int>(rows.size());
  Tensor out(n, w.cols);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < w.cols; ++j) {
      out.at(i, j) = b.v[j] + w.at(rows[i][0], j) + w.at(rows[i][1], j) +
                     w.at(rows[i][2], j);
    }
  }
  return push(std::move(out), [weights, bias, rows](Tape& t, const Tensor& up) {
    Tensor& gw = t.scratch(weights.id);
    Tensor& gb = t.scratch(bias.id);
    for (int i = 0; i < up.rows; ++i) {
      for (int j = 0; j < up.cols; ++j) {
        const double u = up.at(i, j);
        gb.v[j] += u;
        gw.at(rows[i][0], j) += u;
        gw.at(rows[i][1], j) += u;
        gw.at(rows[i][2], j) += u;
      }
    }
  });
}

Value Tape::sigmoid(Value a) {
  Tensor out = nodes_[a.id].data;
  for (double& x : out.v) x = stable_sigmoid(x);
  Value r = push(std::move(out), {});
  nodes_[r.id].back = [a, r](Tape& t, const Tensor& up) {
    const Tensor& s = t.nodes_[r.id].data;
    Tensor& ga = t.scratch(a.id);
    for (int i = 0; i < up.size(); ++i) {
      ga.v[i] += up.v[i] * s.v[i] * (1.0 - s.v[i]);
    }
  };
  return r;
}

Value Tape::relu(Value a) {
  Tensor out = nodes_[a.id].data;
  for (double& x : out.v) x = x > 0.0 ? x : 0.0;
  return push(std::move(out), [a](Tape& t, const Tensor& up) {
    const Tensor& in = t.nodes_[a.id].data;
    Tensor& ga = t.scratch(a.id);
    for (int i = 0; i < up.size(); ++i) {
      if (in.v[i] > 0.0) ga.v[i] += up.v[i];
    }
  });
}

Value Tape::tanh_(Value a) {
  Tensor out = nodes_[a.id].data;
  for (double& x : out.v) x = std::tanh(x);
  Value r = push(std::move(out), {});
  nodes_[r.id].back = [a, r](Tape& t, const Tensor& up) {
    const Tensor& y = t.nodes_[r.id].data;
    Tensor& ga = t.scratch(a.id);
    for (int i = 0; i < up.size(); ++i) {
      ga.v[i] += up.v[i] * (1.0 - y.v[i] * y.v[i]);
    }
  };
  return r;
}

Value Tape::exp_(Value a) {
  Tensor out = nodes_[a.id].data;
  for (double& x : out.v) x = std::exp(x);
  Value r = push(std::move(out), {});
  nodes_[r.id].back = [a, r](Tape& t, const Tensor& up) {
    const Tensor& y = t.nodes_[r.id].data;
    Tensor& ga = t.scratch(a.id);
    for (int i = 0; i < up.size(); ++i) ga.v[i] += up.v[i] * y.v[i];
  };
  return r;
}

Value Tape::log_(Value a) {
  Tensor out = nodes_[a.id].data;
  for (double& x : out.v) x = std::log(x);
  return push(std::move(out), [a](Tape& t, const Tensor& up) {
    const Tensor& in = t.nodes_[a.id].data;
    Tensor& ga = t.scratch(a.id);
    for (int i = 0; i < up.size(); ++i) {
      // A zero upstream gradient contributes nothing even where the input
      // sits at a pole (clamped log-alpha hits log(0) when theta == 0).
      if (up.v[i] != 0.0) ga.v[i] += up.v[i] / in.v[i];
    }
  });
}

Value Tape::sqrt_(Value a) {
  Tensor out = nodes_[a.id].data;
  for (double& x : out.v) x = std::sqrt(x);
  Value r = push(std::move(out), {});
  nodes_[r.id].back = [a, r](Tape& t, const Tensor& up) {
    const Tensor& y = t.nodes_[r.id].data;
    Tensor& ga = t.scratch(a.id);
    for (int i = 0; i < up.size(); ++i) {
      // Subgradient 0 at input 0 (reparameterized variance can be exactly 0).
      if (up.v[i] != 0.0 && y.v[i] > 0.0) {
        ga.v[i] += up.v[i] * 0.5 / y.v[i];
      }
    }
  };
  return r;
}

Value Tape::square(Value a) {
  Tensor out = nodes_[a.id].data;
  for (double& x : out.v) x = x * x;
  return push(std::move(out), [a](Tape& t, const Tensor& up) {
    const Tensor& in = t.nodes_[a.id].data;
    Tensor& ga = t.scratch(a.id);
    for (int i = 0; i < up.size(); ++i) ga.v[i] += up.v[i] * 2.0 * in.v[i];
  });
}

Value Tape::softplus(Value a) {
  Tensor out = nodes_[a.id].data;
  for (double& x : out.v) x = stable_softplus(x);
  return push(std::move(out), [a](Tape& t, const Tensor& up) {
    const Tensor& in = t.nodes_[a.id].data;
    Tensor& ga = t.scratch(a.id);
    for (int i = 0; i < up.size(); ++i) {
      ga.v[i] += up.v[i] * stable_sigmoid(in.v[i]);
    }
  });
}

Value Tape::clamp(Value a, double lo, double hi) {
  Tensor out = nodes_[a.id].data;
  for (double& x : out.v) x = std::min(std::max(x, lo), hi);
  return push(std::move(out), [a, lo, hi](Tape& t, const Tensor& up) {
    const Tensor& in = t.nodes_[a.id].data;
    Tensor& ga = t.scratch(a.id);
    for (int i = 0; i < up.size(); ++i) {
      if (in.v[i] >= lo && in.v[i] <= hi) ga.v[i] += up.v[i];
    }
  });
}

Value Tape::sum(Value a) {
  double s = 0.0;
  for (double x : nodes_[a.id].data.v) s += x;
  return push(Tensor::scalar(s), [a](Tape& t, const Tensor& up) {
    Tensor& ga = t.scratch(a.id);
    for (double& g : ga.v) g += up.v[0];
  });
}

Value Tape::mean(Value a) {
  const int n = nodes_[a.id].data.size();
  return scale(sum(a), 1.0 / n);
}

Value Tape::pick(Value a, int flat_index) {
  const Tensor& ta = nodes_[a.id].data;
  if (flat_index < 0 || flat_index >= ta.size()) {
    throw index_error("pick: index " + std::to_string(flat_index) +
                      " out of range for " + shape_str(ta));
  }
  return push(Tensor::scalar(ta.v[flat_index]),
              [a, flat_index](Tape& t, const Tensor& up) {
                t.scratch(a.id).v[flat_index] += up.v[0];
              });
}

Value Tape::concat_scalars(const std::vector<Value>& scalars) {
  Tensor out(1, static_cast<int>(scalars.size()));
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    const Tensor& ti = nodes_[scalars[i].id].data;
    if (ti.size() != 1) {
      throw shape_error("concat_scalars: element " + std::to_string(i) +
                        " is not scalar: " + shape_str(ti));
    }
    out.v[i] = ti.v[0];
  }
  return push(std::move(out), [scalars](Tape& t, const Tensor& up) {
    for (std::size_t i = 0; i < scalars.size(); ++i) {
      t.scratch(scalars[i].id).v[0] += up.v[i];
    }
  });
}

Value Tape::reshape(Value a, int rows, int cols) {
  const Tensor& ta = nodes_[a.id].data;
  if (rows * cols != ta.size()) {
    throw shape_error("reshape: cannot view " + shape_str(ta) + " as [" +
                      std::to_string(rows) + " x " + std::to_string(cols) +
                      "]");
  }
  Tensor out = ta;
  out.rows = rows;
  out.cols = cols;
  return push(std::move(out), [a](Tape& t, const Tensor& up) {
    Tensor& ga = t.scratch(a.id);
    for (int i = 0; i < up.size(); ++i) ga.v[i] += up.v[i];
  });
}

Value Tape::gather_add(Value edge_vals, Value node_vals,
                       const std::vector<int>& src_index) {
  const Tensor& ev = nodes_[edge_vals.id].data;
  const Tensor& nv = nodes_[node_vals.id].data;
  if (ev.size() != static_cast<int>(src_index.size())) {
    throw shape_error("gather_add: " + std::to_string(src_index.size()) +
                      " indices for " + shape_str(ev) + " edge values");
  }
  for (int s : src_index) {
    if (s < 0 || s >= nv.size()) {
      throw index_error("gather_add: source index " + std::to_string(s) +
                        " out of range for " + std::to_string(nv.size()) +
                        " nodes");
    }
  }
  Tensor out = ev;
  for (int e = 0; e < out.size(); ++e) out.v[e] += nv.v[src_index[e]];
  return push(std::move(out),
              [edge_vals, node_vals, src_index](Tape& t, const Tensor& up) {
                Tensor& ge = t.scratch(edge_vals.id);
                Tensor& gn = t.scratch(node_vals.id);
                for (int e = 0; e < up.size(); ++e) {
                  ge.v[e] += up.v[e];
                  gn.v[src_index[e]] += up.v[e];
                }
              });
}

Value Tape::scatter_add(Value edge_vals, const std::vector<int>& dst_index,
                        int node_count) {
  const Tensor& ev = nodes_[edge_vals.id].data;
  if (ev.size() != static_cast<int>(dst_index.size())) {
    throw shape_error("scatter_add: " + std::to_string(dst_index.size()) +
                      " indices for " + shape_str(ev) + " edge values");
  }
  for (int d : dst_index) {
    if (d < 0 || d >= node_count) {
      throw index_error("scatter_add: destination index " + std::to_string(d) +
                        " out of range for " + std::to_string(node_count) +
                        " nodes");
    }
  }
  Tensor out(1, node_count);
  for (int e = 0; e < ev.size(); ++e) out.v[dst_index[e]] += ev.v[e];
  return push(std::move(out),
              [edge_vals, dst_index](Tape& t, const Tensor& up) {
                Tensor& ge = t.scratch(edge_vals.id);
                for (std::size_t e = 0; e < dst_index.size(); ++e) {
                  ge.v[e] += up.v[dst_index[e]];
                }
              });
}

Value Tape::softmax_cross_entropy(Value scores, int label) {
  const Tensor& s = nodes_[scores.id].data;
  const int c = s.size();
  if (label < 0 || label >= c) {
    throw index_error("softmax_cross_entropy: label " + std::to_string(label) +
                      " out of range for " + std::to_string(c) + " scores");
  }
  double mx = s.v[0];
  for (int i = 1; i < c; ++i) mx = std::max(mx, s.v[i]);
  double z = 0.0;
  for (int i = 0; i < c; ++i) z += std::exp(s.v[i] - mx);
  const double log_z = std::log(z);
  const double loss = -(s.v[label] - mx - log_z);
  std::vector<double> probs(c);
  for (int i = 0; i < c; ++i) probs[i] = std::exp(s.v[i] - mx) / z;
  return push(Tensor::scalar(loss),
              [scores, label, probs](Tape& t, const Tensor& up) {
                Tensor& gs = t.scratch(scores.id);
                for (std::size_t i = 0; i < probs.size(); ++i) {
                  gs.v[i] += up.v[0] * (probs[i] - (static_cast<int>(i) == label
                                                        ? 1.0
                                                        : 0.0));
                }
              });
}

void Tape::backward(Value loss) {
  if (loss.id < 0 || loss.id >= static_cast<int>(nodes_.size())) {
    throw contract_error("backward: loss is not on this tape");
  }
  if (nodes_[loss.id].data.size() != 1) {
    throw contract_error("backward: loss must be scalar, got " +
                         shape_str(nodes_[loss.id].data));
  }
  scratch_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    scratch_[i] = Tensor(nodes_[i].data.rows, nodes_[i].data.cols);
  }
  scratch_[loss.id].v[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    if (nodes_[i].back) {
      nodes_[i].back(*this, scratch_[i]);
    }
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Tensor& g = nodes_[i].grad;
    for (int k = 0; k < g.size(); ++k) g.v[k] += scratch_[i].v[k];
  }
}

void Tape::zero_grads() {
  for (Node& n : nodes_) n.grad.fill(0.0);
}

GradCheckReport grad_check_values(std::span<const double> analytic,
                                  std::span<const double> numeric) {
  GradCheckReport rep;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-8});
    const double rel = std::abs(analytic[i] - numeric[i]) / denom;
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_coord = i;
      rep.analytic_at_worst = analytic[i];
      rep.numeric_at_worst = numeric[i];
    }
  }
  return rep;
}

GradCheckReport grad_check(const ProblemBuilder& build, std::vector<double> x,
                           double step, FdMode mode) {
  std::vector<double> analytic(x.size(), 0.0);
  double f0 = 0.0;
  {
    Tape tape;
    DiffProblem p = build(tape, x);
    f0 = tape.value(p.loss);
    tape.backward(p.loss);
    std::size_t off = 0;
    for (Value v : p.params) {
      const Tensor& g = tape.grad(v);
      for (int k = 0; k < g.size(); ++k) analytic[off++] = g.v[k];
    }
    if (off != x.size()) {
      throw contract_error("grad_check: builder registered " +
                           std::to_string(off) + " parameters for " +
                           std::to_string(x.size()) + " coordinates");
    }
  }
  auto eval = [&](const std::vector<double>& pt) {
    Tape tape;
    DiffProblem p = build(tape, pt);
    return tape.value(p.loss);
  };
  std::vector<double> numeric(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    double est;
    if (mode == FdMode::central) {
      x[i] = saved + step;
      const double fp = eval(x);
      x[i] = saved - step;
      const double fm = eval(x);
      est = (fp - fm) / (2.0 * step);
    } else {
      x[i] = saved + step;
      const double fp = eval(x);
      est = (fp - f0) / step;
    }
    x[i] = saved;
    numeric[i] = est;
  }
  return grad_check_values(analytic, numeric);
}

}  // namespace gsc
