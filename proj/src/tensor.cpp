#include "secure/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace secure {

using detail::Node;
using detail::NodePtr;

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              shape_str(a) + " vs " + shape_str(b));
}

NodePtr make_node(const char* op, Shape shape,
                  std::vector<NodePtr> parents) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->shape = std::move(shape);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  return n;
}

Tensor finish(NodePtr n) {
  n->value.resize(shape_numel(n->shape));
  n->compute(*n);
  return Tensor(std::move(n));
}

}  // namespace

// --- Tensor ------------------------------------------------------------

Tensor Tensor::leaf(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument(
        "leaf: shape " + shape_str(shape) + " wants " +
        std::to_string(shape_numel(shape)) + " values, got " +
        std::to_string(values.size()));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return leaf({1}, {v}, requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), 0.0);
  return leaf(std::move(shape), std::move(v), requires_grad);
}

double Tensor::scalar_value() const {
  if (numel() != 1) {
    throw std::invalid_argument("scalar_value: tensor has shape " +
                                shape_str(shape()));
  }
  return node_->value[0];
}

void Tensor::zero_grad() {
  if (node_->grad.size() != node_->value.size()) {
    node_->grad.assign(node_->value.size(), 0.0);
  } else {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }
}

void Tensor::set_values(const std::vector<double>& v) {
  if (v.size() != node_->value.size()) {
    throw std::invalid_argument("set_values: size mismatch");
  }
  node_->value = v;
}

Tensor Tensor::detached(bool requires_grad) const {
  return leaf(node_->shape, node_->value, requires_grad);
}

// --- ComputationRecord ---------------------------------------------------

ComputationRecord::ComputationRecord(const Tensor& output) : output_(output) {
  // Iterative post-order DFS: a node is emitted after all of its parents,
  // following the stored parent order, so the sequence depends only on the
  // graph structure.
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  Node* root = output.node().get();
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

void ComputationRecord::replay() {
  for (Node* n : order_) {
    if (n->compute) n->compute(*n);
  }
}

void ComputationRecord::backward() {
  Node* root = output_.node().get();
  if (root->value.size() != 1) {
    throw std::invalid_argument("backward: output must be scalar, got shape " +
                                shape_str(root->shape));
  }
  if (!root->requires_grad) return;  // nothing depends on a gradient leaf
  // Internal gradients are per-call scratch; leaf gradients accumulate.
  for (Node* n : order_) {
    if (!n->requires_grad) continue;
    if (n->is_leaf()) {
      n->ensure_grad();
    } else {
      n->grad.assign(n->value.size(), 0.0);
    }
  }
  root->grad[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node* n = *it;
    if (n->requires_grad && n->backprop) n->backprop(*n);
  }
}

void backward(const Tensor& output) { ComputationRecord(output).backward(); }

// --- elementwise helpers -------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const char* name, const Tensor& a, Fwd fwd, Bwd bwd) {
  auto n = make_node(name, a.shape(), {a.node()});
  n->compute = [fwd](Node& self) {
    const auto& x = self.parents[0]->value;
    for (std::size_t i = 0; i < x.size(); ++i) self.value[i] = fwd(x[i]);
  };
  if (n->requires_grad) {
    n->backprop = [bwd](Node& self) {
      Node& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        p.grad[i] += bwd(p.value[i], self.value[i]) * self.grad[i];
      }
    };
  }
  return finish(std::move(n));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  auto n = make_node("add", a.shape(), {a.node(), b.node()});
  n->compute = [](Node& self) {
    const auto& x = self.parents[0]->value;
    const auto& y = self.parents[1]->value;
    for (std::size_t i = 0; i < x.size(); ++i) self.value[i] = x[i] + y[i];
  };
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      for (int k = 0; k < 2; ++k) {
        Node& p = *self.parents[static_cast<std::size_t>(k)];
        if (!p.requires_grad) continue;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          p.grad[i] += self.grad[i];
      }
    };
  }
  return finish(std::move(n));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("subtract", a.shape(), b.shape());
  auto n = make_node("subtract", a.shape(), {a.node(), b.node()});
  n->compute = [](Node& self) {
    const auto& x = self.parents[0]->value;
    const auto& y = self.parents[1]->value;
    for (std::size_t i = 0; i < x.size(); ++i) self.value[i] = x[i] - y[i];
  };
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pa.grad[i] += self.grad[i];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pb.grad[i] -= self.grad[i];
      }
    };
  }
  return finish(std::move(n));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    shape_error("elementwise-multiply", a.shape(), b.shape());
  auto n = make_node("elementwise-multiply", a.shape(), {a.node(), b.node()});
  n->compute = [](Node& self) {
    const auto& x = self.parents[0]->value;
    const auto& y = self.parents[1]->value;
    for (std::size_t i = 0; i < x.size(); ++i) self.value[i] = x[i] * y[i];
  };
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pa.grad[i] += pb.value[i] * self.grad[i];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          pb.grad[i] += pa.value[i] * self.grad[i];
      }
    };
  }
  return finish(std::move(n));
}

Tensor scale(const Tensor& a, double c) {
  auto n = make_node("scalar-scale", a.shape(), {a.node()});
  n->compute = [c](Node& self) {
    const auto& x = self.parents[0]->value;
    for (std::size_t i = 0; i < x.size(); ++i) self.value[i] = c * x[i];
  };
  if (n->requires_grad) {
    n->backprop = [c](Node& self) {
      Node& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        p.grad[i] += c * self.grad[i];
    };
  }
  return finish(std::move(n));
}

Tensor square(const Tensor& a) {
  return unary_op(
      "square", a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      "sigmoid", a,
      [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.values()) {
    if (!(v > 0.0)) {
      throw std::domain_error("log: input must be strictly positive, got " +
                              std::to_string(v));
    }
  }
  return unary_op(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
  return unary_op(
      "clamp", a,
      [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) {
        return (x >= lo && x <= hi) ? 1.0 : 0.0;
      });
}

Tensor sum(const Tensor& a) {
  auto n = make_node("sum", {1}, {a.node()});
  n->compute = [](Node& self) {
    double acc = 0.0;
    for (double v : self.parents[0]->value) acc += v;
    self.value[0] = acc;
  };
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Node& p = *self.parents[0];
      p.ensure_grad();
      const double g = self.grad[0];
      for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
    };
  }
  return finish(std::move(n));
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  auto n = make_node("mean", {1}, {a.node()});
  n->compute = [inv](Node& self) {
    double acc = 0.0;
    for (double v : self.parents[0]->value) acc += v;
    self.value[0] = acc * inv;
  };
  if (n->requires_grad) {
    n->backprop = [inv](Node& self) {
      Node& p = *self.parents[0];
      p.ensure_grad();
      const double g = self.grad[0] * inv;
      for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
    };
  }
  return finish(std::move(n));
}

Tensor mean_axis0(const Tensor& a) {
  if (a.rank() != 2) {
    throw std::invalid_argument("mean-axis0: want rank-2 input, got " +
                                shape_str(a.shape()));
  }
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  const double inv = 1.0 / static_cast<double>(rows);
  auto n = make_node("mean-axis0", {cols}, {a.node()});
  n->compute = [rows, cols, inv](Node& self) {
    const auto& x = self.parents[0]->value;
    for (std::size_t j = 0; j < cols; ++j) self.value[j] = 0.0;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < cols; ++j) self.value[j] += x[r * cols + j];
    for (std::size_t j = 0; j < cols; ++j) self.value[j] *= inv;
  };
  if (n->requires_grad) {
    n->backprop = [rows, cols, inv](Node& self) {
      Node& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cols; ++j)
          p.grad[r * cols + j] += self.grad[j] * inv;
    };
  }
  return finish(std::move(n));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || (b.rank() != 2 && b.rank() != 1) ||
      a.shape()[1] != b.shape()[0]) {
    shape_error("matmul", a.shape(), b.shape());
  }
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  if (b.rank() == 1) {
    auto n = make_node("matmul", {m}, {a.node(), b.node()});
    n->compute = [m, k](Node& self) {
      const auto& A = self.parents[0]->value;
      const auto& x = self.parents[1]->value;
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        const double* row = &A[i * k];
        for (std::size_t j = 0; j < k; ++j) acc += row[j] * x[j];
        self.value[i] = acc;
      }
    };
    if (n->requires_grad) {
      n->backprop = [m, k](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          const auto& x = pb.value;
          for (std::size_t i = 0; i < m; ++i) {
            const double g = self.grad[i];
            double* row = &pa.grad[i * k];
            for (std::size_t j = 0; j < k; ++j) row[j] += g * x[j];
          }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          const auto& A = pa.value;
          for (std::size_t i = 0; i < m; ++i) {
            const double g = self.grad[i];
            const double* row = &A[i * k];
            for (std::size_t j = 0; j < k; ++j) pb.grad[j] += row[j] * g;
          }
        }
      };
    }
    return finish(std::move(n));
  }
  const std::size_t p = b.shape()[1];
  auto n = make_node("matmul", {m, p}, {a.node(), b.node()});
  n->compute = [m, k, p](Node& self) {
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    std::fill(self.value.begin(), self.value.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      double* out = &self.value[i * p];
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = A[i * k + kk];
        const double* brow = &B[kk * p];
        for (std::size_t j = 0; j < p; ++j) out[j] += av * brow[j];
      }
    }
  };
  if (n->requires_grad) {
    n->backprop = [m, k, p](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();  // dA += dC * B^T
        const auto& B = pb.value;
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = &self.grad[i * p];
          double* arow = &pa.grad[i * k];
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double* brow = &B[kk * p];
            double acc = 0.0;
            for (std::size_t j = 0; j < p; ++j) acc += grow[j] * brow[j];
            arow[kk] += acc;
          }
        }
      }
      if (pb.requires_grad) {
        pb.ensure_grad();  // dB += A^T * dC
        const auto& A = pa.value;
        for (std::size_t kk = 0; kk < k; ++kk) {
          double* brow = &pb.grad[kk * p];
          for (std::size_t i = 0; i < m; ++i) {
            const double av = A[i * k + kk];
            const double* grow = &self.grad[i * p];
            for (std::size_t j = 0; j < p; ++j) brow[j] += av * grow[j];
          }
        }
      }
    };
  }
  return finish(std::move(n));
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) {
    throw std::invalid_argument("transpose: want rank-2 input, got " +
                                shape_str(a.shape()));
  }
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  auto n = make_node("transpose", {c, r}, {a.node()});
  n->compute = [r, c](Node& self) {
    const auto& x = self.parents[0]->value;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) self.value[j * r + i] = x[i * c + j];
  };
  if (n->requires_grad) {
    n->backprop = [r, c](Node& self) {
      Node& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          p.grad[i * c + j] += self.grad[j * r + i];
    };
  }
  return finish(std::move(n));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    shape_error("reshape", a.shape(), shape);
  }
  auto n = make_node("reshape", std::move(shape), {a.node()});
  n->compute = [](Node& self) { self.value = self.parents[0]->value; };
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      Node& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        p.grad[i] += self.grad[i];
    };
  }
  return finish(std::move(n));
}

namespace {

Tensor concat_flat(const char* name, const std::vector<Tensor>& parts,
                   Shape out_shape) {
  std::vector<NodePtr> parents;
  parents.reserve(parts.size());
  for (const auto& t : parts) parents.push_back(t.node());
  auto n = make_node(name, std::move(out_shape), std::move(parents));
  n->compute = [](Node& self) {
    std::size_t off = 0;
    for (const auto& p : self.parents) {
      std::copy(p->value.begin(), p->value.end(), self.value.begin() + off);
      off += p->value.size();
    }
  };
  if (n->requires_grad) {
    n->backprop = [](Node& self) {
      std::size_t off = 0;
      for (const auto& pp : self.parents) {
        Node& p = *pp;
        if (p.requires_grad) {
          p.ensure_grad();
          for (std::size_t i = 0; i < p.value.size(); ++i)
            p.grad[i] += self.grad[off + i];
        }
        off += p.value.size();
      }
    };
  }
  return finish(std::move(n));
}

}  // namespace

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  std::size_t total = 0;
  for (const auto& t : parts) {
    if (t.rank() != 1) {
      throw std::invalid_argument("concat: want rank-1 inputs, got " +
                                  shape_str(t.shape()));
    }
    total += t.numel();
  }
  return concat_flat("concat", parts, {total});
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack-rows: no inputs");
  const std::size_t len = rows.front().numel();
  for (const auto& t : rows) {
    if (t.rank() != 1 || t.numel() != len) {
      shape_error("stack-rows", rows.front().shape(), t.shape());
    }
  }
  return concat_flat("stack-rows", rows, {rows.size(), len});
}

Tensor slice(const Tensor& a, std::size_t index) {
  if (a.rank() < 1 || index >= a.shape()[0]) {
    throw std::invalid_argument("slice: index " + std::to_string(index) +
                                " out of range for " + shape_str(a.shape()));
  }
  Shape out(a.shape().begin() + 1, a.shape().end());
  if (out.empty()) out = {1};
  const std::size_t block = shape_numel(out);
  auto n = make_node("slice", std::move(out), {a.node()});
  n->compute = [index, block](Node& self) {
    const auto& x = self.parents[0]->value;
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(index * block),
              x.begin() + static_cast<std::ptrdiff_t>((index + 1) * block),
              self.value.begin());
  };
  if (n->requires_grad) {
    n->backprop = [index, block](Node& self) {
      Node& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < block; ++i)
        p.grad[index * block + i] += self.grad[i];
    };
  }
  return finish(std::move(n));
}

Tensor slice_range(const Tensor& a, std::size_t lo, std::size_t hi) {
  if (a.rank() != 1 || lo >= hi || hi > a.numel()) {
    throw std::invalid_argument("slice-range: bad range [" +
                                std::to_string(lo) + "," + std::to_string(hi) +
                                ") for " + shape_str(a.shape()));
  }
  auto n = make_node("slice-range", {hi - lo}, {a.node()});
  n->compute = [lo, hi](Node& self) {
    const auto& x = self.parents[0]->value;
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(lo),
              x.begin() + static_cast<std::ptrdiff_t>(hi),
              self.value.begin());
  };
  if (n->requires_grad) {
    n->backprop = [lo](Node& self) {
      Node& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        p.grad[lo + i] += self.grad[i];
    };
  }
  return finish(std::move(n));
}

Tensor slice_cols(const Tensor& a, std::size_t lo, std::size_t hi) {
  if (a.rank() != 2 || lo >= hi || hi > a.shape()[1]) {
    throw std::invalid_argument("slice-cols: bad range [" + std::to_string(lo) +
                                "," + std::to_string(hi) + ") for " +
                                shape_str(a.shape()));
  }
  const std::size_t rows = a.shape()[0], cols = a.shape()[1], w = hi - lo;
  auto n = make_node("slice-cols", {rows, w}, {a.node()});
  n->compute = [rows, cols, lo, w](Node& self) {
    const auto& x = self.parents[0]->value;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j)
        self.value[r * w + j] = x[r * cols + lo + j];
  };
  if (n->requires_grad) {
    n->backprop = [rows, cols, lo, w](Node& self) {
      Node& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < w; ++j)
          p.grad[r * cols + lo + j] += self.grad[r * w + j];
    };
  }
  return finish(std::move(n));
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat-cols: no inputs");
  const std::size_t rows = parts.front().shape()[0];
  std::size_t total = 0;
  for (const auto& t : parts) {
    if (t.rank() != 2 || t.shape()[0] != rows) {
      shape_error("concat-cols", parts.front().shape(), t.shape());
    }
    total += t.shape()[1];
  }
  std::vector<NodePtr> parents;
  parents.reserve(parts.size());
  std::vector<std::size_t> widths;
  for (const auto& t : parts) {
    parents.push_back(t.node());
    widths.push_back(t.shape()[1]);
  }
  auto n = make_node("concat-cols", {rows, total}, std::move(parents));
  n->compute = [rows, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
      const auto& x = self.parents[pi]->value;
      const std::size_t w = widths[pi];
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < w; ++j)
          self.value[r * total + off + j] = x[r * w + j];
      off += w;
    }
  };
  if (n->requires_grad) {
    n->backprop = [rows, total, widths](Node& self) {
      std::size_t off = 0;
      for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
        Node& p = *self.parents[pi];
        const std::size_t w = widths[pi];
        if (p.requires_grad) {
          p.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < w; ++j)
              p.grad[r * w + j] += self.grad[r * total + off + j];
        }
        off += w;
      }
    };
  }
  return finish(std::move(n));
}

namespace {

void softmax_row(const double* x, double* y, std::size_t n) {
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - mx);
    z += y[i];
  }
  const double inv = 1.0 / z;
  for (std::size_t i = 0; i < n; ++i) y[i] *= inv;
}

void softmax_row_back(const double* y, const double* gy, double* gx,
                      std::size_t n) {
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) dot += gy[i] * y[i];
  for (std::size_t i = 0; i < n; ++i) gx[i] += y[i] * (gy[i] - dot);
}

}  // namespace

Tensor softmax(const Tensor& a) {
  if (a.rank() != 1 && a.rank() != 2) {
    throw std::invalid_argument("softmax: want rank-1 or rank-2 input, got " +
                                shape_str(a.shape()));
  }
  const std::size_t rows = a.rank() == 2 ? a.shape()[0] : 1;
  const std::size_t cols = a.rank() == 2 ? a.shape()[1] : a.numel();
  auto n = make_node("softmax", a.shape(), {a.node()});
  n->compute = [rows, cols](Node& self) {
    const auto& x = self.parents[0]->value;
    for (std::size_t r = 0; r < rows; ++r)
      softmax_row(&x[r * cols], &self.value[r * cols], cols);
  };
  if (n->requires_grad) {
    n->backprop = [rows, cols](Node& self) {
      Node& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        softmax_row_back(&self.value[r * cols], &self.grad[r * cols],
                         &p.grad[r * cols], cols);
    };
  }
  return finish(std::move(n));
}

// --- finite differences --------------------------------------------------

FiniteDiffReport finite_diff_check(
    const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
    double step, double tolerance) {
  if (!(step > 0.0) || !(tolerance > 0.0)) {
    throw std::invalid_argument("finite_diff_check: step and tolerance must "
                                "be positive");
  }
  const std::size_t n = point.numel();
  FiniteDiffReport report;
  report.analytic.resize(n);
  report.numeric.resize(n);
  report.rel_err.resize(n);

  Tensor x = Tensor::leaf(point.shape(), point.values(), true);
  Tensor y = f(x);
  if (y.numel() != 1) {
    throw std::invalid_argument("finite_diff_check: function must be scalar");
  }
  backward(y);
  if (x.grad().size() == n) report.analytic = x.grad();

  std::vector<double> bumped = point.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double orig = bumped[i];
    bumped[i] = orig + step;
    const double hi = f(Tensor::leaf(point.shape(), bumped)).scalar_value();
    bumped[i] = orig - step;
    const double lo = f(Tensor::leaf(point.shape(), bumped)).scalar_value();
    bumped[i] = orig;
    report.numeric[i] = (hi - lo) / (2.0 * step);
    const double denom = std::max(
        {1.0, std::fabs(report.analytic[i]), std::fabs(report.numeric[i])});
    report.rel_err[i] = std::fabs(report.analytic[i] - report.numeric[i]) /
                        denom;
    if (report.rel_err[i] > report.max_rel_err) {
      report.max_rel_err = report.rel_err[i];
      report.worst_index = i;
    }
  }
  report.pass = report.max_rel_err <= tolerance;
  return report;
}

}  // namespace secure
