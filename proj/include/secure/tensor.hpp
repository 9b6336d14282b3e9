#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace secure {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // leaves accumulate across backward calls
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Recomputes value from the parents' current values. Empty for leaves.
  std::function<void(Node&)> compute;
  // Scatters this node's grad into the parents' grad buffers.
  std::function<void(Node&)> backprop;

  bool is_leaf() const { return parents.empty(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

/// Dense 64-bit float tensor with reverse-mode gradient recording. Values
/// are written once by the op that produces them; only grad buffers mutate
/// afterwards (plus set_values, reserved for the optimizer between recorded
/// computations). Every op records a gradient rule when any input requires
/// gradients, so backward() can run over the implicit computation graph.
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& values() const { return node_->value; }
  double value_at(std::size_t i) const { return node_->value[i]; }
  double scalar_value() const;

  /// Accumulated gradient; empty until a backward pass has touched this leaf.
  const std::vector<double>& grad() const { return node_->grad; }
  void zero_grad();

  /// Overwrites the stored values in place. Only legal between recorded
  /// computations (the optimizer's parameter update); graphs built before
  /// the call must not be replayed or differentiated afterwards.
  void set_values(const std::vector<double>& v);

  /// Value copy with no graph history.
  Tensor detached(bool requires_grad = false) const;

  const detail::NodePtr& node() const { return node_; }
  explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}

 private:
  detail::NodePtr node_;
};

/// Topologically ordered view of every node reachable from one output.
/// The order is derived from graph structure (depth-first, inputs before
/// consumers), so it is identical no matter which threads built the nodes.
class ComputationRecord {
 public:
  explicit ComputationRecord(const Tensor& output);

  std::size_t size() const { return order_.size(); }
  const Tensor& output() const { return output_; }

  /// Re-runs every recorded forward computation in order. Deterministic:
  /// identical inputs reproduce identical outputs bit-for-bit.
  void replay();

  /// Reverse-mode sweep. The output must be scalar. Gradients accumulate
  /// additively into every requires_grad leaf; internal scratch gradients
  /// are reset on each call, leaf gradients are not (explicit zero_grad
  /// between optimization steps is the caller's job).
  void backward();

 private:
  Tensor output_;
  std::vector<detail::Node*> order_;
};

/// Convenience wrapper: record the graph below `output` and run backward.
void backward(const Tensor& output);

// --- primitive op set -------------------------------------------------
// Each checks input shapes and records a gradient rule when needed.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);        // elementwise
Tensor scale(const Tensor& a, double c);
Tensor square(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);                          // strictly positive input
Tensor clamp(const Tensor& a, double lo, double hi);  // pass-through grad inside
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_axis0(const Tensor& a);                   // {R,C} -> {C}
Tensor matmul(const Tensor& a, const Tensor& b);      // {m,k}x{k,n} or {m,k}x{k}
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts);                 // flat 1-D
Tensor stack_rows(const std::vector<Tensor>& rows);              // N x {L} -> {N,L}
Tensor slice(const Tensor& a, std::size_t index);                // drop axis 0
Tensor slice_range(const Tensor& a, std::size_t lo, std::size_t hi);  // 1-D [lo,hi)
Tensor slice_cols(const Tensor& a, std::size_t lo, std::size_t hi);   // {R,C} cols
Tensor concat_cols(const std::vector<Tensor>& parts);            // {R,Ci} -> {R,sum}
Tensor softmax(const Tensor& a);  // 1-D over all entries, 2-D per row

// --- gradient verification --------------------------------------------

struct FiniteDiffReport {
  std::vector<double> analytic;
  std::vector<double> numeric;
  std::vector<double> rel_err;  // |a-n| / max(1, |a|, |n|)
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  bool pass = false;
};

/// Central-difference check of d(f)/d(point): (f(x+he)-f(x-he))/(2h) per
/// coordinate against the recorded analytic gradient.
FiniteDiffReport finite_diff_check(
    const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
    double step, double tolerance);

}  // namespace secure
