#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace adaor::nd {

/// Dense row-major tensor of 64-bit reals.
///
/// Rank 1 and 2 are the only ranks the graph operations use; a rank-1 tensor
/// of length n behaves as a single row when a matrix is expected.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void fill(double v);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// A trainable tensor and its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v);
  void zero_grad() { grad.fill(0.0); }
};

// Dense kernels. Every output element accumulates over the inner dimension in
// ascending order, so a row's result does not depend on which other rows share
// the batch.

/// out[rows, cols] = a[rows, inner] * b[inner, cols]
void matmul(const double* a, const double* b, double* out, std::size_t rows, std::size_t inner,
            std::size_t cols);
Tensor matmul(const Tensor& a, const Tensor& b);
/// out[rows, cols] = a[rows, inner] * b[inner, cols] + bias[cols]
void affine(const double* x, const double* w, const double* bias, double* out, std::size_t rows,
            std::size_t inner, std::size_t cols);
void transpose(const double* in, double* out, std::size_t rows, std::size_t cols);

double sigmoid(double x);
double silu(double x);
double silu_derivative(double x);

/// Reverse-mode tape over primitive operations.
///
/// Nodes are appended in evaluation order, which is therefore a topological
/// order. Parameter leaves accumulate into Parameter::grad on backward().
class Graph {
 public:
  struct Var {
    std::size_t id;
  };

  Var input(Tensor value);
  Var param(Parameter& p);
  Var detach(Var x);

  Var matmul(Var a, Var b);
  Var linear(Var x, Var weight, Var bias);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var silu(Var x);
  Var concat(std::span<const Var> parts);
  Var gather_rows(Var table, std::vector<std::size_t> ids);
  Var sum(Var x);
  Var mse_loss(Var pred, Var target);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;

  void backward(Var loss);
  void reset();
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op { Input, Param, Detach, MatMul, Linear, Add, Mul, Silu, Concat, Gather, Sum, Mse };

  struct Node {
    Op op = Op::Input;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    Parameter* param = nullptr;
    bool requires_grad = false;
    std::vector<std::size_t> index;  // gather ids
  };

  Var push(Node node);
  Node& node(Var v);
  const Node& node(Var v) const;
  void accumulate(std::size_t id, const Tensor& g);
  Tensor& grad_slot(std::size_t id);

  std::vector<Node> nodes_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. One moment pair per parameter tensor.
class AdamState {
 public:
  AdamState(std::span<Parameter* const> params, AdamConfig cfg = {});

  /// Applies one update from each parameter's current grad. Throws
  /// NonFiniteError naming the parameter if any gradient is NaN/Inf; no
  /// parameter is modified in that case.
  void step(std::span<Parameter* const> params);

  std::uint64_t step_count() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }
  const Tensor& first_moment(std::size_t i) const { return m_[i]; }
  const Tensor& second_moment(std::size_t i) const { return v_[i]; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t steps_ = 0;
};

struct GradcheckOptions {
  double step = 1e-5;
  /// 0 checks every coordinate; otherwise a seeded subset per tensor.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::vector<std::pair<std::string, double>> per_parameter;
};

/// Compares backward() against central differences of the scalar built by
/// `loss_fn`. The error of one parameter tensor is
/// ||autodiff - fd|| / (||fd|| + 1e-12) over the checked coordinates.
GradcheckResult gradcheck(std::span<Parameter* const> params,
                          const std::function<Graph::Var(Graph&)>& loss_fn,
                          const GradcheckOptions& opts = {});

}  // namespace adaor::nd
