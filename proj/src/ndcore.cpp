#include "adaor/ndcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "adaor/errors.hpp"
#include "adaor/rng.hpp"

namespace adaor::nd {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void check_shape(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor shape entries must be >= 1, got " + shape_string(shape));
  }
}

// Eight doubles; lowered to one AVX-512 register when available.
typedef double v8d __attribute__((vector_size(64)));

template <int R, int V>
inline void tile(const double* a, std::size_t inner, const double* b, std::size_t ldb,
                 double* out, std::size_t ldo) {
  v8d acc[R][V];
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < V; ++c) acc[r][c] = v8d{};
  for (std::size_t k = 0; k < inner; ++k) {
    const double* brow = b + k * ldb;
    v8d bv[V];
    for (int c = 0; c < V; ++c) std::memcpy(&bv[c], brow + 8 * c, sizeof(v8d));
    for (int r = 0; r < R; ++r) {
      const double s = a[static_cast<std::size_t>(r) * inner + k];
      for (int c = 0; c < V; ++c) acc[r][c] += s * bv[c];
    }
  }
  for (int r = 0; r < R; ++r) std::memcpy(out + r * ldo, acc[r], sizeof(v8d) * V);
}

template <int V>
inline void column_block(const double* a, const double* b, double* out, std::size_t rows,
                         std::size_t inner, std::size_t cols, std::size_t j) {
  std::size_t i = 0;
  for (; i + 6 <= rows; i += 6) tile<6, V>(a + i * inner, inner, b + j, cols, out + i * cols + j, cols);
  for (; i < rows; ++i) tile<1, V>(a + i * inner, inner, b + j, cols, out + i * cols + j, cols);
}

}  // namespace

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(product(shape_), fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (product(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(value.shape(), 0.0) {}

// ---------------------------------------------------------------- kernels

void matmul(const double* a, const double* b, double* out, std::size_t rows, std::size_t inner,
            std::size_t cols) {
  std::size_t j = 0;
  for (; j + 32 <= cols; j += 32) column_block<4>(a, b, out, rows, inner, cols, j);
  for (; j + 8 <= cols; j += 8) column_block<1>(a, b, out, rows, inner, cols, j);
  for (; j < cols; ++j) {
    for (std::size_t i = 0; i < rows; ++i) {
      double acc = 0.0;
      const double* arow = a + i * inner;
      for (std::size_t k = 0; k < inner; ++k) acc += arow[k] * b[k * cols + j];
      out[i * cols + j] = acc;
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor out({a.rows(), b.cols()});
  matmul(a.raw(), b.raw(), out.raw(), a.rows(), a.cols(), b.cols());
  return out;
}

void affine(const double* x, const double* w, const double* bias, double* out, std::size_t rows,
            std::size_t inner, std::size_t cols) {
  matmul(x, w, out, rows, inner, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double* o = out + i * cols;
    for (std::size_t j = 0; j < cols; ++j) o[j] += bias[j];
  }
}

void transpose(const double* in, double* out, std::size_t rows, std::size_t cols) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kBlock) {
    for (std::size_t j0 = 0; j0 < cols; j0 += kBlock) {
      const std::size_t i1 = std::min(rows, i0 + kBlock);
      const std::size_t j1 = std::min(cols, j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) out[j * rows + i] = in[i * cols + j];
    }
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu(double x) { return x * sigmoid(x); }

double silu_derivative(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

// ---------------------------------------------------------------- Graph

Graph::Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Graph::Node& Graph::node(Var v) {
  if (v.id >= nodes_.size()) throw ContractError("graph variable does not belong to this graph");
  return nodes_[v.id];
}

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("graph variable does not belong to this graph");
  return nodes_[v.id];
}

Graph::Var Graph::input(Tensor value) {
  Node n;
  n.op = Op::Input;
  n.value = std::move(value);
  return push(std::move(n));
}

Graph::Var Graph::param(Parameter& p) {
  Node n;
  n.op = Op::Param;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  return push(std::move(n));
}

Graph::Var Graph::detach(Var x) {
  Node n;
  n.op = Op::Detach;
  n.value = node(x).value;
  return push(std::move(n));
}

Graph::Var Graph::matmul(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  Node n;
  n.op = Op::MatMul;
  n.value = nd::matmul(av, bv);
  n.inputs = {a.id, b.id};
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(n));
}

Graph::Var Graph::linear(Var x, Var weight, Var bias) {
  const Tensor& xv = node(x).value;
  const Tensor& wv = node(weight).value;
  const Tensor& bv = node(bias).value;
  if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 || xv.cols() != wv.rows() ||
      bv.cols() != wv.cols()) {
    throw DimensionError("linear shape mismatch: input " + shape_string(xv.shape()) + ", weight " +
                         shape_string(wv.shape()) + ", bias " + shape_string(bv.shape()));
  }
  Node n;
  n.op = Op::Linear;
  n.value = Tensor({xv.rows(), wv.cols()});
  affine(xv.raw(), wv.raw(), bv.raw(), n.value.raw(), xv.rows(), xv.cols(), wv.cols());
  n.inputs = {x.id, weight.id, bias.id};
  n.requires_grad = node(x).requires_grad || node(weight).requires_grad || node(bias).requires_grad;
  return push(std::move(n));
}

Graph::Var Graph::add(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (!av.same_shape(bv)) {
    throw DimensionError("add shape mismatch: " + shape_string(av.shape()) + " vs " +
                         shape_string(bv.shape()));
  }
  Node n;
  n.op = Op::Add;
  n.value = av;
  for (std::size_t i = 0; i < bv.size(); ++i) n.value[i] += bv[i];
  n.inputs = {a.id, b.id};
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(n));
}

Graph::Var Graph::mul(Var a, Var b) {
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  if (!av.same_shape(bv)) {
    throw DimensionError("mul shape mismatch: " + shape_string(av.shape()) + " vs " +
                         shape_string(bv.shape()));
  }
  Node n;
  n.op = Op::Mul;
  n.value = av;
  for (std::size_t i = 0; i < bv.size(); ++i) n.value[i] *= bv[i];
  n.inputs = {a.id, b.id};
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(n));
}

Graph::Var Graph::silu(Var x) {
  Node n;
  n.op = Op::Silu;
  n.value = node(x).value;
  for (double& v : n.value.data()) v = nd::silu(v);
  n.inputs = {x.id};
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

Graph::Var Graph::concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const std::size_t rows = node(parts[0]).value.rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    const Tensor& v = node(p).value;
    if (v.rank() != 2 || v.rows() != rows) {
      throw DimensionError("concat row mismatch: " + shape_string(v.shape()) + " vs rows=" +
                           std::to_string(rows));
    }
    cols += v.cols();
  }
  Node n;
  n.op = Op::Concat;
  n.value = Tensor({rows, cols});
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& v = node(p).value;
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.raw() + r * v.cols(), v.cols(), n.value.raw() + r * cols + offset);
    offset += v.cols();
    n.inputs.push_back(p.id);
    n.requires_grad = n.requires_grad || node(p).requires_grad;
  }
  return push(std::move(n));
}

Graph::Var Graph::gather_rows(Var table, std::vector<std::size_t> ids) {
  const Tensor& tv = node(table).value;
  if (tv.rank() != 2) throw DimensionError("gather_rows needs a matrix, got " + shape_string(tv.shape()));
  if (ids.empty()) throw DimensionError("gather_rows with no ids");
  Node n;
  n.op = Op::Gather;
  n.value = Tensor({ids.size(), tv.cols()});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= tv.rows()) {
      throw DimensionError("gather_rows id " + std::to_string(ids[r]) + " out of range for " +
                           shape_string(tv.shape()));
    }
    std::copy_n(tv.raw() + ids[r] * tv.cols(), tv.cols(), n.value.raw() + r * tv.cols());
  }
  n.inputs = {table.id};
  n.index = std::move(ids);
  n.requires_grad = node(table).requires_grad;
  return push(std::move(n));
}

Graph::Var Graph::sum(Var x) {
  double s = 0.0;
  for (double v : node(x).value.data()) s += v;
  Node n;
  n.op = Op::Sum;
  n.value = Tensor::scalar(s);
  n.inputs = {x.id};
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

Graph::Var Graph::mse_loss(Var pred, Var target) {
  const Tensor& p = node(pred).value;
  const Tensor& t = node(target).value;
  if (!p.same_shape(t)) {
    throw DimensionError("mse_loss shape mismatch: " + shape_string(p.shape()) + " vs " +
                         shape_string(t.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    s += d * d;
  }
  Node n;
  n.op = Op::Mse;
  n.value = Tensor::scalar(s / static_cast<double>(p.size()));
  n.inputs = {pred.id, target.id};
  n.requires_grad = node(pred).requires_grad || node(target).requires_grad;
  return push(std::move(n));
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

const Tensor& Graph::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.size() == 0) throw ContractError("no gradient recorded for this node");
  return n.grad;
}

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor& Graph::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Graph::accumulate(std::size_t id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  Tensor& slot = grad_slot(id);
  for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
}

void Graph::backward(Var loss) {
  Node& root = node(loss);
  if (root.value.size() != 1) {
    throw DimensionError("backward needs a scalar loss, got shape " + shape_string(root.value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  if (!root.requires_grad) return;
  grad_slot(loss.id)[0] = 1.0;

  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::Input:
      case Op::Detach:
        break;
      case Op::Param: {
        Tensor& pg = n.param->grad;
        if (!pg.same_shape(n.value)) pg = Tensor(n.value.shape(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        break;
      }
      case Op::MatMul:
      case Op::Linear: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        const Tensor& w = nodes_[n.inputs[1]].value;
        const std::size_t rows = x.rows(), inner = x.cols(), cols = w.cols();
        if (nodes_[n.inputs[0]].requires_grad) {
          std::vector<double> wt(inner * cols);
          transpose(w.raw(), wt.data(), inner, cols);
          Tensor dx({rows, inner});
          nd::matmul(g.raw(), wt.data(), dx.raw(), rows, cols, inner);
          accumulate(n.inputs[0], dx);
        }
        if (nodes_[n.inputs[1]].requires_grad) {
          std::vector<double> xt(rows * inner);
          transpose(x.raw(), xt.data(), rows, inner);
          Tensor dw({inner, cols});
          nd::matmul(xt.data(), g.raw(), dw.raw(), inner, rows, cols);
          accumulate(n.inputs[1], dw);
        }
        if (n.op == Op::Linear && nodes_[n.inputs[2]].requires_grad) {
          Tensor db({cols}, 0.0);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) db[c] += g[r * cols + c];
          accumulate(n.inputs[2], db);
        }
        break;
      }
      case Op::Add:
        accumulate(n.inputs[0], g);
        accumulate(n.inputs[1], g);
        break;
      case Op::Mul: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Tensor& b = nodes_[n.inputs[1]].value;
        Tensor da = g, db = g;
        for (std::size_t i = 0; i < g.size(); ++i) {
          da[i] *= b[i];
          db[i] *= a[i];
        }
        accumulate(n.inputs[0], da);
        accumulate(n.inputs[1], db);
        break;
      }
      case Op::Silu: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        Tensor dx = g;
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] *= silu_derivative(x[i]);
        accumulate(n.inputs[0], dx);
        break;
      }
      case Op::Concat: {
        const std::size_t rows = n.value.rows(), cols = n.value.cols();
        std::size_t offset = 0;
        for (std::size_t in : n.inputs) {
          const std::size_t c = nodes_[in].value.cols();
          if (nodes_[in].requires_grad) {
            Tensor part({rows, c});
            for (std::size_t r = 0; r < rows; ++r)
              std::copy_n(g.raw() + r * cols + offset, c, part.raw() + r * c);
            accumulate(in, part);
          }
          offset += c;
        }
        break;
      }
      case Op::Gather: {
        if (!nodes_[n.inputs[0]].requires_grad) break;
        Tensor& slot = grad_slot(n.inputs[0]);
        const std::size_t c = n.value.cols();
        for (std::size_t r = 0; r < n.index.size(); ++r)
          for (std::size_t j = 0; j < c; ++j) slot[n.index[r] * c + j] += g[r * c + j];
        break;
      }
      case Op::Sum: {
        Tensor dx(nodes_[n.inputs[0]].value.shape(), g[0]);
        accumulate(n.inputs[0], dx);
        break;
      }
      case Op::Mse: {
        const Tensor& p = nodes_[n.inputs[0]].value;
        const Tensor& t = nodes_[n.inputs[1]].value;
        const double scale = 2.0 * g[0] / static_cast<double>(p.size());
        Tensor dp(p.shape()), dt(p.shape());
        for (std::size_t i = 0; i < p.size(); ++i) {
          dp[i] = scale * (p[i] - t[i]);
          dt[i] = -dp[i];
        }
        accumulate(n.inputs[0], dp);
        accumulate(n.inputs[1], dt);
        break;
      }
    }
  }
}

void Graph::reset() { nodes_.clear(); }

// ---------------------------------------------------------------- Adam

AdamState::AdamState(std::span<Parameter* const> params, AdamConfig cfg) : cfg_(cfg) {
  for (const Parameter* p : params) {
    m_.emplace_back(p->value.shape(), 0.0);
    v_.emplace_back(p->value.shape(), 0.0);
  }
}

void AdamState::step(std::span<Parameter* const> params) {
  if (params.size() != m_.size()) {
    throw DimensionError("adam_step got " + std::to_string(params.size()) + " parameters, state has " +
                         std::to_string(m_.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (!p.grad.same_shape(m_[i]) || !p.value.same_shape(m_[i])) {
      throw DimensionError("adam_step shape mismatch for " + p.name + ": " +
                           shape_string(p.value.shape()) + " vs state " + shape_string(m_[i].shape()));
    }
    for (double g : p.grad.data()) {
      if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    double* m = m_[i].raw();
    double* v = v_[i].raw();
    const double* g = p.grad.raw();
    double* w = p.value.raw();
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

// ---------------------------------------------------------------- gradcheck

GradcheckResult gradcheck(std::span<Parameter* const> params,
                          const std::function<Graph::Var(Graph&)>& loss_fn,
                          const GradcheckOptions& opts) {
  for (Parameter* p : params) p->grad = Tensor(p->value.shape(), 0.0);
  {
    Graph g;
    Graph::Var loss = loss_fn(g);
    g.backward(loss);
  }
  auto eval = [&]() {
    Graph g;
    return g.value(loss_fn(g))[0];
  };

  GradcheckResult result;
  Rng rng(opts.seed);
  for (Parameter* p : params) {
    std::vector<std::size_t> coords;
    const std::size_t n = p->value.size();
    if (opts.max_coords_per_tensor == 0 || opts.max_coords_per_tensor >= n) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (std::size_t i = 0; i < opts.max_coords_per_tensor; ++i) coords.push_back(rng.below(n));
    }
    double diff2 = 0.0, fd2 = 0.0;
    for (std::size_t c : coords) {
      const double orig = p->value[c];
      p->value[c] = orig + opts.step;
      const double up = eval();
      p->value[c] = orig - opts.step;
      const double down = eval();
      p->value[c] = orig;
      const double fd = (up - down) / (2.0 * opts.step);
      const double d = p->grad[c] - fd;
      diff2 += d * d;
      fd2 += fd * fd;
    }
    const double err = std::sqrt(diff2) / (std::sqrt(fd2) + 1e-12);
    result.per_parameter.emplace_back(p->name, err);
    result.max_rel_error = std::max(result.max_rel_error, err);
  }
  return result;
}

}  // namespace adaor::nd
