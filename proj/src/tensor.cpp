#include "t2i/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>

namespace t2i {

namespace {
std::atomic<bool> g_debug_checks{true};
thread_local Tape* g_active_tape = nullptr;
std::atomic<std::uint64_t> g_tape_counter{1};

std::int64_t numel_of(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}
}  // namespace

bool debug_checks() { return g_debug_checks.load(std::memory_order_relaxed); }
void set_debug_checks(bool on) { g_debug_checks.store(on, std::memory_order_relaxed); }

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  for (int d : shape_) require(d > 0, "tensor dims must be positive, got " + shape_str(shape_));
  data_ = std::make_shared<std::vector<real>>(static_cast<std::size_t>(numel_of(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<real> values) : shape_(std::move(shape)) {
  for (int d : shape_) require(d > 0, "tensor dims must be positive, got " + shape_str(shape_));
  require(static_cast<std::int64_t>(values.size()) == numel_of(shape_),
          "value count does not match shape " + shape_str(shape_));
  data_ = std::make_shared<std::vector<real>>(std::move(values));
  if (debug_checks()) check_finite("tensor construction");
}

Tensor Tensor::full(std::vector<int> shape, real v) {
  Tensor t(std::move(shape));
  std::fill(t.data_->begin(), t.data_->end(), v);
  return t;
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, real stdev) {
  Tensor t(std::move(shape));
  for (real& v : *t.data_) v = rng.normal() * stdev;
  return t;
}

Tensor Tensor::uniform(std::vector<int> shape, Rng& rng, real lo, real hi) {
  Tensor t(std::move(shape));
  for (real& v : *t.data_) v = rng.uniform(lo, hi);
  return t;
}

std::int64_t Tensor::numel() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }

real Tensor::value() const {
  require(defined() && numel() == 1, "value() requires a scalar tensor");
  return (*data_)[0];
}

real Tensor::at(std::initializer_list<int> idx) const {
  require(static_cast<int>(idx.size()) == ndim(), "at(): index rank mismatch");
  std::int64_t off = 0;
  int d = 0;
  for (int i : idx) {
    require(i >= 0 && i < shape_[static_cast<std::size_t>(d)], "at(): index out of range");
    off = off * shape_[static_cast<std::size_t>(d)] + i;
    ++d;
  }
  return (*data_)[static_cast<std::size_t>(off)];
}

Tensor& Tensor::set_trainable(bool on) {
  if (on) {
    if (!grad_) grad_ = std::make_shared<std::vector<real>>(data_->size(), 0.0);
  } else {
    grad_.reset();
  }
  return *this;
}

const std::vector<real>& Tensor::grad() const {
  require(grad_ != nullptr, "tensor has no gradient accumulator");
  return *grad_;
}

std::vector<real>& Tensor::grad() {
  require(grad_ != nullptr, "tensor has no gradient accumulator");
  return *grad_;
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = std::make_shared<std::vector<real>>(*data_);
  return t;
}

Tensor Tensor::detached() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

void Tensor::check_finite(const char* what) const {
  for (real v : *data_) {
    if (!std::isfinite(v)) fail(std::string("non-finite value in ") + what);
  }
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tape::Tape() : id_(g_tape_counter.fetch_add(1)) {}
Tape::~Tape() = default;

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

int Tape::input_node(const Tensor& t) {
  if (t.tape_id_ == id_ && t.node_ >= 0) return t.node_;
  if (!t.grad_) return -1;
  // Trainable leaf seen for the first time on this tape: record a node whose
  // backward flushes into the tensor's accumulator. Duplicate leaf nodes for
  // the same storage are harmless; each accumulates into the same buffer.
  auto acc = t.grad_;
  int n = record(t.numel(), {}, [acc](Tape&, const std::vector<real>& g) {
    for (std::size_t i = 0; i < g.size(); ++i) (*acc)[i] += g[i];
  });
  t.tape_id_ = id_;
  t.node_ = n;
  return n;
}

int Tape::record(std::int64_t out_numel, std::vector<int> parents, BackFn back) {
  for (int p : parents)
    require(p < static_cast<int>(nodes_.size()), "tape parents must precede the node");
  nodes_.push_back(Node{out_numel, std::move(parents), std::move(back)});
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::set_result(Tensor& out, int node) const {
  out.tape_id_ = id_;
  out.node_ = node;
}

std::vector<real>& Tape::grad_buf(int node) {
  auto& g = grads_[static_cast<std::size_t>(node)];
  if (g.empty()) g.assign(static_cast<std::size_t>(nodes_[static_cast<std::size_t>(node)].numel), 0.0);
  return g;
}

void Tape::backward(const Tensor& loss) {
  require(loss.numel() == 1, "backward requires a scalar loss");
  require(loss.tape_id_ == id_ && loss.node_ >= 0, "loss is not recorded on this tape");
  grads_.assign(nodes_.size(), {});
  grad_buf(loss.node_)[0] = 1.0;
  for (int i = loss.node_; i >= 0; --i) {
    auto& g = grads_[static_cast<std::size_t>(i)];
    if (g.empty()) continue;  // node does not influence the loss
    if (nodes_[static_cast<std::size_t>(i)].back) nodes_[static_cast<std::size_t>(i)].back(*this, g);
    g.clear();
    g.shrink_to_fit();
  }
  grads_.clear();
}

// ---------------------------------------------------------------------------
// Broadcasting machinery
// ---------------------------------------------------------------------------

namespace {

std::vector<int> broadcast_shape(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t rank = std::max(a.size(), b.size());
  std::vector<int> out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    int da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    int db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da == db || da == 1 || db == 1) {
      out[i] = std::max(da, db);
    } else {
      fail("shapes not broadcast-compatible: " + shape_str(a) + " vs " + shape_str(b));
    }
  }
  return out;
}

// Element strides of `shape` when aligned (right-justified) into `out`;
// broadcast dimensions get stride 0.
std::vector<std::int64_t> aligned_strides(const std::vector<int>& shape,
                                          const std::vector<int>& out) {
  std::vector<std::int64_t> full(out.size(), 0);
  std::int64_t s = 1;
  for (std::size_t i = shape.size(); i-- > 0;) {
    std::size_t oi = i + (out.size() - shape.size());
    full[oi] = (shape[i] == 1 && out[oi] != 1) ? 0 : s;
    s *= shape[i];
  }
  return full;
}

// Walks every element of `out_shape`, calling f(out_idx, a_idx, b_idx).
template <class F>
void for_each_broadcast(const std::vector<int>& out_shape, const std::vector<std::int64_t>& sa,
                        const std::vector<std::int64_t>& sb, F&& f) {
  std::int64_t n = numel_of(out_shape);
  int rank = static_cast<int>(out_shape.size());
  std::vector<int> c(static_cast<std::size_t>(rank), 0);
  std::int64_t ao = 0, bo = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    f(i, ao, bo);
    for (int d = rank - 1; d >= 0; --d) {
      auto du = static_cast<std::size_t>(d);
      if (++c[du] < out_shape[du]) {
        ao += sa[du];
        bo += sb[du];
        break;
      }
      c[du] = 0;
      ao -= sa[du] * (out_shape[du] - 1);
      bo -= sb[du] * (out_shape[du] - 1);
    }
  }
}

void check_result(const Tensor& t, const char* op) {
  if (debug_checks()) t.check_finite(op);
}

enum class BinKind { Add, Sub, Mul, Div };

Tensor binary_op(BinKind kind, const Tensor& a, const Tensor& b, const char* name) {
  require(a.defined() && b.defined(), std::string(name) + ": undefined operand");
  auto out_shape = broadcast_shape(a.shape(), b.shape());
  auto sa = aligned_strides(a.shape(), out_shape);
  auto sb = aligned_strides(b.shape(), out_shape);
  Tensor out(out_shape);
  const real* pa = a.data();
  const real* pb = b.data();
  real* po = out.data();
  switch (kind) {
    case BinKind::Add:
      for_each_broadcast(out_shape, sa, sb,
                         [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { po[i] = pa[ia] + pb[ib]; });
      break;
    case BinKind::Sub:
      for_each_broadcast(out_shape, sa, sb,
                         [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { po[i] = pa[ia] - pb[ib]; });
      break;
    case BinKind::Mul:
      for_each_broadcast(out_shape, sa, sb,
                         [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { po[i] = pa[ia] * pb[ib]; });
      break;
    case BinKind::Div:
      if (debug_checks()) {
        for (std::int64_t i = 0; i < b.numel(); ++i)
          if (pb[i] == 0.0) fail("division by zero");
      }
      for_each_broadcast(out_shape, sa, sb,
                         [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { po[i] = pa[ia] / pb[ib]; });
      break;
  }
  check_result(out, name);

  Tape* tape = Tape::active();
  if (!tape) return out;
  int na = tape->input_node(a);
  int nb = tape->input_node(b);
  if (na < 0 && nb < 0) return out;

  auto da = std::make_shared<Tensor>(a.detached());
  auto db = std::make_shared<Tensor>(b.detached());
  std::vector<int> parents;
  if (na >= 0) parents.push_back(na);
  if (nb >= 0) parents.push_back(nb);
  int node = tape->record(
      out.numel(), parents,
      [=, os = out_shape](Tape& t, const std::vector<real>& g) {
        real* ga = na >= 0 ? t.grad_buf(na).data() : nullptr;
        real* gb = nb >= 0 ? t.grad_buf(nb).data() : nullptr;
        const real* va = da->data();
        const real* vb = db->data();
        switch (kind) {
          case BinKind::Add:
            for_each_broadcast(os, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
              if (ga) ga[ia] += g[i];
              if (gb) gb[ib] += g[i];
            });
            break;
          case BinKind::Sub:
            for_each_broadcast(os, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
              if (ga) ga[ia] += g[i];
              if (gb) gb[ib] -= g[i];
            });
            break;
          case BinKind::Mul:
            for_each_broadcast(os, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
              if (ga) ga[ia] += g[i] * vb[ib];
              if (gb) gb[ib] += g[i] * va[ia];
            });
            break;
          case BinKind::Div:
            for_each_broadcast(os, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
              if (ga) ga[ia] += g[i] / vb[ib];
              if (gb) gb[ib] -= g[i] * va[ia] / (vb[ib] * vb[ib]);
            });
            break;
        }
      });
  tape->set_result(out, node);
  return out;
}

// Unary elementwise helper. `fwd` maps x to y; `bwd` maps (x, y, gout) to gin.
template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& x, const char* name, Fwd fwd, Bwd bwd) {
  require(x.defined(), std::string(name) + ": undefined operand");
  Tensor out(x.shape());
  const real* px = x.data();
  real* po = out.data();
  std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = fwd(px[i]);
  check_result(out, name);

  Tape* tape = Tape::active();
  if (!tape) return out;
  int nx = tape->input_node(x);
  if (nx < 0) return out;
  auto dx = std::make_shared<Tensor>(x.detached());
  auto dy = std::make_shared<Tensor>(out.detached());
  int node = tape->record(n, {nx}, [=](Tape& t, const std::vector<real>& g) {
    real* gx = t.grad_buf(nx).data();
    const real* vx = dx->data();
    const real* vy = dy->data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += bwd(vx[i], vy[i], g[i]);
  });
  tape->set_result(out, node);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(BinKind::Add, a, b, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(BinKind::Sub, a, b, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(BinKind::Mul, a, b, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op(BinKind::Div, a, b, "div"); }

Tensor neg(const Tensor& x) {
  return unary_op(
      x, "neg", [](real v) { return -v; }, [](real, real, real g) { return -g; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, "relu", [](real v) { return v > 0 ? v : 0; },
      [](real v, real, real g) { return v > 0 ? g : 0; });
}

Tensor leaky_relu(const Tensor& x, real slope) {
  return unary_op(
      x, "leaky_relu", [slope](real v) { return v > 0 ? v : slope * v; },
      [slope](real v, real, real g) { return v > 0 ? g : slope * g; });
}

Tensor tanh_op(const Tensor& x) {
  return unary_op(
      x, "tanh", [](real v) { return std::tanh(v); },
      [](real, real y, real g) { return g * (1.0 - y * y); });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, "sigmoid",
      [](real v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](real, real y, real g) { return g * y * (1.0 - y); });
}

Tensor square(const Tensor& x) {
  return unary_op(
      x, "square", [](real v) { return v * v; }, [](real v, real, real g) { return 2.0 * v * g; });
}

Tensor sqrt_op(const Tensor& x) {
  if (debug_checks()) {
    for (std::int64_t i = 0; i < x.numel(); ++i)
      if (x.data()[i] < 0) fail("sqrt of negative value");
  }
  return unary_op(
      x, "sqrt", [](real v) { return std::sqrt(v); },
      [](real, real y, real g) { return y > 0 ? g / (2.0 * y) : 0.0; });
}

Tensor log_op(const Tensor& x) {
  if (debug_checks()) {
    for (std::int64_t i = 0; i < x.numel(); ++i)
      if (x.data()[i] <= 0) fail("log of non-positive value");
  }
  return unary_op(
      x, "log", [](real v) { return std::log(v); }, [](real v, real, real g) { return g / v; });
}

Tensor exp_op(const Tensor& x) {
  return unary_op(
      x, "exp", [](real v) { return std::exp(v); }, [](real, real y, real g) { return g * y; });
}

Tensor scale(const Tensor& x, real c) {
  return unary_op(
      x, "scale", [c](real v) { return c * v; }, [c](real, real, real g) { return c * g; });
}

Tensor add_scalar(const Tensor& x, real c) {
  return unary_op(
      x, "add_scalar", [c](real v) { return v + c; }, [](real, real, real g) { return g; });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  require(numel_of(shape) == x.numel(),
          "reshape: element count mismatch " + shape_str(x.shape()) + " -> " + shape_str(shape));
  Tensor shaped(std::move(shape), x.values());
  Tape* tape = Tape::active();
  if (!tape) return shaped;
  int nx = tape->input_node(x);
  if (nx < 0) return shaped;
  int node = tape->record(x.numel(), {nx}, [nx](Tape& t, const std::vector<real>& g) {
    real* gx = t.grad_buf(nx).data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
  tape->set_result(shaped, node);
  return shaped;
}

Tensor transpose2d(const Tensor& x) {
  require(x.ndim() == 2, "transpose2d expects a 2-D tensor, got " + shape_str(x.shape()));
  int m = x.dim(0), n = x.dim(1);
  Tensor out({n, m});
  const real* px = x.data();
  real* po = out.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) po[j * m + i] = px[i * n + j];
  Tape* tape = Tape::active();
  if (!tape) return out;
  int nx = tape->input_node(x);
  if (nx < 0) return out;
  int node = tape->record(out.numel(), {nx}, [=](Tape& t, const std::vector<real>& g) {
    real* gx = t.grad_buf(nx).data();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) gx[i * n + j] += g[static_cast<std::size_t>(j) * m + i];
  });
  tape->set_result(out, node);
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  require(!parts.empty(), "concat of zero tensors");
  const auto& s0 = parts[0].shape();
  require(axis >= 0 && axis < static_cast<int>(s0.size()), "concat axis out of range");
  std::vector<int> out_shape = s0;
  for (std::size_t p = 1; p < parts.size(); ++p) {
    const auto& s = parts[p].shape();
    require(s.size() == s0.size(), "concat rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d)
      if (static_cast<int>(d) != axis)
        require(s[d] == s0[d], "concat shape mismatch " + shape_str(s) + " vs " + shape_str(s0));
    out_shape[static_cast<std::size_t>(axis)] += s[static_cast<std::size_t>(axis)];
  }

  // outer: product of dims before axis; inner: product after.
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s0[static_cast<std::size_t>(d)];
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < s0.size(); ++d) inner *= s0[d];

  Tensor out(out_shape);
  real* po = out.data();
  std::int64_t out_axis = out_shape[static_cast<std::size_t>(axis)];
  std::int64_t pos = 0;
  std::vector<std::int64_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(pos);
    std::int64_t ax = p.shape()[static_cast<std::size_t>(axis)];
    const real* pp = p.data();
    for (std::int64_t o = 0; o < outer; ++o)
      std::memcpy(po + (o * out_axis + pos) * inner, pp + o * ax * inner,
                  static_cast<std::size_t>(ax * inner) * sizeof(real));
    pos += ax;
  }

  Tape* tape = Tape::active();
  if (!tape) return out;
  std::vector<int> pnodes;
  bool any = false;
  for (const auto& p : parts) {
    int n = tape->input_node(p);
    pnodes.push_back(n);
    any = any || n >= 0;
  }
  if (!any) return out;
  std::vector<std::int64_t> axes;
  for (const auto& p : parts) axes.push_back(p.shape()[static_cast<std::size_t>(axis)]);
  std::vector<int> parents;
  for (int n : pnodes)
    if (n >= 0) parents.push_back(n);
  int node = tape->record(
      out.numel(), parents, [=](Tape& t, const std::vector<real>& g) {
        for (std::size_t p = 0; p < pnodes.size(); ++p) {
          if (pnodes[p] < 0) continue;
          real* gp = t.grad_buf(pnodes[p]).data();
          for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t i = 0; i < axes[p] * inner; ++i)
              gp[o * axes[p] * inner + i] += g[static_cast<std::size_t>((o * out_axis + offsets[p]) * inner + i)];
        }
      });
  tape->set_result(out, node);
  return out;
}

Tensor select0(const Tensor& x, int i) {
  require(x.ndim() >= 1, "select0 needs rank >= 1");
  require(i >= 0 && i < x.dim(0), "select0 index out of range");
  std::vector<int> out_shape(x.shape().begin() + 1, x.shape().end());
  if (out_shape.empty()) out_shape = {1};
  std::int64_t stride = numel_of(out_shape);
  Tensor out(out_shape);
  std::memcpy(out.data(), x.data() + i * stride, static_cast<std::size_t>(stride) * sizeof(real));
  Tape* tape = Tape::active();
  if (!tape) return out;
  int nx = tape->input_node(x);
  if (nx < 0) return out;
  int node = tape->record(stride, {nx}, [=](Tape& t, const std::vector<real>& g) {
    real* gx = t.grad_buf(nx).data();
    for (std::int64_t j = 0; j < stride; ++j) gx[i * stride + j] += g[static_cast<std::size_t>(j)];
  });
  tape->set_result(out, node);
  return out;
}

Tensor slice1d(const Tensor& x, int offset, int len) {
  require(x.ndim() == 1, "slice1d expects a 1-D tensor");
  require(offset >= 0 && len > 0 && offset + len <= x.dim(0), "slice1d range out of bounds");
  Tensor out({len});
  std::memcpy(out.data(), x.data() + offset, static_cast<std::size_t>(len) * sizeof(real));
  Tape* tape = Tape::active();
  if (!tape) return out;
  int nx = tape->input_node(x);
  if (nx < 0) return out;
  int node = tape->record(len, {nx}, [=](Tape& t, const std::vector<real>& g) {
    real* gx = t.grad_buf(nx).data();
    for (int j = 0; j < len; ++j) gx[offset + j] += g[static_cast<std::size_t>(j)];
  });
  tape->set_result(out, node);
  return out;
}

Tensor broadcast_spatial(const Tensor& x, int h, int w) {
  require(x.ndim() == 2, "broadcast_spatial expects [N x C]");
  int n = x.dim(0), c = x.dim(1);
  Tensor out({n, c, h, w});
  const real* px = x.data();
  real* po = out.data();
  std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n) * c; ++i)
    for (std::int64_t j = 0; j < hw; ++j) po[i * hw + j] = px[i];
  Tape* tape = Tape::active();
  if (!tape) return out;
  int nx = tape->input_node(x);
  if (nx < 0) return out;
  int node = tape->record(out.numel(), {nx}, [=](Tape& t, const std::vector<real>& g) {
    real* gx = t.grad_buf(nx).data();
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n) * c; ++i) {
      real s = 0;
      for (std::int64_t j = 0; j < hw; ++j) s += g[static_cast<std::size_t>(i * hw + j)];
      gx[i] += s;
    }
  });
  tape->set_result(out, node);
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  real s = 0;
  const real* px = x.data();
  for (std::int64_t i = 0; i < x.numel(); ++i) s += px[i];
  Tensor out = Tensor::scalar(s);
  Tape* tape = Tape::active();
  if (!tape) return out;
  int nx = tape->input_node(x);
  if (nx < 0) return out;
  std::int64_t n = x.numel();
  int node = tape->record(1, {nx}, [=](Tape& t, const std::vector<real>& g) {
    real* gx = t.grad_buf(nx).data();
    for (std::int64_t i = 0; i < n; ++i) gx[i] += g[0];
  });
  tape->set_result(out, node);
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<real>(x.numel())); }

Tensor sum_axis(const Tensor& x, int axis, bool keepdim) {
  require(axis >= 0 && axis < x.ndim(), "sum_axis: axis out of range");
  std::vector<int> out_shape;
  for (int d = 0; d < x.ndim(); ++d) {
    if (d == axis) {
      if (keepdim) out_shape.push_back(1);
    } else {
      out_shape.push_back(x.dim(d));
    }
  }
  if (out_shape.empty()) out_shape = {1};
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (int d = axis + 1; d < x.ndim(); ++d) inner *= x.dim(d);
  std::int64_t ax = x.dim(axis);

  Tensor out(out_shape);
  const real* px = x.data();
  real* po = out.data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = 0; i < inner; ++i) {
      real s = 0;
      for (std::int64_t a = 0; a < ax; ++a) s += px[(o * ax + a) * inner + i];
      po[o * inner + i] = s;
    }

  Tape* tape = Tape::active();
  if (!tape) return out;
  int nx = tape->input_node(x);
  if (nx < 0) return out;
  int node = tape->record(out.numel(), {nx}, [=](Tape& t, const std::vector<real>& g) {
    real* gx = t.grad_buf(nx).data();
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t a = 0; a < ax; ++a)
        for (std::int64_t i = 0; i < inner; ++i)
          gx[(o * ax + a) * inner + i] += g[static_cast<std::size_t>(o * inner + i)];
  });
  tape->set_result(out, node);
  return out;
}

// ---------------------------------------------------------------------------
// matmul / conv2d / upsample
// ---------------------------------------------------------------------------

namespace {
// C[M x N] += A[M x K] * B[K x N]
void gemm_acc(const real* a, const real* b, real* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      real av = a[i * k + p];
      if (av == 0.0) continue;
      const real* brow = b + static_cast<std::int64_t>(p) * n;
      real* crow = c + static_cast<std::int64_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}
// C[M x N] += A[M x K] * B^T where Bt is [N x K]
void gemm_bt_acc(const real* a, const real* bt, real* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      real s = 0;
      const real* arow = a + static_cast<std::int64_t>(i) * k;
      const real* brow = bt + static_cast<std::int64_t>(j) * k;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[static_cast<std::int64_t>(i) * n + j] += s;
    }
}
// C[K x N] += A^T * B where A is [M x K], B is [M x N]
void gemm_at_acc(const real* a, const real* b, real* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      real av = a[static_cast<std::int64_t>(i) * k + p];
      if (av == 0.0) continue;
      const real* brow = b + static_cast<std::int64_t>(i) * n;
      real* crow = c + static_cast<std::int64_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(b.ndim() == 2, "matmul: b must be 2-D");
  require(a.ndim() == 2 || a.ndim() == 3, "matmul: a must be 2-D or batched 3-D");
  int batch = a.ndim() == 3 ? a.dim(0) : 1;
  int m = a.dim(a.ndim() - 2);
  int k = a.dim(a.ndim() - 1);
  require(k == b.dim(0), "matmul: inner dimensions disagree " + shape_str(a.shape()) + " * " +
                             shape_str(b.shape()));
  int n = b.dim(1);
  std::vector<int> out_shape = a.ndim() == 3 ? std::vector<int>{batch, m, n} : std::vector<int>{m, n};
  Tensor out(out_shape);
  const real* pa = a.data();
  const real* pb = b.data();
  real* po = out.data();
  for (int bi = 0; bi < batch; ++bi)
    gemm_acc(pa + static_cast<std::int64_t>(bi) * m * k, pb, po + static_cast<std::int64_t>(bi) * m * n,
             m, k, n);
  check_result(out, "matmul");

  Tape* tape = Tape::active();
  if (!tape) return out;
  int na = tape->input_node(a);
  int nb = tape->input_node(b);
  if (na < 0 && nb < 0) return out;
  auto da = std::make_shared<Tensor>(a.detached());
  auto db = std::make_shared<Tensor>(b.detached());
  std::vector<int> parents;
  if (na >= 0) parents.push_back(na);
  if (nb >= 0) parents.push_back(nb);
  int node = tape->record(out.numel(), parents, [=](Tape& t, const std::vector<real>& g) {
    const real* va = da->data();
    const real* vb = db->data();
    for (int bi = 0; bi < batch; ++bi) {
      const real* gout = g.data() + static_cast<std::int64_t>(bi) * m * n;
      if (na >= 0) {
        real* ga = t.grad_buf(na).data() + static_cast<std::int64_t>(bi) * m * k;
        gemm_bt_acc(gout, vb, ga, m, n, k);  // dA = dC * B^T
      }
      if (nb >= 0) {
        real* gb = t.grad_buf(nb).data();
        gemm_at_acc(va + static_cast<std::int64_t>(bi) * m * k, gout, gb, m, k, n);  // dB += A^T * dC
      }
    }
  });
  tape->set_result(out, node);
  return out;
}

namespace {

// Valid output range along one spatial axis for a fixed kernel offset:
// positions yo with 0 <= yo*stride - pad + koff < extent.
struct ConvRange {
  int lo, hi;  // half-open
};

ConvRange conv_range(int out_extent, int in_extent, int stride, int pad, int koff) {
  int lo = 0;
  int shift = pad - koff;
  if (shift > 0) lo = (shift + stride - 1) / stride;
  int hi_num = in_extent - 1 + pad - koff;
  int hi = hi_num < 0 ? 0 : hi_num / stride + 1;
  if (hi > out_extent) hi = out_extent;
  if (lo > hi) lo = hi;
  return {lo, hi};
}

struct ConvDims {
  int n, c, h, w, o, kh, kw, oh, ow, stride, pad;
};

// out[ni, oi] plane for one (ni, oi); branch-free inner loops.
void conv_forward_plane(const ConvDims& d, const real* xbase, const real* pk, real bias_v,
                        real* oplane, int ni, int oi) {
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(d.oh) * d.ow; ++i) oplane[i] = bias_v;
  for (int ci = 0; ci < d.c; ++ci) {
    const real* xplane = xbase + (static_cast<std::int64_t>(ni) * d.c + ci) * d.h * d.w;
    const real* kbase = pk + ((static_cast<std::int64_t>(oi) * d.c + ci) * d.kh) * d.kw;
    for (int ki = 0; ki < d.kh; ++ki) {
      ConvRange yr = conv_range(d.oh, d.h, d.stride, d.pad, ki);
      for (int kj = 0; kj < d.kw; ++kj) {
        real kv = kbase[ki * d.kw + kj];
        if (kv == 0.0) continue;
        ConvRange xr = conv_range(d.ow, d.w, d.stride, d.pad, kj);
        for (int yo = yr.lo; yo < yr.hi; ++yo) {
          int yi = yo * d.stride - d.pad + ki;
          const real* xrow = xplane + static_cast<std::int64_t>(yi) * d.w - d.pad + kj;
          real* orow = oplane + static_cast<std::int64_t>(yo) * d.ow;
          if (d.stride == 1) {
            for (int xo = xr.lo; xo < xr.hi; ++xo) orow[xo] += kv * xrow[xo];
          } else {
            for (int xo = xr.lo; xo < xr.hi; ++xo) orow[xo] += kv * xrow[xo * d.stride];
          }
        }
      }
    }
  }
}

// dX plane accumulation for one ni (all output channels).
void conv_backward_input(const ConvDims& d, const real* g, const real* vk, real* gx, int ni) {
  for (int oi = 0; oi < d.o; ++oi) {
    const real* gplane = g + (static_cast<std::int64_t>(ni) * d.o + oi) * d.oh * d.ow;
    for (int ci = 0; ci < d.c; ++ci) {
      real* gxplane = gx + (static_cast<std::int64_t>(ni) * d.c + ci) * d.h * d.w;
      const real* kbase = vk + ((static_cast<std::int64_t>(oi) * d.c + ci) * d.kh) * d.kw;
      for (int ki = 0; ki < d.kh; ++ki) {
        ConvRange yr = conv_range(d.oh, d.h, d.stride, d.pad, ki);
        for (int kj = 0; kj < d.kw; ++kj) {
          real kv = kbase[ki * d.kw + kj];
          if (kv == 0.0) continue;
          ConvRange xr = conv_range(d.ow, d.w, d.stride, d.pad, kj);
          for (int yo = yr.lo; yo < yr.hi; ++yo) {
            int yi = yo * d.stride - d.pad + ki;
            real* gxrow = gxplane + static_cast<std::int64_t>(yi) * d.w - d.pad + kj;
            const real* grow = gplane + static_cast<std::int64_t>(yo) * d.ow;
            if (d.stride == 1) {
              for (int xo = xr.lo; xo < xr.hi; ++xo) gxrow[xo] += kv * grow[xo];
            } else {
              for (int xo = xr.lo; xo < xr.hi; ++xo) gxrow[xo * d.stride] += kv * grow[xo];
            }
          }
        }
      }
    }
  }
}

// dK and dBias for one output channel (accumulated over the batch).
void conv_backward_kernel(const ConvDims& d, const real* g, const real* vx, real* gk, real* gb,
                          int oi) {
  for (int ni = 0; ni < d.n; ++ni) {
    const real* gplane = g + (static_cast<std::int64_t>(ni) * d.o + oi) * d.oh * d.ow;
    if (gb) {
      real s = 0;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(d.oh) * d.ow; ++i) s += gplane[i];
      gb[oi] += s;
    }
    for (int ci = 0; ci < d.c; ++ci) {
      const real* xplane = vx + (static_cast<std::int64_t>(ni) * d.c + ci) * d.h * d.w;
      real* gkbase = gk ? gk + ((static_cast<std::int64_t>(oi) * d.c + ci) * d.kh) * d.kw : nullptr;
      if (!gkbase) continue;
      for (int ki = 0; ki < d.kh; ++ki) {
        ConvRange yr = conv_range(d.oh, d.h, d.stride, d.pad, ki);
        for (int kj = 0; kj < d.kw; ++kj) {
          ConvRange xr = conv_range(d.ow, d.w, d.stride, d.pad, kj);
          real acc = 0;
          for (int yo = yr.lo; yo < yr.hi; ++yo) {
            int yi = yo * d.stride - d.pad + ki;
            const real* xrow = xplane + static_cast<std::int64_t>(yi) * d.w - d.pad + kj;
            const real* grow = gplane + static_cast<std::int64_t>(yo) * d.ow;
            if (d.stride == 1) {
              for (int xo = xr.lo; xo < xr.hi; ++xo) acc += grow[xo] * xrow[xo];
            } else {
              for (int xo = xr.lo; xo < xr.hi; ++xo) acc += grow[xo] * xrow[xo * d.stride];
            }
          }
          gkbase[ki * d.kw + kj] += acc;
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias, int stride, int pad) {
  require(x.ndim() == 4, "conv2d: input must be NCHW");
  require(k.ndim() == 4, "conv2d: kernel must be OCKK");
  require(bias.ndim() == 1, "conv2d: bias must be 1-D");
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  int o = k.dim(0), kc = k.dim(1), kh = k.dim(2), kw = k.dim(3);
  require(kc == c, "conv2d: channel mismatch " + shape_str(x.shape()) + " vs " + shape_str(k.shape()));
  require(bias.dim(0) == o, "conv2d: bias length must equal output channels");
  require(h + 2 * pad >= kh && w + 2 * pad >= kw, "conv2d: spatial dims too small for kernel");
  ConvDims d{n, c, h, w, o, kh, kw, (h + 2 * pad - kh) / stride + 1,
             (w + 2 * pad - kw) / stride + 1, stride, pad};

  Tensor out({n, o, d.oh, d.ow});
  const real* px = x.data();
  const real* pk = k.data();
  const real* pb = bias.data();
  real* po = out.data();

  std::int64_t work = static_cast<std::int64_t>(n) * o * d.oh * d.ow * c * kh * kw;
  parallel_for(static_cast<std::int64_t>(n) * o, work, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t idx = lo; idx < hi; ++idx) {
      int ni = static_cast<int>(idx / o);
      int oi = static_cast<int>(idx % o);
      conv_forward_plane(d, px, pk, pb[oi],
                         po + (static_cast<std::int64_t>(ni) * o + oi) * d.oh * d.ow, ni, oi);
    }
  });
  check_result(out, "conv2d");

  Tape* tape = Tape::active();
  if (!tape) return out;
  int nx = tape->input_node(x);
  int nk = tape->input_node(k);
  int nbias = tape->input_node(bias);
  if (nx < 0 && nk < 0 && nbias < 0) return out;
  auto dxv = std::make_shared<Tensor>(x.detached());
  auto dkv = std::make_shared<Tensor>(k.detached());
  std::vector<int> parents;
  for (int p : {nx, nk, nbias})
    if (p >= 0) parents.push_back(p);
  std::int64_t bwd_work = work;
  int node = tape->record(out.numel(), parents, [=](Tape& t, const std::vector<real>& g) {
    const real* vx = dxv->data();
    const real* vk = dkv->data();
    if (nx >= 0) {
      real* gx = t.grad_buf(nx).data();
      parallel_for(n, bwd_work, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t ni = lo; ni < hi; ++ni)
          conv_backward_input(d, g.data(), vk, gx, static_cast<int>(ni));
      });
    }
    if (nk >= 0 || nbias >= 0) {
      real* gk = nk >= 0 ? t.grad_buf(nk).data() : nullptr;
      real* gb = nbias >= 0 ? t.grad_buf(nbias).data() : nullptr;
      parallel_for(o, bwd_work, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t oi = lo; oi < hi; ++oi)
          conv_backward_kernel(d, g.data(), vx, gk, gb, static_cast<int>(oi));
      });
    }
  });
  tape->set_result(out, node);
  return out;
}

Tensor upsample_nearest2x(const Tensor& x) {
  require(x.ndim() == 4, "upsample_nearest2x: input must be NCHW");
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  const real* px = x.data();
  real* po = out.data();
  std::int64_t planes = static_cast<std::int64_t>(n) * c;
  for (std::int64_t p = 0; p < planes; ++p) {
    const real* xp = px + p * h * w;
    real* op = po + p * 4 * h * w;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        real v = xp[i * w + j];
        real* r0 = op + (2 * i) * (2 * w) + 2 * j;
        real* r1 = r0 + 2 * w;
        r0[0] = v;
        r0[1] = v;
        r1[0] = v;
        r1[1] = v;
      }
  }
  Tape* tape = Tape::active();
  if (!tape) return out;
  int nx = tape->input_node(x);
  if (nx < 0) return out;
  int node = tape->record(out.numel(), {nx}, [=](Tape& t, const std::vector<real>& g) {
    real* gx = t.grad_buf(nx).data();
    for (std::int64_t p = 0; p < planes; ++p) {
      real* gxp = gx + p * h * w;
      const real* gp = g.data() + p * 4 * h * w;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const real* r0 = gp + (2 * i) * (2 * w) + 2 * j;
          const real* r1 = r0 + 2 * w;
          gxp[i * w + j] += r0[0] + r0[1] + r1[0] + r1[1];
        }
    }
  });
  tape->set_result(out, node);
  return out;
}

// ---------------------------------------------------------------------------
// Statistics / normalization building blocks
// ---------------------------------------------------------------------------

namespace {
// mu_c and biased var_c over (N, H, W) for one channel.
void stats_of_channel(const real* px, int n, int c, int h, int w, int ci, real* mu, real* var) {
  std::int64_t hw = static_cast<std::int64_t>(h) * w;
  std::int64_t m = static_cast<std::int64_t>(n) * hw;
  real s = 0;
  for (int ni = 0; ni < n; ++ni) {
    const real* plane = px + (static_cast<std::int64_t>(ni) * c + ci) * hw;
    for (std::int64_t i = 0; i < hw; ++i) s += plane[i];
  }
  real mean = s / static_cast<real>(m);
  real sq = 0;
  for (int ni = 0; ni < n; ++ni) {
    const real* plane = px + (static_cast<std::int64_t>(ni) * c + ci) * hw;
    for (std::int64_t i = 0; i < hw; ++i) {
      real d = plane[i] - mean;
      sq += d * d;
    }
  }
  *mu = mean;
  *var = sq / static_cast<real>(m);
}
}  // namespace

std::pair<Tensor, Tensor> channel_stats(const Tensor& x) {
  require(x.ndim() == 4, "channel_stats: input must be NCHW");
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(static_cast<std::int64_t>(n) * h * w >= 1, "channel_stats: empty reduction");
  Tensor mu({c}), var({c});
  const real* px = x.data();
  for (int ci = 0; ci < c; ++ci)
    stats_of_channel(px, n, c, h, w, ci, mu.data() + ci, var.data() + ci);

  Tape* tape = Tape::active();
  if (!tape) return {mu, var};
  int nx = tape->input_node(x);
  if (nx < 0) return {mu, var};

  std::int64_t hw = static_cast<std::int64_t>(h) * w;
  real inv_m = 1.0 / (static_cast<real>(n) * static_cast<real>(hw));
  auto dx = std::make_shared<Tensor>(x.detached());
  auto dmu = std::make_shared<Tensor>(mu.detached());

  int mu_node = tape->record(c, {nx}, [=](Tape& t, const std::vector<real>& g) {
    real* gx = t.grad_buf(nx).data();
    for (int ci = 0; ci < c; ++ci) {
      real gv = g[static_cast<std::size_t>(ci)] * inv_m;
      if (gv == 0.0) continue;
      for (int ni = 0; ni < n; ++ni) {
        real* plane = gx + (static_cast<std::int64_t>(ni) * c + ci) * hw;
        for (std::int64_t i = 0; i < hw; ++i) plane[i] += gv;
      }
    }
  });
  tape->set_result(mu, mu_node);

  int var_node = tape->record(c, {nx}, [=](Tape& t, const std::vector<real>& g) {
    real* gx = t.grad_buf(nx).data();
    const real* vx = dx->data();
    const real* vmu = dmu->data();
    for (int ci = 0; ci < c; ++ci) {
      real gv = g[static_cast<std::size_t>(ci)] * 2.0 * inv_m;
      if (gv == 0.0) continue;
      for (int ni = 0; ni < n; ++ni) {
        const real* xplane = vx + (static_cast<std::int64_t>(ni) * c + ci) * hw;
        real* gplane = gx + (static_cast<std::int64_t>(ni) * c + ci) * hw;
        for (std::int64_t i = 0; i < hw; ++i) gplane[i] += gv * (xplane[i] - vmu[ci]);
      }
    }
  });
  tape->set_result(var, var_node);
  return {mu, var};
}

Tensor softmax(const Tensor& x, int axis) {
  require(axis >= 0 && axis < x.ndim(), "softmax: axis out of range");
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (int d = axis + 1; d < x.ndim(); ++d) inner *= x.dim(d);
  std::int64_t ax = x.dim(axis);

  Tensor out(x.shape());
  const real* px = x.data();
  real* po = out.data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = 0; i < inner; ++i) {
      real mx = -1e300;
      for (std::int64_t a = 0; a < ax; ++a) mx = std::max(mx, px[(o * ax + a) * inner + i]);
      real z = 0;
      for (std::int64_t a = 0; a < ax; ++a) {
        real e = std::exp(px[(o * ax + a) * inner + i] - mx);
        po[(o * ax + a) * inner + i] = e;
        z += e;
      }
      for (std::int64_t a = 0; a < ax; ++a) po[(o * ax + a) * inner + i] /= z;
    }
  check_result(out, "softmax");

  Tape* tape = Tape::active();
  if (!tape) return out;
  int nx = tape->input_node(x);
  if (nx < 0) return out;
  auto dy = std::make_shared<Tensor>(out.detached());
  int node = tape->record(out.numel(), {nx}, [=](Tape& t, const std::vector<real>& g) {
    real* gx = t.grad_buf(nx).data();
    const real* vy = dy->data();
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t i = 0; i < inner; ++i) {
        real dot = 0;
        for (std::int64_t a = 0; a < ax; ++a) {
          std::int64_t idx = (o * ax + a) * inner + i;
          dot += g[static_cast<std::size_t>(idx)] * vy[idx];
        }
        for (std::int64_t a = 0; a < ax; ++a) {
          std::int64_t idx = (o * ax + a) * inner + i;
          gx[idx] += vy[idx] * (g[static_cast<std::size_t>(idx)] - dot);
        }
      }
  });
  tape->set_result(out, node);
  return out;
}

Tensor l2_distance(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "l2_distance: shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  const real* pa = a.data();
  const real* pb = b.data();
  real s = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    real d = pa[i] - pb[i];
    s += d * d;
  }
  real dist = std::sqrt(s);
  Tensor out = Tensor::scalar(dist);
  Tape* tape = Tape::active();
  if (!tape) return out;
  int na = tape->input_node(a);
  int nb = tape->input_node(b);
  if (na < 0 && nb < 0) return out;
  auto da = std::make_shared<Tensor>(a.detached());
  auto db = std::make_shared<Tensor>(b.detached());
  std::vector<int> parents;
  if (na >= 0) parents.push_back(na);
  if (nb >= 0) parents.push_back(nb);
  std::int64_t n = a.numel();
  int node = tape->record(1, parents, [=](Tape& t, const std::vector<real>& g) {
    if (dist == 0.0) return;  // subgradient 0 at the kink
    real s0 = g[0] / dist;
    const real* va = da->data();
    const real* vb = db->data();
    real* ga = na >= 0 ? t.grad_buf(na).data() : nullptr;
    real* gb = nb >= 0 ? t.grad_buf(nb).data() : nullptr;
    for (std::int64_t i = 0; i < n; ++i) {
      real d = s0 * (va[i] - vb[i]);
      if (ga) ga[i] += d;
      if (gb) gb[i] -= d;
    }
  });
  tape->set_result(out, node);
  return out;
}

Tensor bce_with_logits(const Tensor& logits, const std::vector<real>& targets) {
  require(static_cast<std::int64_t>(targets.size()) == logits.numel(),
          "bce_with_logits: target count mismatch");
  const real* pl = logits.data();
  std::int64_t n = logits.numel();
  real loss = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    real l = pl[i];
    real t = targets[static_cast<std::size_t>(i)];
    // max(l,0) - l*t + log(1 + exp(-|l|))
    loss += std::max(l, 0.0) - l * t + std::log1p(std::exp(-std::abs(l)));
  }
  loss /= static_cast<real>(n);
  Tensor out = Tensor::scalar(loss);
  Tape* tape = Tape::active();
  if (!tape) return out;
  int nl = tape->input_node(logits);
  if (nl < 0) return out;
  auto dl = std::make_shared<Tensor>(logits.detached());
  auto tg = std::make_shared<std::vector<real>>(targets);
  int node = tape->record(1, {nl}, [=](Tape& t, const std::vector<real>& g) {
    real* gl = t.grad_buf(nl).data();
    const real* vl = dl->data();
    real s0 = g[0] / static_cast<real>(n);
    for (std::int64_t i = 0; i < n; ++i) {
      real l = vl[i];
      real sig = l >= 0 ? 1.0 / (1.0 + std::exp(-l)) : std::exp(l) / (1.0 + std::exp(l));
      gl[i] += s0 * (sig - (*tg)[static_cast<std::size_t>(i)]);
    }
  });
  tape->set_result(out, node);
  return out;
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           real step, real tol) {
  require(step > 0, "grad_check: step must be positive");
  Tensor probe = x.clone();
  probe.set_trainable();

  std::vector<real> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f(probe);
    require(loss.numel() == 1, "grad_check: f must be scalar-valued");
    tape.backward(loss);
    analytic = probe.grad();
  }

  GradCheckReport report;
  Tensor work = x.clone();
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    real orig = work.data()[i];
    work.data()[i] = orig + step;
    real up = f(work).value();
    work.data()[i] = orig - step;
    real down = f(work).value();
    work.data()[i] = orig;
    real numeric = (up - down) / (2.0 * step);
    real a = analytic[static_cast<std::size_t>(i)];
    real denom = std::max(std::abs(a) + std::abs(numeric), 1e-12);
    real rel = std::abs(a - numeric) / denom;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = i;
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace t2i
