#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "t2i/common.hpp"
#include "t2i/rng.hpp"

namespace t2i {

class Tape;

// Dense n-dimensional array of reals with an optional gradient accumulator.
// Copies share storage (value-semantic handle); no operation mutates its
// inputs, so shared storage is safe to read concurrently.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<real> values);

  static Tensor scalar(real v) { return Tensor({1}, {v}); }
  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, real v);
  static Tensor randn(std::vector<int> shape, Rng& rng, real stdev = 1.0);
  static Tensor uniform(std::vector<int> shape, Rng& rng, real lo, real hi);

  bool defined() const { return data_ != nullptr; }
  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const;

  real* data() { return data_->data(); }
  const real* data() const { return data_->data(); }
  std::vector<real>& values() { return *data_; }
  const std::vector<real>& values() const { return *data_; }

  // Scalar fetch; requires numel() == 1.
  real value() const;
  real at(std::initializer_list<int> idx) const;

  // Gradient accumulator. Only tensors marked trainable collect gradients
  // from Tape::backward; everything else is treated as a constant.
  Tensor& set_trainable(bool on = true);
  bool trainable() const { return grad_ != nullptr; }
  const std::vector<real>& grad() const;
  std::vector<real>& grad();
  void zero_grad();

  // True when both handles point at the same storage.
  bool shares_data(const Tensor& o) const { return data_ == o.data_; }
  const void* storage_id() const { return data_.get(); }

  Tensor clone() const;     // deep copy of values, no grad, no tape link
  Tensor detached() const;  // shares values, drops tape link and grad

  void check_finite(const char* what) const;

 private:
  std::vector<int> shape_;
  std::shared_ptr<std::vector<real>> data_;
  std::shared_ptr<std::vector<real>> grad_;
  // Cache of this tensor's node on the active tape (see Tape::input_node).
  mutable std::uint64_t tape_id_ = 0;
  mutable int node_ = -1;

  friend class Tape;
};

std::string shape_str(const std::vector<int>& s);

// Reverse-mode gradient tape. Operations executed while a TapeScope is
// alive append nodes in topological order; backward() replays them once in
// reverse. Single-threaded by contract.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  // Populates grad accumulators of every trainable tensor reachable from
  // `loss`, which must be a scalar recorded on this tape.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }

  // --- recording API (used by the ops in tensor.cpp) ---
  using BackFn = std::function<void(Tape&, const std::vector<real>&)>;
  // Returns the node id of `t` on this tape: its existing node if `t` is an
  // op result from this tape, a fresh leaf node if it is trainable, and -1
  // (constant) otherwise.
  int input_node(const Tensor& t);
  int record(std::int64_t out_numel, std::vector<int> parents, BackFn back);
  void set_result(Tensor& out, int node) const;
  // Gradient buffer for `node`, zero-initialized on first access.
  std::vector<real>& grad_buf(int node);
  bool alive(int node) const { return node >= 0 && node < static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    std::int64_t numel;
    std::vector<int> parents;
    BackFn back;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<real>> grads_;
  std::uint64_t id_;
};

// Makes `t` the active tape for the current thread until destruction.
class TapeScope {
 public:
  explicit TapeScope(Tape& t);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// ---- elementwise operations (broadcasting over leading or singleton dims) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, real slope = 0.2);
Tensor tanh_op(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt_op(const Tensor& x);
Tensor log_op(const Tensor& x);
Tensor exp_op(const Tensor& x);
Tensor scale(const Tensor& x, real c);       // c * x
Tensor add_scalar(const Tensor& x, real c);  // x + c

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

// ---- shape ops ----
Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor transpose2d(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, int axis);
// Row `i` along axis 0; result drops the leading axis.
Tensor select0(const Tensor& x, int i);
// Elements [offset, offset+len) of a 1-D tensor.
Tensor slice1d(const Tensor& x, int offset, int len);
// [N x C] -> [N x C x H x W], value replicated over the spatial grid.
Tensor broadcast_spatial(const Tensor& x, int h, int w);

// ---- reductions ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, int axis, bool keepdim = false);

// ---- linear algebra / conv ----
// a: [M x K] or [B x M x K]; b: [K x N].
Tensor matmul(const Tensor& a, const Tensor& b);
// x: [N x C x H x W], k: [O x C x KH x KW], bias: [O].
// Supported configs: 1x1 s1 p0, 3x3 s1 p1, 4x4 s2 p1 (and any consistent
// stride/pad combination with square kernels).
Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias, int stride,
              int pad);
Tensor upsample_nearest2x(const Tensor& x);

// ---- statistics / normalization building blocks ----
// Per-channel mean and biased variance over (N, H, W) of an NCHW input.
std::pair<Tensor, Tensor> channel_stats(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);
// Euclidean norm of (a - b); subgradient 0 at distance 0.
Tensor l2_distance(const Tensor& a, const Tensor& b);
// Mean over elements of BCE(sigmoid(logit_i), target_i); numerically stable.
Tensor bce_with_logits(const Tensor& logits, const std::vector<real>& targets);

// ---- gradient checking ----
struct GradCheckReport {
  real max_rel_err = 0.0;
  std::int64_t worst_index = -1;
  bool pass = false;
};

// Compares analytic gradients of the scalar-valued `f` at `x` against
// central finite differences. `f` must be pure.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, real step = 1e-5, real tol = 1e-4);

}  // namespace t2i
