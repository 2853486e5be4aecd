#ifndef HSFUSE_DIFFCORE_HPP
#define HSFUSE_DIFFCORE_HPP

#include <hsfuse/types.hpp>

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

// Reverse-mode differentiation over dense matrix-valued nodes. A Tape records
// primitive operations in topological order; backward() replays them once in
// reverse and accumulates cotangents into Parameter grad slots.
//
// Semantics:
//  - backward() recomputes node cotangents from scratch on every call, so a
//    second backward without zero_grad() exactly doubles parameter grads.
//  - reset() keeps node storage; training loops that rebuild the same graph
//    shape every iteration run allocation-free after the first pass.
//  - Cotangents are only propagated toward parameters. Constant leaves keep a
//    zero grad buffer and cost nothing in the backward pass.
//  - The tape is single-threaded. Parallel batch evaluation requires one
//    private tape per batch and a fixed gradient summation order.

namespace hsfuse::diff {

class Tape;

// A named weight matrix or bias vector with a persistent gradient slot.
struct Parameter {
  Mat value;
  Mat grad;

  explicit Parameter(Mat v) : value(std::move(v)) {
    grad = Mat::Zero(value.rows(), value.cols());
  }
  Parameter() = default;
};

// Insertion-ordered named parameter collection. Iteration order is the
// insertion order, which keeps optimizer updates and serialization
// deterministic.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Mat init);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  void zero_grad();

 private:
  std::vector<std::string> names_;
  std::vector<Parameter> params_;
};

// Handle into a tape node. Valid until the owning tape is reset.
struct Value {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Mat& data() const;
  const Mat& grad() const;
  Index rows() const { return data().rows(); }
  Index cols() const { return data().cols(); }
};

class Tape {
 public:
  using PullFn = std::function<void(Tape&, std::size_t self)>;

  // Constant input; never receives cotangents.
  Value leaf(const Mat& data);
  // Parameter input; backward adds the node cotangent into p.grad.
  Value param(Parameter& p);
  // New node of the given shape; the caller fills data_mut(id). `pull` reads
  // grad(self) and accumulates into the parents' grad buffers; it must honor
  // requires_grad() per parent. Open to other modules for custom primitives.
  Value alloc(Index rows, Index cols, PullFn pull, bool requires_grad);

  // loss must be 1x1. Zeroes the live cotangent buffers, seeds the loss with
  // 1 and replays the tape backward once.
  void backward(const Value& loss);

  void reset() { used_ = 0; }
  std::size_t size() const { return used_; }

  const Mat& data(std::size_t id) const { return nodes_[id].data; }
  Mat& data_mut(std::size_t id) { return nodes_[id].data; }
  const Mat& grad(std::size_t id) const { return nodes_[id].grad; }
  Mat& grad_mut(std::size_t id) { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].needs_grad; }

 private:
  struct Node {
    Mat data;
    Mat grad;
    PullFn pull;            // empty for leaves
    Parameter* slot = nullptr;
    bool needs_grad = false;  // some parameter is reachable from this node
    bool grad_dirty = false;
  };
  std::vector<Node> nodes_;
  std::size_t used_ = 0;

  Node& push(Index rows, Index cols, bool needs_grad);
};

// ---- primitives ----

// x:[p x a] * W:[a x b] (+ b:[1 x b] broadcast over rows).
Value affine(const Value& x, const Value& W, const std::optional<Value>& b = std::nullopt);

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);  // elementwise
Value div(const Value& a, const Value& b);  // elementwise
Value scalar_mul(const Value& a, double k);

Value sigmoid(const Value& x);   // strictly inside (0,1) for any finite input
Value softplus(const Value& x);  // overflow-safe, strictly positive
Value log(const Value& x);       // DomainError on any nonpositive entry
Value clamp_min(const Value& x, double m);  // zero gradient where clamped
Value arccos(const Value& x);    // input clamped to [-1+1e-12, 1-1e-12]
Value square(const Value& x);
Value sqrt(const Value& x);
Value pow_scalar(const Value& x, double p);  // x >= 0 elementwise
Value take_cols(const Value& x, Index first, Index count);

Value sum(const Value& x);   // 1x1
Value mean(const Value& x);  // 1x1, sum / element count

// ---- finite-difference verification harness ----

struct GradCheckEntry {
  std::string param;
  Index row = 0, col = 0;
  double analytic = 0.0, numeric = 0.0, error = 0.0;
};

struct GradCheckReport {
  double max_error = 0.0;
  std::size_t coords_checked = 0;
  std::vector<GradCheckEntry> failures;  // entries with error > tol
  bool passed() const { return failures.empty(); }
};

// Builds the scalar loss on a fresh tape; must be deterministic.
using LossBuilder = std::function<Value(Tape&, ParamStore&)>;

// Central differences (f(t+h)-f(t-h))/2h per coordinate against the backward
// pass. error = |fd - bp| / max(1, |fd|, |bp|): relative above unit gradient
// magnitude, absolute below it. `subset` restricts which parameters are
// perturbed (empty = all).
GradCheckReport finite_diff_check(const LossBuilder& f, ParamStore& params, double h,
                                  double tol, const std::vector<std::string>& subset = {});

}  // namespace hsfuse::diff

#endif
