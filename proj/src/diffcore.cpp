#include <hsfuse/diffcore.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace hsfuse::diff {

namespace {

constexpr double kArccosMargin = 1e-12;

void require_same_shape(const Value& a, const Value& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape " + shape_str(a.data()) +
                     " vs " + shape_str(b.data()));
  }
}

bool req2(const Value& a, const Value& b) {
  return a.tape->requires_grad(a.id) || b.tape->requires_grad(b.id);
}

}  // namespace

// ---- ParamStore ----

Parameter& ParamStore::add(const std::string& name, Mat init) {
  if (contains(name)) throw ContractError("ParamStore: duplicate parameter " + name);
  names_.push_back(name);
  params_.emplace_back(std::move(init));
  return params_.back();
}

Parameter& ParamStore::at(const std::string& name) {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return params_[i];
  throw ContractError("ParamStore: no parameter named " + name);
}

const Parameter& ParamStore::at(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return params_[i];
  throw ContractError("ParamStore: no parameter named " + name);
}

bool ParamStore::contains(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

// ---- Value / Tape ----

const Mat& Value::data() const { return tape->data(id); }
const Mat& Value::grad() const { return tape->grad(id); }

Tape::Node& Tape::push(Index rows, Index cols, bool needs_grad) {
  if (used_ == nodes_.size()) nodes_.emplace_back();
  Node& n = nodes_[used_++];
  const bool resized = n.data.rows() != rows || n.data.cols() != cols;
  if (resized) {
    n.data.resize(rows, cols);
    n.grad.resize(rows, cols);
  }
  // Fresh nodes must show a zero grad; skip the wipe when the reused buffer
  // is known clean.
  if (resized || n.grad_dirty) {
    n.grad.setZero();
    n.grad_dirty = false;
  }
  n.pull = nullptr;
  n.slot = nullptr;
  n.needs_grad = needs_grad;
  return n;
}

Value Tape::leaf(const Mat& data) {
  Node& n = push(data.rows(), data.cols(), /*needs_grad=*/false);
  n.data = data;
  return Value{this, used_ - 1};
}

Value Tape::param(Parameter& p) {
  Node& n = push(p.value.rows(), p.value.cols(), /*needs_grad=*/true);
  n.data = p.value;
  n.slot = &p;
  return Value{this, used_ - 1};
}

Value Tape::alloc(Index rows, Index cols, PullFn pull, bool requires_grad) {
  Node& n = push(rows, cols, requires_grad);
  n.pull = std::move(pull);
  return Value{this, used_ - 1};
}

void Tape::backward(const Value& loss) {
  if (loss.tape != this) throw ContractError("backward: loss from a different tape");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward: loss must be 1x1, got " + shape_str(loss.data()));
  }
  for (std::size_t i = 0; i < used_; ++i) {
    Node& n = nodes_[i];
    if (n.needs_grad) {
      n.grad.setZero();
      n.grad_dirty = true;
    }
  }
  nodes_[loss.id].grad(0, 0) = 1.0;
  nodes_[loss.id].grad_dirty = true;
  for (std::size_t i = used_; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad) continue;
    if (n.pull) n.pull(*this, i);
    if (n.slot) n.slot->grad += n.grad;
  }
}

// ---- primitives ----

Value affine(const Value& x, const Value& W, const std::optional<Value>& b) {
  if (x.cols() != W.rows()) {
    throw ShapeError("affine: x " + shape_str(x.data()) + " incompatible with W " +
                     shape_str(W.data()));
  }
  if (b && (b->rows() != 1 || b->cols() != W.cols())) {
    throw ShapeError("affine: bias " + shape_str(b->data()) + " must be 1x" +
                     std::to_string(W.cols()));
  }
  Tape& t = *x.tape;
  const bool req = req2(x, W) || (b && t.requires_grad(b->id));
  std::size_t xid = x.id, wid = W.id;
  std::optional<std::size_t> bid = b ? std::optional<std::size_t>(b->id) : std::nullopt;
  Value out = t.alloc(x.rows(), W.cols(),
                      [xid, wid, bid](Tape& t, std::size_t self) {
                        const Mat& g = t.grad(self);
                        if (t.requires_grad(xid))
                          t.grad_mut(xid).noalias() += g * t.data(wid).transpose();
                        if (t.requires_grad(wid))
                          t.grad_mut(wid).noalias() += t.data(xid).transpose() * g;
                        if (bid && t.requires_grad(*bid))
                          t.grad_mut(*bid).row(0) += g.colwise().sum();
                      },
                      req);
  t.data_mut(out.id).noalias() = x.data() * W.data();
  if (b) t.data_mut(out.id).rowwise() += b->data().row(0);
  return out;
}

Value add(const Value& a, const Value& b) {
  require_same_shape(a, b, "add");
  Tape& t = *a.tape;
  std::size_t ai = a.id, bi = b.id;
  Value out = t.alloc(a.rows(), a.cols(),
                      [ai, bi](Tape& t, std::size_t self) {
                        if (t.requires_grad(ai)) t.grad_mut(ai) += t.grad(self);
                        if (t.requires_grad(bi)) t.grad_mut(bi) += t.grad(self);
                      },
                      req2(a, b));
  t.data_mut(out.id) = a.data() + b.data();
  return out;
}

Value sub(const Value& a, const Value& b) {
  require_same_shape(a, b, "sub");
  Tape& t = *a.tape;
  std::size_t ai = a.id, bi = b.id;
  Value out = t.alloc(a.rows(), a.cols(),
                      [ai, bi](Tape& t, std::size_t self) {
                        if (t.requires_grad(ai)) t.grad_mut(ai) += t.grad(self);
                        if (t.requires_grad(bi)) t.grad_mut(bi) -= t.grad(self);
                      },
                      req2(a, b));
  t.data_mut(out.id) = a.data() - b.data();
  return out;
}

Value mul(const Value& a, const Value& b) {
  require_same_shape(a, b, "mul");
  Tape& t = *a.tape;
  std::size_t ai = a.id, bi = b.id;
  Value out = t.alloc(a.rows(), a.cols(),
                      [ai, bi](Tape& t, std::size_t self) {
                        const Mat& g = t.grad(self);
                        if (t.requires_grad(ai))
                          t.grad_mut(ai).array() += g.array() * t.data(bi).array();
                        if (t.requires_grad(bi))
                          t.grad_mut(bi).array() += g.array() * t.data(ai).array();
                      },
                      req2(a, b));
  t.data_mut(out.id) = a.data().cwiseProduct(b.data());
  return out;
}

Value div(const Value& a, const Value& b) {
  require_same_shape(a, b, "div");
  Tape& t = *a.tape;
  std::size_t ai = a.id, bi = b.id;
  Value out = t.alloc(a.rows(), a.cols(),
                      [ai, bi](Tape& t, std::size_t self) {
                        const Mat& g = t.grad(self);
                        const auto bd = t.data(bi).array();
                        if (t.requires_grad(ai)) t.grad_mut(ai).array() += g.array() / bd;
                        if (t.requires_grad(bi))
                          t.grad_mut(bi).array() -= g.array() * t.data(ai).array() / (bd * bd);
                      },
                      req2(a, b));
  t.data_mut(out.id) = a.data().cwiseQuotient(b.data());
  return out;
}

Value scalar_mul(const Value& a, double k) {
  Tape& t = *a.tape;
  std::size_t ai = a.id;
  Value out = t.alloc(a.rows(), a.cols(),
                      [ai, k](Tape& t, std::size_t self) {
                        if (t.requires_grad(ai)) t.grad_mut(ai) += k * t.grad(self);
                      },
                      t.requires_grad(a.id));
  t.data_mut(out.id) = a.data() * k;
  return out;
}

Value sigmoid(const Value& x) {
  Tape& t = *x.tape;
  // Smallest/largest doubles strictly inside (0,1); saturation never emits
  // exactly 0 or 1.
  const double lo = std::numeric_limits<double>::min();
  static const double hi = std::nextafter(1.0, 0.0);
  std::size_t xi = x.id;
  Value out = t.alloc(x.rows(), x.cols(),
                      [xi](Tape& t, std::size_t self) {
                        if (!t.requires_grad(xi)) return;
                        const auto s = t.data(self).array();
                        t.grad_mut(xi).array() += t.grad(self).array() * s * (1.0 - s);
                      },
                      t.requires_grad(x.id));
  t.data_mut(out.id).array() = x.data().array().logistic().max(lo).min(hi);
  return out;
}

Value softplus(const Value& x) {
  Tape& t = *x.tape;
  std::size_t xi = x.id;
  Value out = t.alloc(x.rows(), x.cols(),
                      [xi](Tape& t, std::size_t self) {
                        if (!t.requires_grad(xi)) return;
                        // d softplus = sigmoid, evaluated from the input node
                        t.grad_mut(xi).array() +=
                            t.grad(self).array() * t.data(xi).array().logistic();
                      },
                      t.requires_grad(x.id));
  const auto xd = x.data().array();
  t.data_mut(out.id).array() =
      (xd.max(0.0) + (-xd.abs()).exp().log1p()).max(std::numeric_limits<double>::min());
  return out;
}

Value log(const Value& x) {
  if ((x.data().array() <= 0.0).any()) {
    throw DomainError("log: nonpositive input after flooring");
  }
  Tape& t = *x.tape;
  std::size_t xi = x.id;
  Value out = t.alloc(x.rows(), x.cols(),
                      [xi](Tape& t, std::size_t self) {
                        if (!t.requires_grad(xi)) return;
                        t.grad_mut(xi).array() += t.grad(self).array() / t.data(xi).array();
                      },
                      t.requires_grad(x.id));
  t.data_mut(out.id).array() = x.data().array().log();
  return out;
}

Value clamp_min(const Value& x, double m) {
  Tape& t = *x.tape;
  std::size_t xi = x.id;
  Value out = t.alloc(x.rows(), x.cols(),
                      [xi, m](Tape& t, std::size_t self) {
                        if (!t.requires_grad(xi)) return;
                        const auto xd = t.data(xi).array();
                        t.grad_mut(xi).array() += (xd > m).select(t.grad(self).array(), 0.0);
                      },
                      t.requires_grad(x.id));
  t.data_mut(out.id) = x.data().cwiseMax(m);
  return out;
}

Value arccos(const Value& x) {
  Tape& t = *x.tape;
  const double lim = 1.0 - kArccosMargin;
  std::size_t xi = x.id;
  Value out = t.alloc(x.rows(), x.cols(),
                      [xi, lim](Tape& t, std::size_t self) {
                        if (!t.requires_grad(xi)) return;
                        // derivative of arccos(clamp(x)): zero where the clamp is active
                        const auto xd = t.data(xi).array();
                        auto inside = xd.abs() < lim;
                        auto d = -1.0 / (1.0 - xd.min(lim).max(-lim).square()).sqrt();
                        t.grad_mut(xi).array() +=
                            inside.select(t.grad(self).array() * d, 0.0);
                      },
                      t.requires_grad(x.id));
  t.data_mut(out.id).array() = x.data().array().max(-lim).min(lim).acos();
  return out;
}

Value square(const Value& x) {
  Tape& t = *x.tape;
  std::size_t xi = x.id;
  Value out = t.alloc(x.rows(), x.cols(),
                      [xi](Tape& t, std::size_t self) {
                        if (!t.requires_grad(xi)) return;
                        t.grad_mut(xi).array() +=
                            2.0 * t.grad(self).array() * t.data(xi).array();
                      },
                      t.requires_grad(x.id));
  t.data_mut(out.id).array() = x.data().array().square();
  return out;
}

Value sqrt(const Value& x) {
  Tape& t = *x.tape;
  std::size_t xi = x.id;
  Value out = t.alloc(x.rows(), x.cols(),
                      [xi](Tape& t, std::size_t self) {
                        if (!t.requires_grad(xi)) return;
                        t.grad_mut(xi).array() +=
                            t.grad(self).array() / (2.0 * t.data(self).array());
                      },
                      t.requires_grad(x.id));
  t.data_mut(out.id).array() = x.data().array().sqrt();
  return out;
}

Value pow_scalar(const Value& x, double p) {
  Tape& t = *x.tape;
  std::size_t xi = x.id;
  Value out = t.alloc(x.rows(), x.cols(),
                      [xi, p](Tape& t, std::size_t self) {
                        if (!t.requires_grad(xi)) return;
                        const auto xd = t.data(xi).array();
                        t.grad_mut(xi).array() += t.grad(self).array() * p * xd.pow(p - 1.0);
                      },
                      t.requires_grad(x.id));
  t.data_mut(out.id).array() = x.data().array().pow(p);
  return out;
}

Value take_cols(const Value& x, Index first, Index count) {
  if (first < 0 || count < 0 || first + count > x.cols()) {
    throw ShapeError("take_cols: [" + std::to_string(first) + "," +
                     std::to_string(first + count) + ") out of " + shape_str(x.data()));
  }
  Tape& t = *x.tape;
  std::size_t xi = x.id;
  Value out = t.alloc(x.rows(), count,
                      [xi, first, count](Tape& t, std::size_t self) {
                        if (!t.requires_grad(xi)) return;
                        t.grad_mut(xi).middleCols(first, count) += t.grad(self);
                      },
                      t.requires_grad(x.id));
  t.data_mut(out.id) = x.data().middleCols(first, count);
  return out;
}

Value sum(const Value& x) {
  Tape& t = *x.tape;
  std::size_t xi = x.id;
  Value out = t.alloc(1, 1,
                      [xi](Tape& t, std::size_t self) {
                        if (!t.requires_grad(xi)) return;
                        t.grad_mut(xi).array() += t.grad(self)(0, 0);
                      },
                      t.requires_grad(x.id));
  t.data_mut(out.id)(0, 0) = x.data().sum();
  return out;
}

Value mean(const Value& x) {
  Tape& t = *x.tape;
  const double n = static_cast<double>(x.rows() * x.cols());
  std::size_t xi = x.id;
  Value out = t.alloc(1, 1,
                      [xi, n](Tape& t, std::size_t self) {
                        if (!t.requires_grad(xi)) return;
                        t.grad_mut(xi).array() += t.grad(self)(0, 0) / n;
                      },
                      t.requires_grad(x.id));
  t.data_mut(out.id)(0, 0) = x.data().sum() / n;
  return out;
}

// ---- finite-difference harness ----

GradCheckReport finite_diff_check(const LossBuilder& f, ParamStore& params, double h,
                                  double tol, const std::vector<std::string>& subset) {
  if (h <= 0.0) throw ContractError("finite_diff_check: h must be positive");

  const std::vector<std::string>& names = subset.empty() ? params.names() : subset;

  params.zero_grad();
  {
    Tape tape;
    Value loss = f(tape, params);
    tape.backward(loss);
  }
  // Snapshot analytic grads before FD evaluations disturb anything.
  std::vector<Mat> analytic;
  analytic.reserve(names.size());
  for (const auto& n : names) analytic.push_back(params.at(n).grad);

  Tape scratch;
  auto eval = [&]() {
    scratch.reset();
    return f(scratch, params).data()(0, 0);
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < names.size(); ++k) {
    Parameter& p = params.at(names[k]);
    for (Index r = 0; r < p.value.rows(); ++r) {
      for (Index c = 0; c < p.value.cols(); ++c) {
        const double saved = p.value(r, c);
        p.value(r, c) = saved + h;
        const double fp = eval();
        p.value(r, c) = saved - h;
        const double fm = eval();
        p.value(r, c) = saved;

        const double fd = (fp - fm) / (2.0 * h);
        const double bp = analytic[k](r, c);
        const double denom = std::max({1.0, std::abs(fd), std::abs(bp)});
        const double err = std::abs(fd - bp) / denom;
        report.max_error = std::max(report.max_error, err);
        ++report.coords_checked;
        if (err > tol) {
          report.failures.push_back({names[k], r, c, bp, fd, err});
        }
      }
    }
  }
  return report;
}

}  // namespace hsfuse::diff
