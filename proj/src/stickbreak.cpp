#include <hsfuse/stickbreak.hpp>

#include <cmath>
#include <vector>

namespace hsfuse::stick {

namespace {
constexpr double kStickFloor = 1e-12;  // floor on (1-u) before the 1/beta power
using ArrR = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
}

Value kumaraswamy_inverse(const Value& u, const Value& beta) {
  if (beta.cols() != 1 || beta.rows() != u.rows()) {
    throw ShapeError("kumaraswamy_inverse: beta " + shape_str(beta.data()) +
                     " must be " + std::to_string(u.rows()) + "x1");
  }
  diff::Tape& t = *u.tape;
  std::size_t ui = u.id, bi = beta.id;
  const bool req = t.requires_grad(ui) || t.requires_grad(bi);
  Value out = t.alloc(
      u.rows(), u.cols(),
      [ui, bi](diff::Tape& t, std::size_t self) {
        const auto g = t.grad(self).array();
        const ArrR w = (1.0 - t.data(ui).array()).max(kStickFloor);
        // pw = w^(1/beta) survives in the output as 1 - v
        const ArrR pw = 1.0 - t.data(self).array();
        const Eigen::ArrayXd b = t.data(bi).col(0).array();
        if (t.requires_grad(ui)) {
          // dv/du = pw / (beta * w) where the floor is off, else 0
          const ArrR dvdu = (pw / w).colwise() / b;
          t.grad_mut(ui).array() +=
              ((1.0 - t.data(ui).array()) > kStickFloor).select(g * dvdu, 0.0);
        }
        if (t.requires_grad(bi)) {
          // dv/dbeta = pw * ln(w) / beta^2
          t.grad_mut(bi).col(0).array() +=
              (g * pw * w.log()).rowwise().sum() / b.square();
        }
      },
      req);
  // v = 1 - exp(log(w) / beta), elementwise with beta broadcast across columns
  const ArrR w = (1.0 - u.data().array()).max(kStickFloor);
  const Eigen::ArrayXd invb = 1.0 / beta.data().col(0).array();
  t.data_mut(out.id).array() = 1.0 - (w.log().colwise() * invb).exp();
  return out;
}

Value stick_break(const Value& v) {
  diff::Tape& t = *v.tape;
  const Index p = v.rows(), b = v.cols();

  std::size_t vi = v.id;
  Value out = t.alloc(
      p, b + 1,
      [vi, p, b](diff::Tape& t, std::size_t self) {
        if (!t.requires_grad(vi)) return;
        const Mat& g = t.grad(self);
        const Mat& vd = t.data(vi);
        Mat& gv = t.grad_mut(vi);
        // ds_j/dv_i = -v_j * prod_{o<j, o != i}(1-v_o) for j > i (the remainder
        // column drops the v_j factor). Exclusion products are built with a
        // running product so no division by (1-v_i) is needed.
        std::vector<double> pre(static_cast<std::size_t>(b) + 1);
        for (Index i = 0; i < p; ++i) {
          pre[0] = 1.0;
          for (Index j = 0; j < b; ++j) pre[j + 1] = pre[j] * (1.0 - vd(i, j));
          for (Index k = 0; k < b; ++k) {
            double acc = g(i, k) * pre[k];
            double excl = pre[k];  // prod_{o<j, o != k} starting at j = k+1
            for (Index j = k + 1; j < b; ++j) {
              acc -= g(i, j) * vd(i, j) * excl;
              excl *= 1.0 - vd(i, j);
            }
            acc -= g(i, b) * excl;
            gv(i, k) += acc;
          }
        }
      },
      t.requires_grad(vi));

  Mat& s = t.data_mut(out.id);
  for (Index i = 0; i < p; ++i) {
    double remain = 1.0;
    for (Index j = 0; j < b; ++j) {
      s(i, j) = v.data()(i, j) * remain;
      remain *= 1.0 - v.data()(i, j);
    }
    s(i, b) = remain;  // remainder rule closes the simplex
  }
  return out;
}

HeadOutput representation_head(const Value& encoder_out, const Value& Wu, const Value& bu,
                               const Value& Wb, const Value& bb, Index c) {
  if (Wu.cols() != c) {
    throw ShapeError("representation_head: u head must have " + std::to_string(c) +
                     " columns, got " + shape_str(Wu.data()));
  }
  Value u = diff::sigmoid(diff::affine(encoder_out, Wu, bu));
  Value beta = diff::softplus(diff::affine(encoder_out, Wb, bb));
  Value v = kumaraswamy_inverse(diff::take_cols(u, 0, c - 1), beta);
  Value s = stick_break(v);
  return HeadOutput{u, beta, v, s};
}

}  // namespace hsfuse::stick
