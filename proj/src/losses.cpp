#include <hsfuse/losses.hpp>

#include <cmath>

namespace hsfuse::loss {

namespace {
constexpr double kLogFloor = 1e-12;
constexpr double kNormFloor = 1e-30;  // guards all-zero rows, unreachable post stick-breaking
constexpr double kPi = 3.14159265358979323846;

Value rowsum(const Value& x) {
  diff::Tape& t = *x.tape;
  return diff::affine(x, t.leaf(Mat::Ones(x.cols(), 1)));
}

Value broadcast_col(const Value& col, Index cols) {
  diff::Tape& t = *col.tape;
  return diff::affine(col, t.leaf(Mat::Ones(1, cols)));
}
}  // namespace

Value reconstruction(const Value& y, const Value& yhat) {
  if (y.rows() != yhat.rows() || y.cols() != yhat.cols()) {
    throw ShapeError("reconstruction: " + shape_str(y.data()) + " vs " +
                     shape_str(yhat.data()));
  }
  return diff::scalar_mul(diff::sum(diff::square(diff::sub(y, yhat))), 0.5);
}

Value entropy_sparsity(const Value& s, double p) {
  Value sp = (p == 1.0) ? s : diff::pow_scalar(s, p);
  Value norm = diff::clamp_min(rowsum(sp), kNormFloor);
  Value q = diff::div(sp, broadcast_col(norm, s.cols()));
  Value terms = diff::mul(q, diff::log(diff::clamp_min(q, kLogFloor)));
  return diff::scalar_mul(diff::sum(terms), -1.0 / static_cast<double>(s.rows()));
}

Mat duplicate_upsample(const Mat& s_lr, Index lr_width, Index lr_height, Index factor) {
  if (factor < 1) throw ConfigError("duplicate_upsample: factor must be >= 1");
  if (s_lr.rows() != lr_width * lr_height) {
    throw ShapeError("duplicate_upsample: " + std::to_string(s_lr.rows()) +
                     " rows != " + std::to_string(lr_width) + "*" +
                     std::to_string(lr_height));
  }
  const Index hw = lr_width * factor;
  const Index hh = lr_height * factor;
  Mat out(hw * hh, s_lr.cols());
  for (Index y = 0; y < hh; ++y) {
    for (Index x = 0; x < hw; ++x) {
      out.row(y * hw + x) = s_lr.row((y / factor) * lr_width + (x / factor));
    }
  }
  return out;
}

Value angle_similarity(const Value& a, const Value& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("angle_similarity: " + shape_str(a.data()) + " vs " +
                     shape_str(b.data()));
  }
  Value dot = rowsum(diff::mul(a, b));
  Value na = diff::sqrt(rowsum(diff::square(a)));
  Value nb = diff::sqrt(rowsum(diff::square(b)));
  Value cosine = diff::div(dot, diff::mul(na, nb));
  return diff::scalar_mul(diff::mean(diff::arccos(cosine)), 1.0 / kPi);
}

Value weight_decay(const std::vector<Value>& decoder_weights) {
  if (decoder_weights.empty()) throw ContractError("weight_decay: no weights");
  Value acc = diff::sum(diff::square(decoder_weights[0]));
  for (std::size_t i = 1; i < decoder_weights.size(); ++i) {
    acc = diff::add(acc, diff::sum(diff::square(decoder_weights[i])));
  }
  return acc;
}

Value hsi_objective(const Value& y, const Value& yhat, const Value& s,
                    const std::vector<Value>& decoder_weights, const Weights& w) {
  Value obj = reconstruction(y, yhat);
  obj = diff::add(obj, diff::scalar_mul(entropy_sparsity(s), w.lambda));
  obj = diff::add(obj, diff::scalar_mul(weight_decay(decoder_weights), w.mu));
  return obj;
}

Value msi_objective(const Value& y, const Value& yhat, const Value& s, const Weights& w) {
  return diff::add(reconstruction(y, yhat),
                   diff::scalar_mul(entropy_sparsity(s), w.lambda));
}

Value angle_objective(const Mat& s_h_upsampled, const Value& s_m) {
  diff::Tape& t = *s_m.tape;
  return angle_similarity(t.leaf(s_h_upsampled), s_m);
}

}  // namespace hsfuse::loss
