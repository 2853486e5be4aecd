#include <doctest.h>

#include <hsfuse/losses.hpp>
#include <hsfuse/stickbreak.hpp>

#include "test_util.hpp"

#include <cmath>

using namespace hsfuse;
using namespace hsfuse::diff;
using hsfuse::testutil::random_mat;
using hsfuse::testutil::random_simplex;

namespace {

// Out-of-tape reference implementations, plain Eigen only.
double recon_ref(const Mat& y, const Mat& yhat) { return 0.5 * (y - yhat).squaredNorm(); }

double entropy_ref(const Mat& s) {
  double acc = 0.0;
  for (Index i = 0; i < s.rows(); ++i) {
    const double r = std::max(s.row(i).sum(), 1e-30);
    for (Index j = 0; j < s.cols(); ++j) {
      const double q = s(i, j) / r;
      acc -= q * std::log(std::max(q, 1e-12));
    }
  }
  return acc / static_cast<double>(s.rows());
}

double angle_ref(const Mat& a, const Mat& b) {
  double acc = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    const double cosine = a.row(i).dot(b.row(i)) / (a.row(i).norm() * b.row(i).norm());
    acc += std::acos(std::clamp(cosine, -1.0 + 1e-12, 1.0 - 1e-12));
  }
  return acc / (M_PI * static_cast<double>(a.rows()));
}

}  // namespace

TEST_CASE("reconstruction loss values") {
  Tape t;
  std::mt19937_64 rng(3);
  Mat y = random_mat(2, 3, rng);
  CHECK(loss::reconstruction(t.leaf(y), t.leaf(y)).data()(0, 0) == 0.0);

  Mat ones = Mat::Ones(2, 3);
  Value half_six = loss::reconstruction(t.leaf(Mat(y + ones)), t.leaf(y));
  CHECK(half_six.data()(0, 0) == doctest::Approx(3.0).epsilon(1e-15));

  // quadratic homogeneity: doubling the residual quadruples the loss
  Mat r = random_mat(2, 3, rng);
  const double l1 = loss::reconstruction(t.leaf(Mat(y + r)), t.leaf(y)).data()(0, 0);
  const double l2 = loss::reconstruction(t.leaf(Mat(y + 2 * r)), t.leaf(y)).data()(0, 0);
  CHECK(l2 == doctest::Approx(4.0 * l1).epsilon(1e-12));

  Value bad = t.leaf(Mat::Zero(3, 2));
  Value good = t.leaf(Mat::Zero(2, 3));
  CHECK_THROWS_AS(loss::reconstruction(good, bad), ShapeError);
}

TEST_CASE("entropy function closed-form values") {
  Tape t;
  Mat onehot = Mat::Zero(1, 4);
  onehot(0, 2) = 1.0;
  CHECK(loss::entropy_sparsity(t.leaf(onehot)).data()(0, 0) == 0.0);

  Mat uniform = Mat::Constant(1, 4, 0.25);
  CHECK(loss::entropy_sparsity(t.leaf(uniform)).data()(0, 0) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-14));

  Mat half(1, 4);
  half << 0.5, 0.5, 0.0, 0.0;
  CHECK(loss::entropy_sparsity(t.leaf(half)).data()(0, 0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("entropy ordering: one-hot below everything below uniform") {
  std::mt19937_64 rng(7);
  Tape t;
  const Index c = 10;
  Mat rows = random_simplex(2000, c, rng);
  Value h = loss::entropy_sparsity(t.leaf(rows));
  // mean of strictly-interior entropies sits strictly between the bounds
  CHECK(h.data()(0, 0) > 0.0);
  CHECK(h.data()(0, 0) < std::log(static_cast<double>(c)));

  for (int i = 0; i < 200; ++i) {
    Mat row = random_simplex(1, c, rng);
    const double hv = loss::entropy_sparsity(t.leaf(row)).data()(0, 0);
    CHECK(hv > 0.0);
    CHECK(hv < std::log(static_cast<double>(c)));
  }
}

TEST_CASE("duplicate_upsample trivial and index-arithmetic cases") {
  std::mt19937_64 rng(11);
  {
    Mat s = random_mat(1, 5, rng);
    Mat up = loss::duplicate_upsample(s, 1, 1, 2);
    CHECK(up.rows() == 4);
    for (Index i = 0; i < 4; ++i) CHECK(up.row(i) == s.row(0));
  }
  {
    Mat s = random_mat(6, 3, rng);
    CHECK(loss::duplicate_upsample(s, 3, 2, 1) == s);
  }
  {
    // 2x2 grid of distinct rows -> 4x4 grid of 2x2 constant blocks
    Mat s = random_mat(4, 3, rng);
    Mat up = loss::duplicate_upsample(s, 2, 2, 2);
    REQUIRE(up.rows() == 16);
    for (Index y = 0; y < 4; ++y) {
      for (Index x = 0; x < 4; ++x) {
        const Index lr = (y / 2) * 2 + (x / 2);
        CHECK(up.row(y * 4 + x) == s.row(lr));
      }
    }
  }
  CHECK_THROWS_AS(loss::duplicate_upsample(Mat::Zero(4, 2), 2, 2, 0), ConfigError);
}

TEST_CASE("angle similarity values") {
  Tape t;
  {
    std::mt19937_64 rng(13);
    Mat s = random_simplex(20, 6, rng);
    // identical representations: zero angle up to the arccos clamp margin
    CHECK(loss::angle_similarity(t.leaf(s), t.leaf(s)).data()(0, 0) < 1e-6);
  }
  {
    Mat a = Mat::Zero(3, 2), b = Mat::Zero(3, 2);
    a.col(0).setOnes();
    b.col(1).setOnes();
    CHECK(loss::angle_similarity(t.leaf(a), t.leaf(b)).data()(0, 0) ==
          doctest::Approx(0.5).epsilon(1e-12));
  }
  {
    Mat a(1, 2), b(1, 2);
    a << 1, 0;
    b << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    CHECK(loss::angle_similarity(t.leaf(a), t.leaf(b)).data()(0, 0) ==
          doctest::Approx(0.25).epsilon(1e-9));
  }
}

TEST_CASE("angle similarity is scale invariant and bounded") {
  std::mt19937_64 rng(17);
  Tape t;
  Mat a = random_mat(30, 8, rng, 0.01, 1.0);
  Mat b = random_mat(30, 8, rng, 0.01, 1.0);
  const double j0 = loss::angle_similarity(t.leaf(a), t.leaf(b)).data()(0, 0);
  CHECK(j0 >= 0.0);
  CHECK(j0 <= 1.0);

  Mat a2 = a, b2 = b;
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (Index i = 0; i < a.rows(); ++i) {
    a2.row(i) *= scale(rng);
    b2.row(i) *= scale(rng);
  }
  const double j1 = loss::angle_similarity(t.leaf(a2), t.leaf(b2)).data()(0, 0);
  CHECK(std::abs(j0 - j1) < 1e-10);
}

TEST_CASE("weight decay values") {
  Tape t;
  CHECK(loss::weight_decay({t.leaf(Mat::Zero(4, 4))}).data()(0, 0) == 0.0);
  CHECK(loss::weight_decay({t.leaf(Mat::Identity(2, 2))}).data()(0, 0) == 2.0);

  std::mt19937_64 rng(19);
  Mat w1 = random_mat(3, 3, rng), w2 = random_mat(3, 2, rng);
  const double d = loss::weight_decay({t.leaf(w1), t.leaf(w2)}).data()(0, 0);
  const double d3 = loss::weight_decay({t.leaf(Mat(3 * w1)), t.leaf(Mat(3 * w2))}).data()(0, 0);
  CHECK(d3 == doctest::Approx(9.0 * d).epsilon(1e-12));
}

TEST_CASE("hsi objective composition") {
  Tape t;
  loss::Weights w{0.1, 0.01};
  {
    // perfect reconstruction, one-hot rows, zero decoder
    Mat y = Mat::Zero(3, 5);
    Mat s = Mat::Zero(3, 4);
    s.col(1).setOnes();
    Value obj = loss::hsi_objective(t.leaf(y), t.leaf(y), t.leaf(s),
                                    {t.leaf(Mat::Zero(4, 5))}, w);
    CHECK(obj.data()(0, 0) == 0.0);
  }
  {
    // degenerate weights reduce to the reconstruction loss
    std::mt19937_64 rng(23);
    Mat y = random_mat(4, 5, rng), yhat = random_mat(4, 5, rng);
    Mat s = random_simplex(4, 3, rng);
    Value obj = loss::hsi_objective(t.leaf(y), t.leaf(yhat), t.leaf(s),
                                    {t.leaf(random_mat(3, 5, rng))}, loss::Weights{0, 0});
    CHECK(obj.data()(0, 0) == recon_ref(y, yhat));
  }
}

TEST_CASE("objectives match out-of-tape recomputation on a 5-pixel instance") {
  std::mt19937_64 rng(29);
  Tape t;
  const loss::Weights w{0.37, 0.021};
  Mat y = random_mat(5, 7, rng, 0.0, 1.0);
  Mat yhat = random_mat(5, 7, rng, 0.0, 1.0);
  Mat s = random_simplex(5, 4, rng);
  Mat w1 = random_mat(4, 6, rng), w2 = random_mat(6, 7, rng);

  const double hsi =
      loss::hsi_objective(t.leaf(y), t.leaf(yhat), t.leaf(s), {t.leaf(w1), t.leaf(w2)}, w)
          .data()(0, 0);
  const double hsi_expected = recon_ref(y, yhat) + w.lambda * entropy_ref(s) +
                              w.mu * (w1.squaredNorm() + w2.squaredNorm());
  CHECK(std::abs(hsi - hsi_expected) < 1e-12);

  Mat ym = random_mat(5, 3, rng, 0.0, 1.0);
  Mat ymhat = random_mat(5, 3, rng, 0.0, 1.0);
  const double msi = loss::msi_objective(t.leaf(ym), t.leaf(ymhat), t.leaf(s), w).data()(0, 0);
  CHECK(std::abs(msi - (recon_ref(ym, ymhat) + w.lambda * entropy_ref(s))) < 1e-12);

  Mat sh = random_simplex(5, 4, rng);
  const double angle = loss::angle_objective(sh, t.leaf(s)).data()(0, 0);
  CHECK(std::abs(angle - angle_ref(sh, s)) < 1e-12);
}

TEST_CASE("angle objective: target is constant, live side gets gradient") {
  std::mt19937_64 rng(31);
  Mat sh = random_simplex(6, 4, rng);
  ParamStore params;
  params.add("raw", random_mat(6, 4, rng));

  Tape t;
  Value sm = sigmoid(t.param(params.at("raw")));
  Value obj = loss::angle_objective(sh, sm);
  t.backward(obj);
  CHECK(params.at("raw").grad.cwiseAbs().maxCoeff() > 0.0);
  // S_m equal to the duplicated target: objective collapses to the clamp floor
  Tape t2;
  Value same = loss::angle_objective(sh, t2.leaf(sh));
  CHECK(same.data()(0, 0) < 1e-6);
}

TEST_CASE("all three objectives pass finite differences on 5-pixel instances") {
  std::mt19937_64 rng(37);
  const Index pixels = 5, c = 4, L = 7, l = 3;
  const loss::Weights w{0.2, 0.05};

  ParamStore params;
  params.add("u", random_mat(pixels, c, rng, 0.1, 0.9));
  params.add("beta", random_mat(pixels, 1, rng, 0.4, 3.0));
  params.add("W1", random_mat(c, 6, rng, 0.0, 0.4));
  params.add("W2", random_mat(6, L, rng, 0.0, 0.4));
  const Mat y = random_mat(pixels, L, rng, 0.0, 1.0);
  const Mat ym = random_mat(pixels, l, rng, 0.0, 1.0);
  const Mat response = random_mat(L, l, rng, 0.0, 1.0);
  const Mat sh = random_simplex(pixels, c, rng);

  auto forward = [&](Tape& t, ParamStore& p) {
    Value v = stick::kumaraswamy_inverse(take_cols(t.param(p.at("u")), 0, c - 1),
                                         t.param(p.at("beta")));
    return stick::stick_break(v);
  };

  auto hsi = finite_diff_check(
      [&](Tape& t, ParamStore& p) {
        Value s = forward(t, p);
        Value w1 = t.param(p.at("W1"));
        Value w2 = t.param(p.at("W2"));
        Value yhat = affine(affine(s, w1), w2);
        return loss::hsi_objective(t.leaf(y), yhat, s, {w1, w2}, w);
      },
      params, 1e-5, 1e-5);
  CHECK(hsi.max_error < 1e-5);

  auto msi = finite_diff_check(
      [&](Tape& t, ParamStore& p) {
        Value s = forward(t, p);
        Value yhat = affine(affine(affine(s, t.leaf(params.at("W1").value)),
                                   t.leaf(params.at("W2").value)),
                            t.leaf(response));
        return loss::msi_objective(t.leaf(ym), yhat, s, w);
      },
      params, 1e-5, 1e-5, {"u", "beta"});
  CHECK(msi.max_error < 1e-5);

  auto angle = finite_diff_check(
      [&](Tape& t, ParamStore& p) {
        return loss::angle_objective(sh, forward(t, p));
      },
      params, 1e-5, 1e-5, {"u", "beta"});
  CHECK(angle.max_error < 1e-5);
}
