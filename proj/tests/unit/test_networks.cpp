#include <doctest.h>

#include <hsfuse/losses.hpp>
#include <hsfuse/networks.hpp>

#include "test_util.hpp"

#include <cmath>

using namespace hsfuse;
using namespace hsfuse::diff;
using namespace hsfuse::net;
using hsfuse::testutil::random_mat;

namespace {

EncoderSpec small_hsi_spec() { return EncoderSpec{7, {6, 6}, 5, "sigmoid"}; }
EncoderSpec small_msi_spec() { return EncoderSpec{3, {4, 5}, 5, "sigmoid"}; }
DecoderSpec small_dec_spec() { return DecoderSpec{{6}, 7}; }

void init_all(ParamStore& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  init_encoder(params, "he", small_hsi_spec(), rng);
  init_decoder(params, "hd", 5, small_dec_spec(), rng);
  init_encoder(params, "me", small_msi_spec(), rng);
}

}  // namespace

TEST_CASE("hsi forward with zero weights gives head constants and zero output") {
  ParamStore params;
  init_all(params, 1);
  for (const auto& n : params.names()) params.at(n).value.setZero();

  std::mt19937_64 rng(2);
  Mat y = random_mat(10, 7, rng, 0.0, 1.0);
  Tape t;
  auto fwd = hsi_forward(t, y, params, small_hsi_spec(), small_dec_spec());
  CHECK(fwd.head.has_value());
  CHECK(fwd.head->u.data().minCoeff() == 0.5);
  CHECK(fwd.head->beta.data()(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(fwd.yhat.data().cwiseAbs().maxCoeff() == 0.0);
  CHECK(fwd.s.data().allFinite());
  CHECK((fwd.s.data().rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("decoder is exactly linear: yhat equals s times the extracted basis") {
  ParamStore params;
  init_all(params, 3);
  std::mt19937_64 rng(4);
  Mat y = random_mat(12, 7, rng, 0.0, 1.0);
  Tape t;
  auto fwd = hsi_forward(t, y, params, small_hsi_spec(), small_dec_spec());
  const Mat phi = extract_basis(params, "hd", small_dec_spec());
  CHECK(fwd.yhat.rows() == 12);
  CHECK(fwd.yhat.cols() == 7);
  CHECK(testutil::max_abs_diff(fwd.yhat.data(), Mat(fwd.s.data() * phi)) < 1e-12);
}

TEST_CASE("extract_basis degenerate decoders") {
  std::mt19937_64 rng(5);
  {
    ParamStore params;
    DecoderSpec one_layer{{}, 7};
    init_decoder(params, "hd", 5, one_layer, rng);
    CHECK(extract_basis(params, "hd", one_layer) == params.at("hd.W1").value);
  }
  {
    ParamStore params;
    DecoderSpec two{{5}, 7};
    init_decoder(params, "hd", 5, two, rng);
    params.at("hd.W1").value = Mat::Identity(5, 5);
    CHECK(extract_basis(params, "hd", two) == params.at("hd.W2").value);
  }
}

TEST_CASE("decoder applied to unit rows reproduces basis rows") {
  ParamStore params;
  init_all(params, 6);
  const Mat phi = extract_basis(params, "hd", small_dec_spec());
  Tape t;
  Mat eye = Mat::Identity(5, 5);
  Value out = decoder_forward(t, t.leaf(eye), params, "hd", small_dec_spec(), 5,
                              /*attach=*/false);
  CHECK(testutil::max_abs_diff(out.data(), phi) < 1e-12);
}

TEST_CASE("msi forward with identity-like response reduces to the decoder map") {
  ParamStore params;
  init_all(params, 7);
  std::mt19937_64 rng(8);
  Mat ym = random_mat(9, 3, rng, 0.0, 1.0);

  // l = L degenerate sensor
  Mat response = Mat::Identity(7, 7);
  Tape t;
  auto fwd = msi_forward(t, ym, params, small_msi_spec(), small_dec_spec(), response);
  const Mat phi = extract_basis(params, "hd", small_dec_spec());
  CHECK(testutil::max_abs_diff(fwd.yhat.data(), Mat(fwd.s.data() * phi)) < 1e-12);
}

TEST_CASE("msi objective sends no gradient into the frozen decoder") {
  ParamStore params;
  init_all(params, 9);
  std::mt19937_64 rng(10);
  Mat ym = random_mat(9, 3, rng, 0.0, 1.0);
  Mat response = random_mat(7, 3, rng, 0.0, 1.0);
  for (Index j = 0; j < 3; ++j) response.col(j) /= response.col(j).sum();

  params.zero_grad();
  Tape t;
  auto fwd = msi_forward(t, ym, params, small_msi_spec(), small_dec_spec(), response);
  Value obj = loss::msi_objective(t.leaf(ym), fwd.yhat, fwd.s, loss::Weights{1e-3, 0});
  t.backward(obj);

  for (const auto& n : params.names()) {
    const double g = params.at(n).grad.cwiseAbs().maxCoeff();
    if (n.rfind("me.", 0) == 0) continue;
    CHECK_MESSAGE(g == 0.0, n);
  }
  // and the encoder it trains does receive gradient
  double me_grad = 0.0;
  for (const auto& n : params.names()) {
    if (n.rfind("me.", 0) == 0) {
      me_grad = std::max(me_grad, params.at(n).grad.cwiseAbs().maxCoeff());
    }
  }
  CHECK(me_grad > 0.0);
}

TEST_CASE("fuse consistency and selector behaviour") {
  ParamStore params;
  init_all(params, 11);
  const Mat phi = extract_basis(params, "hd", small_dec_spec());

  Mat onehot = Mat::Zero(3, 5);
  onehot(0, 2) = onehot(1, 0) = onehot(2, 4) = 1.0;
  Mat x = fuse(onehot, phi);
  CHECK(x.row(0) == phi.row(2));
  CHECK(x.row(1) == phi.row(0));
  CHECK(x.row(2) == phi.row(4));

  std::mt19937_64 rng(12);
  Mat y = random_mat(6, 7, rng, 0.0, 1.0);
  Tape t;
  auto fwd = hsi_forward(t, y, params, small_hsi_spec(), small_dec_spec());
  CHECK(testutil::max_abs_diff(fuse(fwd.s.data(), phi), fwd.yhat.data()) < 1e-12);

  CHECK_THROWS_AS(fuse(Mat::Zero(3, 4), phi), ShapeError);
}

TEST_CASE("representation rows stay on the simplex through both networks") {
  ParamStore params;
  init_all(params, 13);
  std::mt19937_64 rng(14);
  Mat yh = random_mat(20, 7, rng, 0.0, 1.0);
  Mat ym = random_mat(20, 3, rng, 0.0, 1.0);
  Mat response = random_mat(7, 3, rng, 0.0, 1.0);

  Tape t;
  auto h = hsi_forward(t, yh, params, small_hsi_spec(), small_dec_spec());
  auto m = msi_forward(t, ym, params, small_msi_spec(), small_dec_spec(), response);
  for (const auto& s : {h.s.data(), m.s.data()}) {
    CHECK((s.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
    CHECK(s.minCoeff() >= 0.0);
  }
}

TEST_CASE("dense connectivity: perturbing any layer's output changes the representation") {
  ParamStore params;
  init_all(params, 15);
  std::mt19937_64 rng(16);
  Mat y = random_mat(8, 7, rng, 0.0, 1.0);

  auto s_of = [&]() {
    Tape t;
    return hsi_forward(t, y, params, small_hsi_spec(), small_dec_spec(),
                       ReprMode::kSimplex, false, false)
        .s.data();
  };
  const Mat base = s_of();

  // Probe layer k by bumping its bias: the bump rides the layer output into
  // every downstream connection.
  for (int k = 1; k <= 2; ++k) {
    diff::Parameter& b = params.at("he.b" + std::to_string(k));
    Mat saved = b.value;
    b.value.array() += 0.05;
    CHECK(testutil::max_abs_diff(s_of(), base) > 1e-12);
    b.value = saved;
  }
  // and layer 0 (the raw input) reaches it too
  Mat y2 = y;
  y2.array() += 0.05;
  Tape t;
  auto fwd = hsi_forward(t, y2, params, small_hsi_spec(), small_dec_spec(),
                         ReprMode::kSimplex, false, false);
  CHECK(testutil::max_abs_diff(fwd.s.data(), base) > 1e-12);
}

TEST_CASE("sigmoid bottleneck variant produces positive non-simplex rows") {
  ParamStore params;
  std::mt19937_64 rng(17);
  init_encoder(params, "he", small_hsi_spec(), rng, ReprMode::kSigmoid);
  init_decoder(params, "hd", 5, small_dec_spec(), rng);
  CHECK_FALSE(params.contains("he.Wb"));

  Mat y = random_mat(10, 7, rng, 0.0, 1.0);
  Tape t;
  auto fwd = hsi_forward(t, y, params, small_hsi_spec(), small_dec_spec(),
                         ReprMode::kSigmoid);
  CHECK_FALSE(fwd.head.has_value());
  CHECK(fwd.s.data().minCoeff() > 0.0);
  CHECK(fwd.s.cols() == 5);
}

TEST_CASE("encoder rejects wrong input width") {
  ParamStore params;
  init_all(params, 18);
  Tape t;
  Mat bad = Mat::Zero(4, 6);
  CHECK_THROWS_AS(hsi_forward(t, bad, params, small_hsi_spec(), small_dec_spec()),
                  ShapeError);
}
