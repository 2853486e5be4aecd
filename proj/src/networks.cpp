#include <hsfuse/networks.hpp>

#include <cmath>

namespace hsfuse::net {

namespace {

Mat glorot_uniform(Index rows, Index cols, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-a, a);
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

Mat positive_uniform(Index rows, Index cols, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, hi);
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

Value activate(const Value& z, const std::string& name) {
  if (name == "sigmoid") return diff::sigmoid(z);
  if (name == "softplus") return diff::softplus(z);
  throw ConfigError("unknown hidden activation: " + name);
}

std::vector<Index> decoder_chain(Index c, const DecoderSpec& spec) {
  std::vector<Index> widths;
  widths.push_back(c);
  widths.insert(widths.end(), spec.hidden_widths.begin(), spec.hidden_widths.end());
  widths.push_back(spec.output_width);
  return widths;
}

}  // namespace

void init_encoder(ParamStore& params, const std::string& prefix, const EncoderSpec& spec,
                  std::mt19937_64& rng, ReprMode mode, bool uniform_sticks) {
  if (spec.input_width <= 0 || spec.c <= 0 || spec.hidden_widths.empty()) {
    throw ConfigError("encoder spec: widths must be positive and nonempty");
  }
  std::vector<Index> widths;
  widths.push_back(spec.input_width);
  widths.insert(widths.end(), spec.hidden_widths.begin(), spec.hidden_widths.end());
  for (std::size_t k = 1; k < widths.size(); ++k) {
    for (std::size_t j = 0; j < k; ++j) {
      params.add(prefix + ".W" + std::to_string(j) + "_" + std::to_string(k),
                 glorot_uniform(widths[j], widths[k], rng));
    }
    params.add(prefix + ".b" + std::to_string(k), Mat::Zero(1, widths[k]));
  }
  const Index last = widths.back();
  params.add(prefix + ".Wu", glorot_uniform(last, spec.c, rng));
  Mat bu = Mat::Zero(1, spec.c);
  if (mode == ReprMode::kSimplex && uniform_sticks) {
    // Start the break fractions at v_j = 1/(c-j) so the sticks open uniform.
    // A zero-bias start concentrates most of the stick on the first
    // component, which sits next to a saturation trap of the sigmoid head.
    const double beta0 = std::log(2.0);  // softplus(0)
    for (Index j = 0; j + 1 < spec.c; ++j) {
      const double v = 1.0 / static_cast<double>(spec.c - j);
      const double u = 1.0 - std::pow(1.0 - v, beta0);
      bu(0, j) = std::log(u / (1.0 - u));
    }
  }
  params.add(prefix + ".bu", std::move(bu));
  if (mode == ReprMode::kSimplex) {
    params.add(prefix + ".Wb", glorot_uniform(last, 1, rng));
    params.add(prefix + ".bb", Mat::Zero(1, 1));
  }
}

void init_decoder(ParamStore& params, const std::string& prefix, Index c,
                  const DecoderSpec& spec, std::mt19937_64& rng) {
  if (spec.output_width <= 0) throw ConfigError("decoder spec: output width must be positive");
  // Nonnegative start nudges the basis toward physical reflectances.
  const auto widths = decoder_chain(c, spec);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    params.add(prefix + ".W" + std::to_string(i + 1),
               positive_uniform(widths[i], widths[i + 1], 0.1, rng));
  }
}

Value encoder_forward(Tape& tape, const Value& input, ParamStore& params,
                      const std::string& prefix, const EncoderSpec& spec, bool attach) {
  if (input.cols() != spec.input_width) {
    throw ShapeError("encoder " + prefix + ": input " + shape_str(input.data()) +
                     " vs expected width " + std::to_string(spec.input_width));
  }
  auto lease = [&](const std::string& name) {
    diff::Parameter& p = params.at(name);
    return attach ? tape.param(p) : tape.leaf(p.value);
  };
  std::vector<Value> layers{input};
  const std::size_t depth = spec.hidden_widths.size();
  for (std::size_t k = 1; k <= depth; ++k) {
    // Dense summation connectivity: weighted sum over all preceding layers.
    Value z = diff::affine(layers[0], lease(prefix + ".W0_" + std::to_string(k)),
                           lease(prefix + ".b" + std::to_string(k)));
    for (std::size_t j = 1; j < k; ++j) {
      z = diff::add(z, diff::affine(layers[j], lease(prefix + ".W" + std::to_string(j) +
                                                     "_" + std::to_string(k))));
    }
    layers.push_back(activate(z, spec.activation));
  }
  return layers.back();
}

Value decoder_forward(Tape& tape, const Value& s, ParamStore& params,
                      const std::string& prefix, const DecoderSpec& spec, Index c,
                      bool attach, std::vector<Value>* weights_out) {
  const auto widths = decoder_chain(c, spec);
  Value h = s;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    diff::Parameter& p = params.at(prefix + ".W" + std::to_string(i + 1));
    Value w = attach ? tape.param(p) : tape.leaf(p.value);
    if (weights_out) weights_out->push_back(w);
    h = diff::affine(h, w);  // linear, bias-free
  }
  return h;
}

namespace {

ForwardResult representation_and_decode(Tape& tape, const Value& input, ParamStore& params,
                                        const std::string& enc_prefix,
                                        const std::string& dec_prefix,
                                        const EncoderSpec& enc, const DecoderSpec& dec,
                                        ReprMode mode, bool attach_encoder,
                                        bool attach_decoder) {
  Value hidden = encoder_forward(tape, input, params, enc_prefix, enc, attach_encoder);
  auto lease = [&](const std::string& name) {
    diff::Parameter& p = params.at(name);
    return attach_encoder ? tape.param(p) : tape.leaf(p.value);
  };
  ForwardResult out{Value{}, Value{}, std::nullopt, {}};
  if (mode == ReprMode::kSimplex) {
    out.head = stick::representation_head(hidden, lease(enc_prefix + ".Wu"),
                                          lease(enc_prefix + ".bu"),
                                          lease(enc_prefix + ".Wb"),
                                          lease(enc_prefix + ".bb"), enc.c);
    out.s = out.head->s;
  } else {
    out.s = diff::sigmoid(diff::affine(hidden, lease(enc_prefix + ".Wu"),
                                       lease(enc_prefix + ".bu")));
  }
  out.yhat = decoder_forward(tape, out.s, params, dec_prefix, dec, enc.c, attach_decoder,
                             attach_decoder ? &out.decoder_weights : nullptr);
  return out;
}

}  // namespace

ForwardResult hsi_forward(Tape& tape, const Mat& y_h, ParamStore& params,
                          const EncoderSpec& enc, const DecoderSpec& dec, ReprMode mode,
                          bool attach_encoder, bool attach_decoder) {
  Value input = tape.leaf(y_h);
  return representation_and_decode(tape, input, params, "he", "hd", enc, dec, mode,
                                   attach_encoder, attach_decoder);
}

ForwardResult msi_forward(Tape& tape, const Mat& y_m, ParamStore& params,
                          const EncoderSpec& enc, const DecoderSpec& dec, const Mat& response,
                          ReprMode mode, bool attach_encoder) {
  if (response.rows() != dec.output_width) {
    throw ConfigError("response is " + shape_str(response) + ", expected " +
                      std::to_string(dec.output_width) + " rows");
  }
  Value input = tape.leaf(y_m);
  ForwardResult out = representation_and_decode(tape, input, params, "me", "hd", enc, dec,
                                                mode, attach_encoder,
                                                /*attach_decoder=*/false);
  out.yhat = diff::affine(out.yhat, tape.leaf(response));
  return out;
}

Mat extract_basis(const ParamStore& params, const std::string& prefix,
                  const DecoderSpec& spec) {
  Mat phi = params.at(prefix + ".W1").value;
  for (std::size_t i = 1; i <= spec.hidden_widths.size(); ++i) {
    phi = phi * params.at(prefix + ".W" + std::to_string(i + 1)).value;
  }
  return phi;
}

Mat fuse(const Mat& s_m, const Mat& phi_h) {
  if (s_m.cols() != phi_h.rows()) {
    throw ShapeError("fuse: " + shape_str(s_m) + " vs " + shape_str(phi_h));
  }
  return s_m * phi_h;
}

}  // namespace hsfuse::net
