#include "unroll/cnn.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <string>

#include "../common/binary_io.hpp"
#include "unroll/error.hpp"

namespace unroll {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Tensor = CnnTape::Tensor;

enum class Group { EncConv, Pool, DecConv, Deconv, Fusion, Output };
constexpr Group kGroupOrder[] = {Group::EncConv, Group::Pool, Group::DecConv,
                                 Group::Deconv, Group::Fusion, Group::Output};

struct Layer {
  Group group;
  bool transposed = false;  // 2×2 stride-2 transposed conv
  int cin = 0;
  int cout = 0;
  int k = 3;
  int stride = 1;
  int pad = 1;
  bool relu = false;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
  std::size_t weight_count() const { return static_cast<std::size_t>(cin) * cout * k * k; }
};

struct Step {
  enum Kind { Layer, Concat } kind;
  int layer = -1;
  int in_a = -1;
  int in_b = -1;  // Concat only
};

struct Program {
  std::vector<Layer> layers;
  std::vector<Step> steps;  // step i writes value i + 1; value 0 is the input
  std::size_t param_count = 0;
};

Program build_program(const NetSpec& spec) {
  spec.validate();
  Program prog;
  const int n = spec.convs_per_block;
  const int ce = spec.channels_enc;
  const bool act = spec.relu;
  int cur = 0;
  int ch = 1;
  auto add_layer = [&](Layer l) {
    prog.layers.push_back(l);
    prog.steps.push_back({Step::Layer, static_cast<int>(prog.layers.size()) - 1, cur, -1});
    cur = static_cast<int>(prog.steps.size());
    ch = l.cout;
  };

  std::vector<std::pair<int, int>> skips;  // (value id, channels)
  for (int level = 0; level < spec.blocks_enc; ++level) {
    for (int i = 0; i < n; ++i) {
      const int cout = i == n - 1 ? 2 * ce : ce;
      add_layer({Group::EncConv, false, ch, cout, 3, 1, 1, act});
    }
    skips.emplace_back(cur, ch);
    add_layer({Group::Pool, false, ch, ch, 2, 2, 0, false});
  }
  for (int j = 0; j < spec.blocks_enc; ++j) {
    for (int i = 0; i < n; ++i) {
      const int cout = i == n - 1 ? spec.channels_dec_out : spec.channels_dec;
      add_layer({Group::DecConv, false, ch, cout, 3, 1, 1, act});
    }
    add_layer({Group::Deconv, true, ch, spec.channels_dec, 2, 2, 0, false});
    const auto [skip_id, skip_ch] = skips[spec.blocks_enc - 1 - j];
    prog.steps.push_back({Step::Concat, -1, cur, skip_id});
    cur = static_cast<int>(prog.steps.size());
    ch += skip_ch;
    add_layer({Group::Fusion, false, ch, spec.channels_dec, 3, 1, 1, act});
  }
  add_layer({Group::Output, false, ch, 1, 3, 1, 1, false});

  std::size_t offset = 0;
  for (Group g : kGroupOrder)
    for (Layer& l : prog.layers)
      if (l.group == g) {
        l.weight_offset = offset;
        offset += l.weight_count();
        l.bias_offset = offset;
        offset += static_cast<std::size_t>(l.cout);
      }
  prog.param_count = offset;
  return prog;
}

// (cin·k·k) × (oh·ow) patch matrix.
RowMat im2col(const Tensor& in, int k, int stride, int pad, int oh, int ow) {
  RowMat col(static_cast<Eigen::Index>(in.channels) * k * k, static_cast<Eigen::Index>(oh) * ow);
  for (int ci = 0; ci < in.channels; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = col.row((ci * k + ky) * k + kx).data();
        const double* src = in.data.data() + static_cast<std::size_t>(ci) * in.height * in.width;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          double* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= in.height) {
            std::fill(dst, dst + ow, 0.0);
            continue;
          }
          const double* srow = src + static_cast<std::size_t>(iy) * in.width;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            dst[ox] = (ix >= 0 && ix < in.width) ? srow[ix] : 0.0;
          }
        }
      }
  return col;
}

void col2im_add(const RowMat& col, Tensor& grad_in, int k, int stride, int pad, int oh, int ow) {
  for (int ci = 0; ci < grad_in.channels; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col.row((ci * k + ky) * k + kx).data();
        double* dst = grad_in.data.data() + static_cast<std::size_t>(ci) * grad_in.height * grad_in.width;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= grad_in.height) continue;
          double* drow = dst + static_cast<std::size_t>(iy) * grad_in.width;
          const double* srow = row + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < grad_in.width) drow[ix] += srow[ox];
          }
        }
      }
}

Eigen::Map<RowMat> as_matrix(Tensor& t) {
  return {t.data.data(), t.channels, static_cast<Eigen::Index>(t.height) * t.width};
}
Eigen::Map<const RowMat> as_matrix(const Tensor& t) {
  return {t.data.data(), t.channels, static_cast<Eigen::Index>(t.height) * t.width};
}

Tensor make_tensor(int c, int h, int w) {
  return {c, h, w, std::vector<double>(static_cast<std::size_t>(c) * h * w, 0.0)};
}

Tensor forward_layer(const Layer& l, const ParamVector& params, const Tensor& in) {
  const Eigen::Map<const Eigen::VectorXd> bias(params.data() + l.bias_offset, l.cout);
  if (l.transposed) {
    const Eigen::Map<const RowMat> w(params.data() + l.weight_offset, l.cin, static_cast<Eigen::Index>(l.cout) * 4);
    const RowMat m = w.transpose() * as_matrix(in);
    Tensor out = make_tensor(l.cout, in.height * 2, in.width * 2);
    for (int co = 0; co < l.cout; ++co)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const double* src = m.row(co * 4 + a * 2 + b).data();
          for (int i = 0; i < in.height; ++i)
            for (int j = 0; j < in.width; ++j)
              out.data[(static_cast<std::size_t>(co) * out.height + 2 * i + a) * out.width + 2 * j + b] =
                  src[i * in.width + j] + bias[co];
        }
    return out;
  }
  const int oh = (in.height + 2 * l.pad - l.k) / l.stride + 1;
  const int ow = (in.width + 2 * l.pad - l.k) / l.stride + 1;
  const Eigen::Map<const RowMat> w(params.data() + l.weight_offset, l.cout, static_cast<Eigen::Index>(l.cin) * l.k * l.k);
  Tensor out = make_tensor(l.cout, oh, ow);
  auto om = as_matrix(out);
  om.noalias() = w * im2col(in, l.k, l.stride, l.pad, oh, ow);
  om.colwise() += bias;
  if (l.relu)
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

// Accumulates parameter gradients and returns the gradient w.r.t. the input.
Tensor backward_layer(const Layer& l, const ParamVector& params, const Tensor& in, const Tensor& out,
                      Tensor grad_out, ParamVector& grad_params) {
  if (l.relu)
    for (std::size_t i = 0; i < grad_out.data.size(); ++i)
      if (!(out.data[i] > 0.0)) grad_out.data[i] = 0.0;
  Eigen::Map<Eigen::VectorXd> gbias(grad_params.data() + l.bias_offset, l.cout);
  Tensor grad_in = make_tensor(in.channels, in.height, in.width);
  if (l.transposed) {
    RowMat dm(static_cast<Eigen::Index>(l.cout) * 4, static_cast<Eigen::Index>(in.height) * in.width);
    for (int co = 0; co < l.cout; ++co) {
      double bsum = 0.0;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          double* dst = dm.row(co * 4 + a * 2 + b).data();
          for (int i = 0; i < in.height; ++i)
            for (int j = 0; j < in.width; ++j) {
              const double g =
                  grad_out.data[(static_cast<std::size_t>(co) * grad_out.height + 2 * i + a) * grad_out.width + 2 * j + b];
              dst[i * in.width + j] = g;
              bsum += g;
            }
        }
      gbias[co] += bsum;
    }
    const Eigen::Map<const RowMat> w(params.data() + l.weight_offset, l.cin, static_cast<Eigen::Index>(l.cout) * 4);
    Eigen::Map<RowMat> gw(grad_params.data() + l.weight_offset, l.cin, static_cast<Eigen::Index>(l.cout) * 4);
    gw.noalias() += as_matrix(in) * dm.transpose();
    as_matrix(grad_in).noalias() = w * dm;
    return grad_in;
  }
  const int oh = out.height;
  const int ow = out.width;
  const auto gom = as_matrix(grad_out);
  const RowMat col = im2col(in, l.k, l.stride, l.pad, oh, ow);
  const Eigen::Map<const RowMat> w(params.data() + l.weight_offset, l.cout, static_cast<Eigen::Index>(l.cin) * l.k * l.k);
  Eigen::Map<RowMat> gw(grad_params.data() + l.weight_offset, l.cout, static_cast<Eigen::Index>(l.cin) * l.k * l.k);
  gw.noalias() += gom * col.transpose();
  gbias += gom.rowwise().sum();
  const RowMat dcol = w.transpose() * gom;
  col2im_add(dcol, grad_in, l.k, l.stride, l.pad, oh, ow);
  return grad_in;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  Tensor out = make_tensor(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

void add_into(Tensor& dst, const double* src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src[i];
}

void check_input(const NetSpec& spec, const ParamVector& params, const Image& x) {
  const int m = 1 << spec.blocks_enc;
  if (x.height() % m != 0 || x.width() % m != 0)
    throw Error("cnn input " + std::to_string(x.height()) + "x" + std::to_string(x.width()) +
                " is not divisible by 2^L = " + std::to_string(m));
  if (params.size() != param_count(spec))
    throw Error("parameter vector has " + std::to_string(params.size()) + " entries, network needs " +
                std::to_string(param_count(spec)));
  if (!x.all_finite()) throw Error("cnn input contains non-finite values");
}

}  // namespace

NetSpec NetSpec::full() { return {4, 4, 3, 64, 128, 512, true, true}; }
NetSpec NetSpec::desk() { return {2, 2, 3, 16, 32, 32, true, true}; }
NetSpec NetSpec::tiny() { return {1, 2, 3, 4, 4, 4, true, true}; }

void NetSpec::validate() const {
  if (blocks_enc < 1) throw Error("NetSpec: blocks_enc must be >= 1");
  if (blocks_enc > 12) throw Error("NetSpec: blocks_enc is unreasonably large");
  if (convs_per_block < 1) throw Error("NetSpec: convs_per_block must be >= 1");
  if (kernel != 3) throw Error("NetSpec: only 3x3 kernels are supported");
  if (channels_enc < 1 || channels_dec < 1 || channels_dec_out < 1)
    throw Error("NetSpec: channel counts must be positive");
}

std::size_t param_count(const NetSpec& spec) { return build_program(spec).param_count; }

ParamVector init_params(const NetSpec& spec, Rng& rng) {
  const Program prog = build_program(spec);
  ParamVector params(prog.param_count, 0.0);
  for (Group g : kGroupOrder)
    for (const Layer& l : prog.layers) {
      if (l.group != g) continue;
      const int fan_in = l.transposed ? l.cin : l.cin * l.k * l.k;
      const double sd = std::sqrt(2.0 / fan_in);
      for (std::size_t i = 0; i < l.weight_count(); ++i) params[l.weight_offset + i] = sd * rng.normal();
    }
  return params;
}

std::uint64_t fingerprint(const ParamVector& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double p : params) {
    const auto bits = std::bit_cast<std::uint64_t>(p);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

Image cnn_forward(const NetSpec& spec, const ParamVector& params, const Image& x, CnnTape* tape) {
  check_input(spec, params, x);
  const Program prog = build_program(spec);
  const double scale = 1.0 / x.peak();
  std::vector<Tensor> values;
  values.reserve(prog.steps.size() + 1);
  Tensor input = make_tensor(1, x.height(), x.width());
  for (std::size_t i = 0; i < x.size(); ++i) input.data[i] = scale * x.pixels()[i];
  values.push_back(std::move(input));
  for (const Step& s : prog.steps) {
    if (s.kind == Step::Concat) {
      values.push_back(concat(values[s.in_a], values[s.in_b]));
    } else {
      values.push_back(forward_layer(prog.layers[s.layer], params, values[s.in_a]));
    }
  }
  const Tensor& branch = values.back();
  Image out(x.height(), x.width(), x.peak());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.pixels()[i] = (spec.residual_skip ? x.pixels()[i] : 0.0) + branch.data[i] / scale;
  if (!out.all_finite()) throw Error("cnn forward produced non-finite values");
  if (tape) {
    tape->spec = spec;
    tape->params_fingerprint = fingerprint(params);
    tape->input_scale = scale;
    tape->height = x.height();
    tape->width = x.width();
    tape->values = std::move(values);
  }
  return out;
}

CnnGradients cnn_backward(const NetSpec& spec, const ParamVector& params, const CnnTape& tape,
                          const Image& grad_out) {
  if (!(tape.spec == spec) || tape.values.empty() || params.size() != param_count(spec) ||
      tape.params_fingerprint != fingerprint(params))
    throw Error("cnn_backward: tape does not match this network and parameter vector");
  if (grad_out.height() != tape.height || grad_out.width() != tape.width)
    throw Error("cnn_backward: gradient shape does not match the recorded forward pass");
  const Program prog = build_program(spec);
  const double scale = tape.input_scale;

  std::vector<Tensor> grads(tape.values.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const Tensor& v = tape.values[i];
    grads[i] = make_tensor(v.channels, v.height, v.width);
  }
  // out = residual·x + branch(scale·x) / scale
  for (std::size_t i = 0; i < grad_out.size(); ++i) grads.back().data[i] = grad_out.pixels()[i] / scale;

  CnnGradients result{Image(tape.height, tape.width, grad_out.peak()), ParamVector(params.size(), 0.0)};
  for (std::size_t si = prog.steps.size(); si-- > 0;) {
    const Step& s = prog.steps[si];
    Tensor& g = grads[si + 1];
    if (s.kind == Step::Concat) {
      Tensor& ga = grads[s.in_a];
      Tensor& gb = grads[s.in_b];
      add_into(ga, g.data.data());
      add_into(gb, g.data.data() + ga.data.size());
    } else {
      const Tensor gin = backward_layer(prog.layers[s.layer], params, tape.values[s.in_a], tape.values[si + 1],
                                        std::move(g), result.grad_params);
      add_into(grads[s.in_a], gin.data.data());
    }
    grads[si + 1] = Tensor{};
  }
  for (std::size_t i = 0; i < result.grad_in.size(); ++i)
    result.grad_in.pixels()[i] = (spec.residual_skip ? grad_out.pixels()[i] : 0.0) + scale * grads[0].data[i];
  return result;
}

void write_weights(std::ostream& out, const NetSpec& spec, const ParamVector& params) {
  if (params.size() != param_count(spec)) throw Error("parameter count does not match NetSpec");
  binary::write_magic(out, "UNRW1");
  binary::write_i32(out, kParamLayoutVersion);
  binary::write_i32(out, spec.blocks_enc);
  binary::write_i32(out, spec.convs_per_block);
  binary::write_i32(out, spec.kernel);
  binary::write_i32(out, spec.channels_enc);
  binary::write_i32(out, spec.channels_dec);
  binary::write_i32(out, spec.channels_dec_out);
  binary::write_i32(out, (spec.residual_skip ? 1 : 0) | (spec.relu ? 2 : 0));
  binary::write_i64(out, static_cast<std::int64_t>(params.size()));
  for (double p : params) binary::write_f32(out, static_cast<float>(p));
}

void read_weights(std::istream& in, NetSpec& spec, ParamVector& params) {
  binary::expect_magic(in, "UNRW1");
  const std::int32_t version = binary::read_i32(in);
  if (version != kParamLayoutVersion)
    throw FormatError("unsupported weights layout version " + std::to_string(version));
  NetSpec s;
  s.blocks_enc = binary::read_i32(in);
  s.convs_per_block = binary::read_i32(in);
  s.kernel = binary::read_i32(in);
  s.channels_enc = binary::read_i32(in);
  s.channels_dec = binary::read_i32(in);
  s.channels_dec_out = binary::read_i32(in);
  const std::int32_t flags = binary::read_i32(in);
  s.residual_skip = (flags & 1) != 0;
  s.relu = (flags & 2) != 0;
  try {
    s.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("invalid NetSpec in weights file: ") + e.what());
  }
  const std::int64_t count = binary::read_i64(in);
  if (count < 0 || static_cast<std::size_t>(count) != param_count(s))
    throw FormatError("weights file parameter count does not match its NetSpec");
  ParamVector p(static_cast<std::size_t>(count));
  for (double& v : p) {
    v = binary::read_f32(in);
    if (!std::isfinite(v)) throw FormatError("weights file contains non-finite values");
  }
  spec = s;
  params = std::move(p);
}

void save_weights(const std::filesystem::path& path, const NetSpec& spec, const ParamVector& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write weights file: " + path.string());
  write_weights(out, spec, params);
  if (!out) throw Error("cannot write weights file: " + path.string());
}

void load_weights(const std::filesystem::path& path, NetSpec& spec, ParamVector& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open weights file: " + path.string());
  read_weights(in, spec, params);
}

}  // namespace unroll
