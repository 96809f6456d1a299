#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "dynpoint/errors.hpp"
#include "dynpoint/random.hpp"

namespace dynpoint {

/// B×T×N×C token tensor, row-major in that order.
struct TokenGrid {
  int batch = 0;
  int time = 0;
  int tokens = 0;
  int channels = 0;
  std::vector<double> values;

  TokenGrid() = default;
  TokenGrid(int b, int t, int n, int c, double fill = 0.0)
      : batch(b), time(t), tokens(n), channels(c),
        values(static_cast<std::size_t>(b) * t * n * c, fill) {
    require(b >= 0 && t >= 1 && n >= 0 && c >= 1, "TokenGrid: invalid shape");
  }

  std::size_t index(int b, int t, int n, int c) const {
    return ((static_cast<std::size_t>(b) * time + t) * tokens + n) * channels + c;
  }
  double& operator()(int b, int t, int n, int c) { return values[index(b, t, n, c)]; }
  double operator()(int b, int t, int n, int c) const { return values[index(b, t, n, c)]; }

  bool same_shape(const TokenGrid& o) const {
    return batch == o.batch && time == o.time && tokens == o.tokens && channels == o.channels;
  }
};

/// One pre-normalized block: x + Attn(LN(x) + P), then x + FFN(LN(x)).
/// Linear maps act as y = W·x (+ b).
struct AttentionBlock {
  Eigen::VectorXd norm1_gain, norm1_bias;
  Eigen::MatrixXd query, key, value, output;  // C×C
  Eigen::VectorXd output_bias;
  Eigen::VectorXd norm2_gain, norm2_bias;
  Eigen::MatrixXd ffn_in;  // 4C×C
  Eigen::VectorXd ffn_in_bias;
  Eigen::MatrixXd ffn_out;  // C×4C
  Eigen::VectorXd ffn_out_bias;
};

struct MotionModuleParams {
  int channels = 0;
  int heads = 0;
  int max_time = 0;
  std::array<AttentionBlock, 2> blocks;
  Eigen::MatrixXd positional;  // max_time×C, added to the attention input of each block
};

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr int kDefaultHeads = 4;
inline constexpr int kDefaultMaxTime = 12;

/// Calls f(name, tensor) for every parameter tensor in a fixed order.
template <typename Params, typename F>
void visit_tensors(Params& p, F&& f) {
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    auto& blk = p.blocks[b];
    const std::string pre = "block" + std::to_string(b) + ".";
    f(pre + "norm1_gain", blk.norm1_gain);
    f(pre + "norm1_bias", blk.norm1_bias);
    f(pre + "query", blk.query);
    f(pre + "key", blk.key);
    f(pre + "value", blk.value);
    f(pre + "output", blk.output);
    f(pre + "output_bias", blk.output_bias);
    f(pre + "norm2_gain", blk.norm2_gain);
    f(pre + "norm2_bias", blk.norm2_bias);
    f(pre + "ffn_in", blk.ffn_in);
    f(pre + "ffn_in_bias", blk.ffn_in_bias);
    f(pre + "ffn_out", blk.ffn_out);
    f(pre + "ffn_out_bias", blk.ffn_out_bias);
  }
  f(std::string("positional"), p.positional);
}

inline MotionModuleParams zeros_like(const MotionModuleParams& p) {
  MotionModuleParams z = p;
  visit_tensors(z, [](const std::string&, auto& t) { t.setZero(); });
  return z;
}

inline std::size_t parameter_count(const MotionModuleParams& p) {
  std::size_t n = 0;
  visit_tensors(p, [&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

/// Sinusoidal table: even channels sin(t/10000^(2i/C)), odd channels cos.
inline Eigen::MatrixXd sinusoidal_table(int max_time, int channels) {
  Eigen::MatrixXd table(max_time, channels);
  for (int t = 0; t < max_time; ++t)
    for (int c = 0; c < channels; ++c) {
      const double freq = std::pow(10000.0, -static_cast<double>(c - c % 2) / channels);
      table(t, c) = c % 2 == 0 ? std::sin(t * freq) : std::cos(t * freq);
    }
  return table;
}

/// Residual output maps zero-initialized, so a fresh module is the identity.
inline MotionModuleParams init_params(int channels, int heads, int max_time, std::uint64_t seed) {
  require(channels > 0 && heads > 0 && max_time > 0, "init_params: sizes must be positive");
  require(channels % heads == 0, "init_params: head count must divide channel count");
  MotionModuleParams p;
  p.channels = channels;
  p.heads = heads;
  p.max_time = max_time;
  CounterRng rng(CounterRng::stream_key(seed, 0x4d4f54ULL));
  const auto random_matrix = [&](int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    const double sd = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = sd * rng.normal();
    return m;
  };
  const int c = channels, hidden = 4 * channels;
  for (AttentionBlock& b : p.blocks) {
    b.norm1_gain = Eigen::VectorXd::Ones(c);
    b.norm1_bias = Eigen::VectorXd::Zero(c);
    b.query = random_matrix(c, c);
    b.key = random_matrix(c, c);
    b.value = random_matrix(c, c);
    b.output = Eigen::MatrixXd::Zero(c, c);
    b.output_bias = Eigen::VectorXd::Zero(c);
    b.norm2_gain = Eigen::VectorXd::Ones(c);
    b.norm2_bias = Eigen::VectorXd::Zero(c);
    b.ffn_in = random_matrix(hidden, c);
    b.ffn_in_bias = Eigen::VectorXd::Zero(hidden);
    b.ffn_out = Eigen::MatrixXd::Zero(c, hidden);
    b.ffn_out_bias = Eigen::VectorXd::Zero(c);
  }
  p.positional = sinusoidal_table(max_time, channels);
  return p;
}

namespace detail {

using RowMatrix = Eigen::MatrixXd;  // T×C, one time step per row

struct NormCache {
  Eigen::MatrixXd xhat;
  Eigen::VectorXd rstd;
};

inline Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& gain,
                                  const Eigen::VectorXd& bias, NormCache& cache) {
  const Eigen::Index rows = x.rows(), cols = x.cols();
  cache.xhat.resize(rows, cols);
  cache.rstd.resize(rows);
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    const double rstd = 1.0 / std::sqrt(var + kNormEpsilon);
    cache.rstd(r) = rstd;
    cache.xhat.row(r) = (x.row(r).array() - mu) * rstd;
    out.row(r) = cache.xhat.row(r).array() * gain.transpose().array() + bias.transpose().array();
  }
  return out;
}

inline Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& dout, const Eigen::VectorXd& gain,
                                           const NormCache& cache, Eigen::VectorXd& dgain,
                                           Eigen::VectorXd& dbias) {
  const Eigen::Index rows = dout.rows(), cols = dout.cols();
  dgain += (dout.array() * cache.xhat.array()).colwise().sum().transpose().matrix();
  dbias += dout.colwise().sum().transpose();
  Eigen::MatrixXd dx(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::RowVectorXd dxhat = (dout.row(r).array() * gain.transpose().array()).matrix();
    const double s1 = dxhat.sum();
    const double s2 = dxhat.dot(cache.xhat.row(r));
    dx.row(r) = cache.rstd(r) / static_cast<double>(cols) *
                (static_cast<double>(cols) * dxhat.array() - s1 - cache.xhat.row(r).array() * s2).matrix();
  }
  return dx;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }
inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

struct BlockCache {
  Eigen::MatrixXd x, attn_in, q, k, v, concat, x1, h2, pre_act, act;
  NormCache norm1, norm2;
  std::vector<Eigen::MatrixXd> attention;  // per head, T×T
};

inline Eigen::MatrixXd block_forward(const Eigen::MatrixXd& x, const AttentionBlock& b,
                                     const Eigen::MatrixXd& positional, int heads, BlockCache& c) {
  const Eigen::Index t = x.rows(), ch = x.cols();
  const Eigen::Index d = ch / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  c.x = x;
  c.attn_in = layer_norm(x, b.norm1_gain, b.norm1_bias, c.norm1) + positional.topRows(t);
  c.q = c.attn_in * b.query.transpose();
  c.k = c.attn_in * b.key.transpose();
  c.v = c.attn_in * b.value.transpose();
  c.concat.resize(t, ch);
  c.attention.assign(static_cast<std::size_t>(heads), Eigen::MatrixXd());
  for (int h = 0; h < heads; ++h) {
    Eigen::MatrixXd s = c.q.middleCols(h * d, d) * c.k.middleCols(h * d, d).transpose() * scale;
    for (Eigen::Index r = 0; r < t; ++r) {
      const double m = s.row(r).maxCoeff();
      s.row(r) = (s.row(r).array() - m).exp().matrix();
      s.row(r) /= s.row(r).sum();
    }
    c.concat.middleCols(h * d, d) = s * c.v.middleCols(h * d, d);
    c.attention[static_cast<std::size_t>(h)] = std::move(s);
  }
  c.x1 = x + c.concat * b.output.transpose();
  c.x1.rowwise() += b.output_bias.transpose();
  c.h2 = layer_norm(c.x1, b.norm2_gain, b.norm2_bias, c.norm2);
  c.pre_act = c.h2 * b.ffn_in.transpose();
  c.pre_act.rowwise() += b.ffn_in_bias.transpose();
  c.act = c.pre_act.unaryExpr([](double v) { return gelu(v); });
  Eigen::MatrixXd out = c.x1 + c.act * b.ffn_out.transpose();
  out.rowwise() += b.ffn_out_bias.transpose();
  return out;
}

/// Accumulates parameter gradients into `g`, returns d/dx.
inline Eigen::MatrixXd block_backward(const Eigen::MatrixXd& dout, const AttentionBlock& b, int heads,
                                      const BlockCache& c, AttentionBlock& g, Eigen::MatrixXd& dpositional) {
  const Eigen::Index t = dout.rows(), ch = dout.cols();
  const Eigen::Index d = ch / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  Eigen::MatrixXd dx1 = dout;
  g.ffn_out += dout.transpose() * c.act;
  g.ffn_out_bias += dout.colwise().sum().transpose();
  Eigen::MatrixXd dpre = dout * b.ffn_out;
  for (Eigen::Index r = 0; r < dpre.rows(); ++r)
    for (Eigen::Index k = 0; k < dpre.cols(); ++k) dpre(r, k) *= gelu_grad(c.pre_act(r, k));
  g.ffn_in += dpre.transpose() * c.h2;
  g.ffn_in_bias += dpre.colwise().sum().transpose();
  const Eigen::MatrixXd dh2 = dpre * b.ffn_in;
  dx1 += layer_norm_backward(dh2, b.norm2_gain, c.norm2, g.norm2_gain, g.norm2_bias);

  Eigen::MatrixXd dx = dx1;
  g.output += dx1.transpose() * c.concat;
  g.output_bias += dx1.colwise().sum().transpose();
  const Eigen::MatrixXd dconcat = dx1 * b.output;
  Eigen::MatrixXd dq(t, ch), dk(t, ch), dv(t, ch);
  for (int h = 0; h < heads; ++h) {
    const Eigen::MatrixXd& a = c.attention[static_cast<std::size_t>(h)];
    const Eigen::MatrixXd doh = dconcat.middleCols(h * d, d);
    const Eigen::MatrixXd da = doh * c.v.middleCols(h * d, d).transpose();
    dv.middleCols(h * d, d) = a.transpose() * doh;
    Eigen::MatrixXd ds = a.array() * (da.array().colwise() - (da.array() * a.array()).rowwise().sum());
    ds *= scale;
    dq.middleCols(h * d, d) = ds * c.k.middleCols(h * d, d);
    dk.middleCols(h * d, d) = ds.transpose() * c.q.middleCols(h * d, d);
  }
  g.query += dq.transpose() * c.attn_in;
  g.key += dk.transpose() * c.attn_in;
  g.value += dv.transpose() * c.attn_in;
  const Eigen::MatrixXd dattn = dq * b.query + dk * b.key + dv * b.value;
  dpositional.topRows(t) += dattn;
  dx += layer_norm_backward(dattn, b.norm1_gain, c.norm1, g.norm1_gain, g.norm1_bias);
  return dx;
}

}  // namespace detail

/// Per-sequence caches of a forward pass, consumed by `backward`.
struct ForwardTrace {
  int batch = 0, time = 0, tokens = 0, channels = 0;
  std::vector<std::array<detail::BlockCache, 2>> sequences;  // index b·N + n
};

namespace detail {

inline void check_input(const TokenGrid& g, const MotionModuleParams& p) {
  require(g.channels == p.channels, "motion module: channel count mismatch");
  require(g.time >= 1, "motion module: empty time axis");
  require(g.time <= p.max_time, "motion module: window longer than the positional table");
}

inline Eigen::MatrixXd gather_sequence(const TokenGrid& g, int b, int n) {
  Eigen::MatrixXd x(g.time, g.channels);
  for (int t = 0; t < g.time; ++t)
    for (int c = 0; c < g.channels; ++c) x(t, c) = g(b, t, n, c);
  return x;
}

inline void scatter_sequence(const Eigen::MatrixXd& x, TokenGrid& g, int b, int n) {
  for (int t = 0; t < g.time; ++t)
    for (int c = 0; c < g.channels; ++c) g(b, t, n, c) = x(t, c);
}

}  // namespace detail

/// (B,T,N,C) → (B·N,T,C), two blocks of attention over T, reshape back.
inline TokenGrid forward(const TokenGrid& g, const MotionModuleParams& p, ForwardTrace* trace = nullptr) {
  detail::check_input(g, p);
  TokenGrid out(g.batch, g.time, g.tokens, g.channels);
  if (trace) {
    trace->batch = g.batch;
    trace->time = g.time;
    trace->tokens = g.tokens;
    trace->channels = g.channels;
    trace->sequences.assign(static_cast<std::size_t>(g.batch) * g.tokens, {});
  }
  std::array<detail::BlockCache, 2> scratch;
  for (int b = 0; b < g.batch; ++b) {
    for (int n = 0; n < g.tokens; ++n) {
      auto& caches = trace ? trace->sequences[static_cast<std::size_t>(b) * g.tokens + n] : scratch;
      Eigen::MatrixXd x = detail::gather_sequence(g, b, n);
      for (std::size_t k = 0; k < p.blocks.size(); ++k)
        x = detail::block_forward(x, p.blocks[k], p.positional, p.heads, caches[k]);
      detail::scatter_sequence(x, out, b, n);
    }
  }
  return out;
}

/// Parameter gradients given dL/d(output); optionally dL/d(input).
inline MotionModuleParams backward(const ForwardTrace& trace, const MotionModuleParams& p,
                                   const TokenGrid& d_output, TokenGrid* d_input = nullptr) {
  require(d_output.batch == trace.batch && d_output.time == trace.time && d_output.tokens == trace.tokens &&
              d_output.channels == trace.channels,
          "motion module backward: gradient shape mismatch");
  MotionModuleParams grad = zeros_like(p);
  if (d_input) *d_input = TokenGrid(trace.batch, trace.time, trace.tokens, trace.channels);
  for (int b = 0; b < trace.batch; ++b) {
    for (int n = 0; n < trace.tokens; ++n) {
      const auto& caches = trace.sequences[static_cast<std::size_t>(b) * trace.tokens + n];
      Eigen::MatrixXd dx = detail::gather_sequence(d_output, b, n);
      for (std::size_t k = p.blocks.size(); k-- > 0;)
        dx = detail::block_backward(dx, p.blocks[k], p.heads, caches[k], grad.blocks[k], grad.positional);
      if (d_input) detail::scatter_sequence(dx, *d_input, b, n);
    }
  }
  return grad;
}

struct LossAndGrad {
  double loss = 0.0;
  MotionModuleParams grad;
};

/// Mean squared error to `target` and its analytic parameter gradient.
inline LossAndGrad loss_and_grad(const TokenGrid& g, const MotionModuleParams& p, const TokenGrid& target) {
  require(g.same_shape(target), "loss_and_grad: target shape mismatch");
  ForwardTrace trace;
  const TokenGrid out = forward(g, p, &trace);
  TokenGrid dout(g.batch, g.time, g.tokens, g.channels);
  const double inv = 1.0 / static_cast<double>(out.values.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const double r = out.values[i] - target.values[i];
    loss += r * r;
    dout.values[i] = 2.0 * r * inv;
  }
  return {loss * inv, backward(trace, p, dout)};
}

}  // namespace dynpoint
