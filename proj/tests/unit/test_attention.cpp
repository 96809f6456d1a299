#include <gtest/gtest.h>

#include <random>

#include "dynpoint/attention.hpp"

using namespace dynpoint;

namespace {

TokenGrid random_grid(int b, int t, int n, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  TokenGrid g(b, t, n, c);
  for (double& v : g.values) v = nd(rng);
  return g;
}

// Every tensor random, so no gradient path is switched off by zero init.
MotionModuleParams random_params(int c, int heads, int max_time, std::uint64_t seed) {
  MotionModuleParams p = init_params(c, heads, max_time, seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> nd(0.0, 0.4);
  visit_tensors(p, [&](const std::string& name, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const bool gain = name.find("gain") != std::string::npos;
      t.data()[i] = gain ? 1.0 + nd(rng) : nd(rng);
    }
  });
  return p;
}

// Scalar reference implementation of one block on a single time step.
std::vector<double> reference_step(const std::vector<double>& x, const AttentionBlock& b, const Eigen::MatrixXd& pos) {
  const std::size_t c = x.size();
  const auto norm = [&](const std::vector<double>& v, const Eigen::VectorXd& gain, const Eigen::VectorXd& bias) {
    double mu = 0.0, var = 0.0;
    for (double e : v) mu += e;
    mu /= static_cast<double>(c);
    for (double e : v) var += (e - mu) * (e - mu);
    var /= static_cast<double>(c);
    std::vector<double> out(c);
    for (std::size_t i = 0; i < c; ++i) out[i] = (v[i] - mu) / std::sqrt(var + 1e-5) * gain(i) + bias(i);
    return out;
  };
  const auto matvec = [](const Eigen::MatrixXd& m, const std::vector<double>& v) {
    std::vector<double> out(static_cast<std::size_t>(m.rows()), 0.0);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index k = 0; k < m.cols(); ++k) out[r] += m(r, k) * v[k];
    return out;
  };
  std::vector<double> a = norm(x, b.norm1_gain, b.norm1_bias);
  for (std::size_t i = 0; i < c; ++i) a[i] += pos(0, i);
  // A single key: every head attends with weight 1 to its own value.
  const std::vector<double> attended = matvec(b.output, matvec(b.value, a));
  std::vector<double> x1(c);
  for (std::size_t i = 0; i < c; ++i) x1[i] = x[i] + attended[i] + b.output_bias(i);
  std::vector<double> h = matvec(b.ffn_in, norm(x1, b.norm2_gain, b.norm2_bias));
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double z = h[i] + b.ffn_in_bias(i);
    h[i] = 0.5 * z * (1.0 + std::erf(z / std::sqrt(2.0)));
  }
  const std::vector<double> f = matvec(b.ffn_out, h);
  std::vector<double> out(c);
  for (std::size_t i = 0; i < c; ++i) out[i] = x1[i] + f[i] + b.ffn_out_bias(i);
  return out;
}

double tensor_relative_error(const std::vector<double>& a, const std::vector<double>& n) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-8});
}

}  // namespace

TEST(MotionModule, FreshModuleIsExactIdentity) {
  const MotionModuleParams p = init_params(8, 4, 12, 7);
  for (int t : {1, 3, 12}) {
    const TokenGrid g = random_grid(2, t, 3, 8, 11);
    EXPECT_EQ(forward(g, p).values, g.values);
  }
}

TEST(MotionModule, ParameterCount) {
  const MotionModuleParams p = init_params(8, 4, 12, 0);
  // per block: 2 norms (4·8), q/k/v/o (4·64), output bias 8, ffn 32·8 + 32 + 8·32 + 8
  const std::size_t block = 4 * 8 + 4 * 64 + 8 + 256 + 32 + 256 + 8;
  EXPECT_EQ(parameter_count(p), 2 * block + 12 * 8);
}

TEST(MotionModule, SingleStepMatchesScalarReference) {
  const MotionModuleParams p = random_params(8, 4, 12, 3);
  const TokenGrid g = random_grid(1, 1, 2, 8, 5);
  const TokenGrid out = forward(g, p);
  for (int n = 0; n < 2; ++n) {
    std::vector<double> x(8);
    for (int c = 0; c < 8; ++c) x[c] = g(0, 0, n, c);
    for (const AttentionBlock& b : p.blocks) x = reference_step(x, b, p.positional);
    for (int c = 0; c < 8; ++c) EXPECT_NEAR(out(0, 0, n, c), x[c], 1e-12);
  }
}

TEST(MotionModule, SingleStepIgnoresQueryAndKey) {
  MotionModuleParams p = random_params(8, 2, 4, 4);
  const TokenGrid g = random_grid(1, 1, 3, 8, 6);
  const TokenGrid a = forward(g, p);
  p.blocks[0].query *= -3.0;
  p.blocks[1].key.setRandom();
  EXPECT_EQ(forward(g, p).values, a.values);
}

TEST(MotionModule, TokenPermutationEquivariant) {
  const MotionModuleParams p = random_params(8, 4, 12, 8);
  const TokenGrid g = random_grid(2, 5, 4, 8, 9);
  const std::vector<int> perm{2, 0, 3, 1};
  TokenGrid gp(2, 5, 4, 8);
  for (int b = 0; b < 2; ++b)
    for (int t = 0; t < 5; ++t)
      for (int n = 0; n < 4; ++n)
        for (int c = 0; c < 8; ++c) gp(b, t, n, c) = g(b, t, perm[n], c);
  const TokenGrid out = forward(g, p), outp = forward(gp, p);
  for (int b = 0; b < 2; ++b)
    for (int t = 0; t < 5; ++t)
      for (int n = 0; n < 4; ++n)
        for (int c = 0; c < 8; ++c) ASSERT_EQ(outp(b, t, n, c), out(b, t, perm[n], c));
}

TEST(MotionModule, TimeStepsInteract) {
  const MotionModuleParams p = random_params(8, 4, 12, 10);
  TokenGrid g = random_grid(1, 3, 1, 8, 12);
  const TokenGrid a = forward(g, p);
  g(0, 2, 0, 0) += 1.0;
  const TokenGrid b = forward(g, p);
  EXPECT_NE(a(0, 0, 0, 0), b(0, 0, 0, 0));
}

TEST(MotionModule, ShapeErrors) {
  const MotionModuleParams p = init_params(8, 4, 4, 0);
  EXPECT_THROW(forward(TokenGrid(1, 5, 1, 8), p), ContractViolation);
  EXPECT_THROW(forward(TokenGrid(1, 2, 1, 4), p), ContractViolation);
  EXPECT_THROW(init_params(8, 3, 4, 0), ContractViolation);
}

TEST(MotionModule, LargeInputsStayFinite) {
  const MotionModuleParams p = random_params(8, 4, 12, 13);
  TokenGrid g = random_grid(1, 6, 2, 8, 14);
  for (double& v : g.values) v *= 1e6;
  for (double v : forward(g, p).values) EXPECT_TRUE(std::isfinite(v));
}

class MotionModuleGradient : public ::testing::TestWithParam<std::tuple<int, int, int, int>> {};

TEST_P(MotionModuleGradient, AnalyticMatchesFiniteDifference) {
  const auto [channels, heads, time, tokens] = GetParam();
  const MotionModuleParams p = random_params(channels, heads, 4, 100 + channels + time + tokens);
  const TokenGrid g = random_grid(1, time, tokens, channels, 200 + time);
  const TokenGrid target = random_grid(1, time, tokens, channels, 300 + tokens);
  const LossAndGrad lg = loss_and_grad(g, p, target);
  const double h = 1e-6;

  std::vector<std::vector<double>> analytic, numeric;
  std::vector<std::string> names;
  visit_tensors(lg.grad, [&](const std::string& name, const auto& t) {
    names.push_back(name);
    analytic.emplace_back(t.data(), t.data() + t.size());
  });
  MotionModuleParams probe = p;
  visit_tensors(probe, [&](const std::string&, auto& t) {
    std::vector<double> col;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double keep = t.data()[i];
      t.data()[i] = keep + h;
      const double up = loss_and_grad(g, probe, target).loss;
      t.data()[i] = keep - h;
      const double down = loss_and_grad(g, probe, target).loss;
      t.data()[i] = keep;
      col.push_back((up - down) / (2.0 * h));
    }
    numeric.push_back(std::move(col));
  });
  for (std::size_t k = 0; k < names.size(); ++k)
    EXPECT_LE(tensor_relative_error(analytic[k], numeric[k]), 1e-4) << names[k];
  // Positional rows past the window get no gradient.
  for (int r = time; r < 4; ++r) EXPECT_TRUE(lg.grad.positional.row(r).isZero(0.0));
}

TEST_P(MotionModuleGradient, InputGradientMatchesFiniteDifference) {
  const auto [channels, heads, time, tokens] = GetParam();
  const MotionModuleParams p = random_params(channels, heads, 4, 400 + time);
  TokenGrid g = random_grid(1, time, tokens, channels, 500 + tokens);
  const TokenGrid target = random_grid(1, time, tokens, channels, 600);
  ForwardTrace trace;
  const TokenGrid out = forward(g, p, &trace);
  TokenGrid dout(1, time, tokens, channels);
  for (std::size_t i = 0; i < out.values.size(); ++i)
    dout.values[i] = 2.0 * (out.values[i] - target.values[i]) / static_cast<double>(out.values.size());
  TokenGrid din;
  backward(trace, p, dout, &din);
  std::vector<double> numeric;
  const double h = 1e-6;
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    const double keep = g.values[i];
    g.values[i] = keep + h;
    const double up = loss_and_grad(g, p, target).loss;
    g.values[i] = keep - h;
    const double down = loss_and_grad(g, p, target).loss;
    g.values[i] = keep;
    numeric.push_back((up - down) / (2.0 * h));
  }
  EXPECT_LE(tensor_relative_error(din.values, numeric), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Shapes, MotionModuleGradient,
                         ::testing::Values(std::make_tuple(8, 4, 1, 1), std::make_tuple(8, 4, 4, 3),
                                           std::make_tuple(4, 2, 3, 2), std::make_tuple(8, 2, 2, 1)));
