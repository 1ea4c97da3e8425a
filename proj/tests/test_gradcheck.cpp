#include <gtest/gtest.h>

#include <sstream>

#include "icr/gradcheck.hpp"
#include "icr/gradcheck_suite.hpp"

using namespace icr;
using namespace icr::gradsuite;

// Central differences are exact (up to rounding) for a quadratic loss of
// a linear model.
TEST(FiniteDifference, SingleLinearQuadraticPassesAtTightTolerance) {
  SeededRng rng(3);
  Linear layer(4, 3, rng);
  const Matrix x = random_gaussian_matrix(2, 4, rng);
  const Matrix target = random_gaussian_matrix(2, 3, rng);
  ParameterStore ps;
  layer.register_params(ps, "linear");
  auto loss = [&] { return quadratic_loss(layer.forward(x), target); };
  auto fb = [&] {
    ps.zero_grads();
    const Matrix y = layer.forward(x);
    layer.backward(quadratic_grad(y, target));
  };
  const GradCheckReport r = finite_difference_check(ps, loss, fb, 1e-6);
  EXPECT_TRUE(r.pass);
  EXPECT_LE(r.max_rel_error, 1e-6);
}

// Scaling the analytic gradient by 1.1 must be detected with relative
// error 0.1/1.1.
TEST(FiniteDifference, DetectsScaledGradient) {
  SeededRng rng(5);
  Linear layer(3, 3, rng);
  const Matrix x = random_gaussian_matrix(2, 3, rng);
  const Matrix target = random_gaussian_matrix(2, 3, rng);
  ParameterStore ps;
  layer.register_params(ps, "linear");
  auto loss = [&] { return quadratic_loss(layer.forward(x), target); };
  auto fb = [&] {
    ps.zero_grads();
    const Matrix y = layer.forward(x);
    layer.backward(quadratic_grad(y, target));
    for (const auto& [name, e] : ps.params()) scale_inplace(*e.grad, 1.1);
  };
  const GradCheckReport r = finite_difference_check(ps, loss, fb, 1e-4);
  EXPECT_FALSE(r.pass);
  EXPECT_NEAR(r.max_rel_error, 0.1 / 1.1, 1e-4);
}

// Every layer kind passes at 1e-4 over 100 seeds at desk-scale shapes.
TEST(FiniteDifference, LayerKinds100Seeds) {
  struct Case {
    const char* name;
    GradCheckReport (*run)(std::uint64_t, double);
  };
  const Case cases[] = {
      {"linear", chain_linear},
      {"linear_relu_linear", chain_linear_relu_linear},
      {"projection_head", chain_projection_head},
      {"batchnorm", chain_batchnorm},
      {"grucell", chain_grucell},
      {"embedding_meanpool", chain_embedding_meanpool},
  };
  for (const Case& c : cases) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const GradCheckReport r = c.run(seed * 977 + 13, 1e-4);
      ASSERT_TRUE(r.pass) << c.name << " seed " << seed << " max rel " << r.max_rel_error;
    }
  }
}

TEST(FiniteDifference, FullLtdChainPasses) {
  const GradCheckReport r = chain_ltd(41, 1e-4);
  EXPECT_TRUE(r.pass) << r.max_rel_error;
}

TEST(FiniteDifference, FullItdChainPasses) {
  const GradCheckReport r = chain_itd(43, 1e-4);
  EXPECT_TRUE(r.pass) << r.max_rel_error;
}

TEST(FiniteDifference, GruEncoderChainPasses) {
  const GradCheckReport r = chain_dual_encoder_infonce(47, 1e-4, CaptionPooling::Gru);
  EXPECT_TRUE(r.pass) << r.max_rel_error;
}

TEST(FiniteDifference, TripletBatchnormChainPasses) {
  const GradCheckReport r = chain_triplet_batchnorm(53, 1e-4);
  EXPECT_TRUE(r.pass) << r.max_rel_error;
}

TEST(FiniteDifference, LagrangianCombinedChainPasses) {
  const GradCheckReport r = chain_lagrangian(59, 1e-4);
  EXPECT_TRUE(r.pass) << r.max_rel_error;
}

TEST(GradCheckSuite, RunsCleanWithSmallSeedCount) {
  std::ostringstream log;
  EXPECT_TRUE(run_gradcheck_suite(123, 2, log));
  EXPECT_NE(log.str().find("[PASS]"), std::string::npos);
}
