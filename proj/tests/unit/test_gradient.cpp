#include <gtest/gtest.h>

#include <map>

#include "test_support.hpp"

namespace capri {
namespace {

TEST(Gradient, EveryTensorMatchesFiniteDifferences) {
  const auto probes = testing::gradient_check(3, 150, 1e-4, 2024);
  std::map<std::string, int> per_tensor;
  for (const auto& p : probes) {
    ++per_tensor[p.tensor];
    EXPECT_LE(p.rel_error, 1e-3) << p.tensor << "[" << p.index << "] analytic " << p.analytic << " numeric "
                                 << p.numeric;
  }
  for (const char* name : {"conv1.weight", "bn3.beta", "embed.noise", "head_mu.weight", "head_logvar.bias",
                           "dec1.weight", "out.bias"}) {
    EXPECT_GE(per_tensor[name], 3) << name;
  }
}

TEST(Gradient, SecondSeed) {
  for (const auto& p : testing::gradient_check(1, 60, 1e-4, 7)) {
    EXPECT_LE(p.rel_error, 1e-3) << p.tensor << "[" << p.index << "]";
  }
}

}  // namespace
}  // namespace capri
