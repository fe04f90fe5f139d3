#include <gtest/gtest.h>

#include "hstn/gradcheck.hpp"

using namespace hstn;

TEST(Gradcheck, EveryModulePasses) {
  gradcheck::Options opt;
  for (const auto& module : gradcheck::modules()) {
    const auto results = gradcheck::run(module, opt);
    EXPECT_FALSE(results.empty()) << module;
    for (const auto& r : results) {
      EXPECT_TRUE(r.pass) << gradcheck::format_row(r);
      EXPECT_LE(r.max_rel_err, opt.tolerance) << gradcheck::format_row(r);
      EXPECT_GT(r.compared, 0u) << gradcheck::format_row(r);
    }
  }
}

TEST(Gradcheck, CorruptedGradientIsCaught) {
  for (const std::string op : {"dense", "sample_bilinear.field", "bending_energy"}) {
    gradcheck::Options opt;
    opt.corrupt = op;
    bool failed = false;
    for (const auto& module : gradcheck::modules())
      for (const auto& r : gradcheck::run(module, opt)) failed |= !r.pass;
    EXPECT_TRUE(failed) << op;
  }
}

TEST(Gradcheck, UnknownModuleIsRejected) {
  EXPECT_THROW(gradcheck::run("optimizer", {}), InvalidInput);
}

TEST(Gradcheck, CompareFlagsWrongGradient) {
  double x = 2.0;
  auto loss = [&] { return x * x * x; };
  gradcheck::Options opt;
  EXPECT_TRUE(gradcheck::compare("toy", "cube", {&x}, {12.0}, loss, opt).pass);
  EXPECT_FALSE(gradcheck::compare("toy", "cube", {&x}, {12.1}, loss, opt).pass);
}
