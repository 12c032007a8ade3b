// 64-bit build of the gradient suite: same checks, tighter tolerance.
#include <catch2/catch_amalgamated.hpp>

#include "ftattack/trainer.hpp"

using namespace ftattack;

static_assert(sizeof(real) == sizeof(double), "this target must build with FTATTACK_REAL64");

TEST_CASE("64-bit gradient suite passes at 1e-6") {
  const GradcheckReport report = gradcheck(GradcheckScope::all, 64064);
  for (const auto& g : report.groups) {
    INFO(g.name << " max rel err " << g.max_rel_err);
    CHECK(g.max_rel_err < 1e-6);
  }
}
