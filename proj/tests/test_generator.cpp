#include <catch2/catch_amalgamated.hpp>

#include "ftattack/checkpoint.hpp"
#include "ftattack/generator.hpp"
#include "ftattack/trainer.hpp"
#include "testutil.hpp"

using namespace ftattack;
using ftattack::testutil::random_tensor;

TEST_CASE("init_generator is deterministic per seed") {
  const GeneratorParams a = init_generator(32, 99);
  const GeneratorParams b = init_generator(32, 99);
  const GeneratorParams c = init_generator(32, 100);
  for (int l = 0; l < kGeneratorLayers; ++l) REQUIRE(a.conv_w[l] == b.conv_w[l]);
  bool any_diff = false;
  for (int l = 0; l < kGeneratorLayers; ++l)
    if (!(a.conv_w[l] == c.conv_w[l])) any_diff = true;
  REQUIRE(any_diff);
}

TEST_CASE("init_generator parameter count for h=32") {
  const GeneratorParams p = init_generator(32, 1);
  // conv1 3*32*9+32, conv2..4 each 32*32*9+32, conv5 32*3*9+3, bn 4*2*32
  const int64_t expected = (3 * 32 * 9 + 32) + 3 * (32 * 32 * 9 + 32) + (32 * 3 * 9 + 3) +
                           4 * 2 * 32;
  REQUIRE(p.parameter_count() == expected);
}

TEST_CASE("generate preserves shape and stays in (0,1)") {
  GeneratorParams p = init_generator(8, 5);
  for (auto hw : {std::pair<int64_t, int64_t>{7, 9}, {32, 32}, {1, 1}}) {
    const Tensor image = random_tensor({2, 3, hw.first, hw.second}, 7);
    const Tensor out = generate(p, image, Mode::eval);
    REQUIRE(out.shape() == image.shape());
    for (int64_t i = 0; i < out.size(); ++i) {
      REQUIRE(out[i] > real(0));
      REQUIRE(out[i] < real(1));
    }
  }
}

TEST_CASE("generate in eval mode is bitwise deterministic") {
  GeneratorParams p = init_generator(8, 9);
  const Tensor image = random_tensor({2, 3, 16, 16}, 11);
  // Burn some running stats first, then compare eval passes.
  generate(p, image, Mode::train);
  const Tensor a = generate(p, image, Mode::eval);
  const Tensor b = generate(p, image, Mode::eval);
  REQUIRE(a == b);
}

TEST_CASE("generate_backward: zero grad gives zero parameter gradients") {
  GeneratorParams p = init_generator(6, 13);
  const Tensor image = random_tensor({2, 3, 8, 8}, 15);
  GeneratorCache cache;
  const Tensor out = generate(p, image, Mode::train, &cache);
  const GeneratorGrads g = generate_backward(p, cache, Tensor(out.shape()));
  for (int l = 0; l < kGeneratorLayers; ++l) {
    for (int64_t i = 0; i < g.conv_w[l].size(); ++i) REQUIRE(g.conv_w[l][i] == real(0));
    for (int64_t i = 0; i < g.conv_b[l].size(); ++i) REQUIRE(g.conv_b[l][i] == real(0));
  }
}

TEST_CASE("final-layer bias gradient flows only through the sigmoid slope") {
  GeneratorParams p = init_generator(4, 17);
  const Tensor image = random_tensor({1, 3, 8, 8}, 19);
  GeneratorCache cache;
  const Tensor out = generate(p, image, Mode::train, &cache);
  const Tensor grad_out = Tensor::full(out.shape(), real(1));
  const GeneratorGrads g = generate_backward(p, cache, grad_out);
  // d out / d b5[c] = sum over that channel of s * (1 - s).
  const int64_t hw = 64;
  for (int64_t c = 0; c < 3; ++c) {
    double expected = 0.0;
    for (int64_t j = 0; j < hw; ++j) {
      const double s = out.data()[c * hw + j];
      expected += s * (1.0 - s);
    }
    REQUIRE(double(g.conv_b[4][c]) == Catch::Approx(expected).epsilon(1e-4));
  }
}

TEST_CASE("generator end-to-end gradcheck passes (32-bit, 1e-3)") {
  const GradcheckReport report = gradcheck_generator(2024);
  for (const auto& g : report.groups) {
    INFO(g.name << " max rel err " << g.max_rel_err);
    REQUIRE(g.pass);
  }
  REQUIRE(report.all_pass);
}

TEST_CASE("generator checkpoint round-trip") {
  GeneratorParams p = init_generator(8, 21);
  const Tensor image = random_tensor({2, 3, 16, 16}, 23);
  generate(p, image, Mode::train);  // populate running stats
  const NamedTensors saved = generator_to_named_tensors(p);
  const auto bytes = checkpoint_save(saved);
  GeneratorParams q = generator_from_named_tensors(checkpoint_load(bytes));
  REQUIRE(q.hidden_width == p.hidden_width);
  const Tensor a = generate(p, image, Mode::eval);
  const Tensor b = generate(q, image, Mode::eval);
  REQUIRE(a == b);
}
