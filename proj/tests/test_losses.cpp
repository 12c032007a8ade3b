#include <catch2/catch_amalgamated.hpp>

#include "ftattack/kernels.hpp"
#include "ftattack/losses.hpp"
#include "ftattack/simnet.hpp"
#include "testutil.hpp"

using namespace ftattack;
using ftattack::testutil::finite_diff;
using ftattack::testutil::random_tensor;
using ftattack::testutil::rel_err;

TEST_CASE("mae basics") {
  const Tensor a = random_tensor({2, 3, 4, 4}, 1);
  REQUIRE(mae(a, a) == real(0));
  const Tensor zeros({1, 3, 4, 4});
  const Tensor ones = Tensor::full({1, 3, 4, 4}, real(1));
  REQUIRE(mae(zeros, ones) == Catch::Approx(1.0));
  const Tensor p = Tensor::from_values({2}, {real(0), real(0.5)});
  const Tensor q = Tensor::from_values({2}, {real(0.5), real(1)});
  REQUIRE(mae(p, q) == Catch::Approx(0.5));
  REQUIRE_THROWS_AS(mae(a, zeros), ShapeError);
}

TEST_CASE("ssim of identical images is exactly 1") {
  const Tensor a = random_tensor({2, 3, 12, 12}, 3);
  REQUIRE(ssim(a, a) == real(1));
  REQUIRE(dssim(a, a) == real(0));
}

TEST_CASE("ssim of constant 0 vs constant 1 is C1/(1+C1)") {
  const Tensor zeros({1, 3, 10, 10});
  const Tensor ones = Tensor::full({1, 3, 10, 10}, real(1));
  const double c1 = 0.0001;
  REQUIRE(ssim(zeros, ones) == Catch::Approx(c1 / (1 + c1)).epsilon(1e-4));
  REQUIRE(dssim(zeros, ones) == Catch::Approx(0.49995).margin(1e-5));
}

TEST_CASE("ssim is symmetric and bounded") {
  for (uint64_t seed : {11ULL, 12ULL, 13ULL}) {
    const Tensor a = random_tensor({1, 3, 9, 9}, seed);
    const Tensor b = random_tensor({1, 3, 9, 9}, seed + 100);
    const real sab = ssim(a, b);
    const real sba = ssim(b, a);
    REQUIRE(std::abs(double(sab) - double(sba)) < 1e-7);
    REQUIRE(sab <= real(1));
    REQUIRE(sab >= real(-1));
    const real d = dssim(a, b);
    REQUIRE(d >= real(0));
    REQUIRE(d <= real(1));
  }
}

TEST_CASE("ssim rejects images smaller than the window") {
  const Tensor a = random_tensor({1, 3, 6, 8}, 15);
  REQUIRE_THROWS_AS(ssim(a, a), SizeError);
}

TEST_CASE("dssim is monotone against ssim") {
  const Tensor a = random_tensor({1, 3, 10, 10}, 17);
  Tensor near = a;
  for (int64_t i = 0; i < near.size(); ++i) near[i] += real(0.01);
  const Tensor far = random_tensor({1, 3, 10, 10}, 19);
  REQUIRE(ssim(a, near) > ssim(a, far));
  REQUIRE(dssim(a, near) < dssim(a, far));
}

TEST_CASE("varc: gray perturbations cost zero") {
  const Tensor a = random_tensor({2, 3, 5, 5}, 21);
  Tensor b = a;
  // Same shift on every channel at each pixel.
  const int64_t hw = 25;
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t j = 0; j < hw; ++j) {
      const real shift = real(0.01) * real(j % 7);
      for (int64_t c = 0; c < 3; ++c) b.data()[(n * 3 + c) * hw + j] += shift;
    }
  REQUIRE(varc(a, b) < 1e-12);
  REQUIRE(varc(a, a) == real(0));
}

TEST_CASE("varc: perturbation (0.1, 0, 0) per pixel") {
  const Tensor a = random_tensor({1, 3, 4, 4}, 23);
  Tensor b = a;
  for (int64_t j = 0; j < 16; ++j) b.data()[j] -= real(0.1);  // red channel only
  // Population variance of {0.1, 0, 0} = 0.00222...
  REQUIRE(varc(a, b) == Catch::Approx(0.0022222222).epsilon(1e-4));
}

TEST_CASE("varc requires three channels") {
  const Tensor a = random_tensor({1, 2, 4, 4}, 25);
  REQUIRE_THROWS_AS(varc(a, a), ShapeError);
}

TEST_CASE("feature_distance basics") {
  const Tensor fa = random_tensor({2, 36, 5, 5}, 27);
  REQUIRE(feature_distance(fa, fa) == real(0));
  Tensor fb = fa;
  for (int64_t i = 0; i < fb.size(); ++i) fb[i] += real(0.5);
  REQUIRE(feature_distance(fa, fb) == Catch::Approx(0.5).epsilon(1e-5));
}

TEST_CASE("feature distance of shifted image vanishes under zero-sum kernels") {
  const SimNet net(build_bank(5, 12));
  const Tensor image = random_tensor({1, 3, 12, 12}, 29);
  Tensor shifted = image;
  for (int64_t i = 0; i < shifted.size(); ++i) shifted[i] += real(0.13);
  const Tensor fa = net.simulate(image);
  const Tensor fb = net.simulate(shifted);
  REQUIRE(feature_distance(fa, fb) < 1e-5);
}

TEST_CASE("loss gradients match finite differences") {
  const Tensor a = random_tensor({1, 3, 9, 9}, 31);
  Tensor b = random_tensor({1, 3, 9, 9}, 33);

  SECTION("mae") {
    Tensor grad(b.shape());
    mae_with_grad(a, b, real(1), grad);
    auto loss = [&] { return double(mae(a, b)); };
    const GradcheckGroup r = testutil::check_grad("mae", b, grad, loss, 35);
    INFO(r.max_rel_err);
    REQUIRE(r.pass);
  }
  SECTION("ssim") {
    Tensor grad(b.shape());
    ssim_with_grad(a, b, real(1), grad);
    auto loss = [&] { return double(ssim(a, b)); };
    const GradcheckGroup r = testutil::check_grad("ssim", b, grad, loss, 36);
    INFO(r.max_rel_err << " verified " << r.verified << " skipped " << r.skipped);
    REQUIRE(r.pass);
  }
  SECTION("varc") {
    Tensor grad(b.shape());
    varc_with_grad(a, b, real(1), grad);
    auto loss = [&] { return double(varc(a, b)); };
    const GradcheckGroup r = testutil::check_grad("varc", b, grad, loss, 37);
    INFO(r.max_rel_err);
    REQUIRE(r.pass);
  }
  SECTION("feature_distance") {
    Tensor grad(b.shape());
    feature_distance_with_grad(a, b, real(1), grad);
    auto loss = [&] { return double(feature_distance(a, b)); };
    const GradcheckGroup r = testutil::check_grad("feature_distance", b, grad, loss, 38);
    INFO(r.max_rel_err);
    REQUIRE(r.pass);
  }
}

TEST_CASE("compound loss at identity is zero") {
  const Tensor a = random_tensor({1, 3, 10, 10}, 41);
  const SimNet net(build_bank(5, 12));
  const Tensor fa = net.simulate(a);
  const CompoundResult r = compound_loss(a, a, fa, fa, LossWeights{});
  REQUIRE(r.parts.total == real(0));
  REQUIRE(r.parts.mae == real(0));
  REQUIRE(r.parts.dssim == real(0));
  REQUIRE(r.parts.varc == real(0));
  REQUIRE(r.parts.feat_dist == real(0));
}

TEST_CASE("compound loss with delta=0 is non-negative") {
  const Tensor a = random_tensor({1, 3, 10, 10}, 43);
  const Tensor b = random_tensor({1, 3, 10, 10}, 44);
  LossWeights w;
  w.delta = 0;
  const CompoundResult r = compound_loss(a, b, Tensor({1}), Tensor({1}), w);
  REQUIRE(r.parts.total >= real(0));
}

TEST_CASE("compound loss scales linearly in the weights") {
  const Tensor a = random_tensor({1, 3, 10, 10}, 45);
  const Tensor b = random_tensor({1, 3, 10, 10}, 46);
  const SimNet net(build_bank(5, 12));
  const Tensor fa = net.simulate(a), fb = net.simulate(b);
  LossWeights w;
  const CompoundResult base = compound_loss(a, b, fa, fb, w);
  const real c = real(2.5);
  LossWeights scaled;
  scaled.alpha = c;
  scaled.beta = c;
  scaled.gamma = c;
  scaled.delta = c;
  const CompoundResult big = compound_loss(a, b, fa, fb, scaled);
  REQUIRE(big.parts.total == Catch::Approx(double(c) * double(base.parts.total)).epsilon(1e-5));
  for (int64_t i = 0; i < base.grad_adversarial.size(); ++i)
    REQUIRE(double(big.grad_adversarial[i]) ==
            Catch::Approx(double(c) * double(base.grad_adversarial[i]))
                .epsilon(1e-4)
                .margin(3e-6));
  for (int64_t i = 0; i < base.grad_features_adv.size(); ++i)
    REQUIRE(double(big.grad_features_adv[i]) ==
            Catch::Approx(double(c) * double(base.grad_features_adv[i]))
                .epsilon(1e-4)
                .margin(3e-6));
}

TEST_CASE("compound loss rejects invalid weights") {
  LossWeights w;
  w.alpha = -1;
  REQUIRE_THROWS_AS(w.validate(), ShapeError);
  LossWeights w2;
  w2.feature_sign = real(0.5);
  REQUIRE_THROWS_AS(w2.validate(), ShapeError);
}

TEST_CASE("compound loss gradient matches finite differences for the mixed objective") {
  const Tensor a = random_tensor({1, 3, 8, 8}, 47);
  Tensor b = random_tensor({1, 3, 8, 8}, 48);
  const SimNet net(build_bank(5, 12));
  LossWeights w;
  auto total = [&] {
    const Tensor fa = net.simulate(a), fb = net.simulate(b);
    return double(compound_loss(a, b, fa, fb, w).parts.total);
  };
  const Tensor fa = net.simulate(a), fb = net.simulate(b);
  CompoundResult r = compound_loss(a, b, fa, fb, w);
  Tensor grad = r.grad_adversarial;
  const Tensor through = net.simulate_backward(r.grad_features_adv, 3);
  for (int64_t i = 0; i < grad.size(); ++i) grad[i] += through[i];
  const GradcheckGroup check = testutil::check_grad("compound", b, grad, total, 49);
  INFO(check.max_rel_err << " verified " << check.verified << " skipped " << check.skipped);
  REQUIRE(check.pass);
}
