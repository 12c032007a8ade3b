#include <catch2/catch_amalgamated.hpp>

#include "ftattack/simnet.hpp"
#include "testutil.hpp"

using namespace ftattack;
using ftattack::testutil::finite_diff;
using ftattack::testutil::random_tensor;
using ftattack::testutil::rel_err;

TEST_CASE("simulate: default bank maps 32x32x3 to (N,36,28,28)") {
  const SimNet net(build_bank(5, 12));
  const Tensor image = random_tensor({2, 3, 32, 32}, 1);
  const Tensor features = net.simulate(image);
  REQUIRE(features.shape() == std::vector<int64_t>{2, 36, 28, 28});
}

TEST_CASE("simulate: constant image gives all-zero features") {
  const SimNet net(build_bank(5, 12));
  const Tensor image = Tensor::full({1, 3, 16, 16}, real(0.42));
  const Tensor features = net.simulate(image);
  for (int64_t i = 0; i < features.size(); ++i) REQUIRE(std::abs(features[i]) < 1e-5);
}

TEST_CASE("simulate is homogeneous: simulate(a*I) = a*simulate(I)") {
  const SimNet net(build_bank(5, 12));
  const Tensor image = random_tensor({1, 3, 12, 12}, 3);
  Tensor scaled = image;
  const real a = real(0.37);
  for (int64_t i = 0; i < scaled.size(); ++i) scaled[i] *= a;
  const Tensor f1 = net.simulate(scaled);
  const Tensor f2 = net.simulate(image);
  for (int64_t i = 0; i < f1.size(); ++i)
    REQUIRE(double(f1[i]) == Catch::Approx(double(a) * double(f2[i])).margin(1e-5));
}

TEST_CASE("simulate rejects images smaller than the kernel") {
  const SimNet net(build_bank(5, 12));
  const Tensor image = random_tensor({1, 3, 4, 4}, 5);
  REQUIRE_THROWS_AS(net.simulate(image), SizeError);
}

TEST_CASE("per-channel constant shifts leave features unchanged") {
  const SimNet net(build_bank(5, 12));
  const Tensor image = random_tensor({1, 3, 16, 16}, 7);
  Tensor shifted = image;
  const real shift[3] = {real(0.2), real(-0.1), real(0.05)};
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t j = 0; j < 256; ++j) shifted.data()[c * 256 + j] += shift[c];
  const Tensor f1 = net.simulate(image);
  const Tensor f2 = net.simulate(shifted);
  for (int64_t i = 0; i < f1.size(); ++i) REQUIRE(std::abs(f1[i] - f2[i]) < 1e-5);
}

TEST_CASE("simulate is translation-equivariant on the interior") {
  const SimNet net(build_bank(5, 12));
  const Tensor image = random_tensor({1, 3, 14, 14}, 9);
  // Shift the image one pixel right.
  Tensor shifted({1, 3, 14, 14});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < 14; ++y)
      for (int64_t x = 1; x < 14; ++x)
        shifted.at4(0, c, y, x) = image.at4(0, c, y, x - 1);
  const Tensor f1 = net.simulate(image);
  const Tensor f2 = net.simulate(shifted);
  // Valid-region features shift by one pixel as well.
  for (int64_t ch = 0; ch < f1.dim(1); ++ch)
    for (int64_t y = 0; y < f1.dim(2); ++y)
      for (int64_t x = 1; x < f1.dim(3); ++x)
        REQUIRE(f2.at4(0, ch, y, x) == Catch::Approx(f1.at4(0, ch, y, x - 1)).margin(1e-5));
}

TEST_CASE("simulate is bitwise deterministic") {
  const SimNet net(build_bank(5, 12));
  const Tensor image = random_tensor({3, 3, 20, 20}, 11);
  REQUIRE(net.simulate(image) == net.simulate(image));
}

TEST_CASE("simulate_backward: zero gradient maps to zero") {
  const SimNet net(build_bank(5, 12));
  const Tensor grad = Tensor({1, 36, 8, 8});
  const Tensor gimg = net.simulate_backward(grad, 3);
  REQUIRE(gimg.shape() == std::vector<int64_t>{1, 3, 12, 12});
  for (int64_t i = 0; i < gimg.size(); ++i) REQUIRE(gimg[i] == real(0));
}

TEST_CASE("simulate_backward reduces to conv2d_backward for a single kernel") {
  const SimNet net(build_bank(3, 1));
  const Tensor image = random_tensor({1, 3, 8, 8}, 13);
  const Tensor grad = random_tensor({1, 3, 6, 6}, 15, -1.0, 1.0);
  const Tensor gimg = net.simulate_backward(grad, 3);

  ConvSpec spec;
  spec.in_channels = 3;
  spec.out_channels = 3;
  spec.kernel_size = 3;
  spec.depthwise = true;
  const ConvGrads ref = conv2d_backward(grad, image, net.weights(), spec);
  for (int64_t i = 0; i < gimg.size(); ++i)
    REQUIRE(gimg[i] == Catch::Approx(ref.grad_input[i]).margin(1e-6));
}

TEST_CASE("simulate_backward matches finite differences") {
  const SimNet net(build_bank(5, 12));
  Tensor image = random_tensor({1, 3, 9, 9}, 17);
  const Tensor coeff = random_tensor({1, 36, 5, 5}, 19, -1.0, 1.0);
  auto loss = [&] {
    const Tensor f = net.simulate(image);
    double acc = 0.0;
    for (int64_t i = 0; i < f.size(); ++i) acc += double(f[i]) * double(coeff[i]);
    return acc;
  };
  const Tensor gimg = net.simulate_backward(coeff, 3);
  const GradcheckGroup r = testutil::check_grad("simulate", image, gimg, loss, 21);
  INFO(r.max_rel_err << " verified " << r.verified);
  REQUIRE(r.pass);
}

TEST_CASE("grayscale mode produces one feature map per kernel") {
  const SimNet net(build_bank(5, 12), Padding::valid, /*grayscale=*/true);
  const Tensor image = random_tensor({2, 3, 16, 16}, 23);
  const Tensor f = net.simulate(image);
  REQUIRE(f.shape() == std::vector<int64_t>{2, 12, 12, 12});
  // Gradient path stays consistent with finite differences.
  Tensor img = random_tensor({1, 3, 9, 9}, 25);
  const Tensor coeff = random_tensor({1, 12, 5, 5}, 27, -1.0, 1.0);
  auto loss = [&] {
    const Tensor ff = net.simulate(img);
    double acc = 0.0;
    for (int64_t i = 0; i < ff.size(); ++i) acc += double(ff[i]) * double(coeff[i]);
    return acc;
  };
  const Tensor gimg = net.simulate_backward(coeff, 3);
  const GradcheckGroup r = testutil::check_grad("simulate_gray", img, gimg, loss, 29, 50);
  INFO(r.max_rel_err << " verified " << r.verified);
  REQUIRE(r.pass);
}

TEST_CASE("simnet weights are immutable across simulate calls") {
  const SimNet net(build_bank(5, 12));
  const Tensor before = net.weights();
  const Tensor image = random_tensor({2, 3, 16, 16}, 31);
  net.simulate(image);
  net.simulate_backward(Tensor({2, 36, 12, 12}), 3);
  REQUIRE(net.weights() == before);
}
