#include <catch2/catch_amalgamated.hpp>

#include "ftattack/data_synth.hpp"
#include "ftattack/eval.hpp"
#include "testutil.hpp"

using namespace ftattack;

namespace {

const DatasetSplit& eval_split() {
  static const DatasetSplit split = [] {
    const auto dir = testutil::scratch_dir("eval_corpus");
    write_synthetic_cifar(dir.string(), 777);
    DatasetSplit s = make_split(load_cifar10(dir.string()));
    // Shrink target_test to keep the harness tests quick.
    const int64_t keep = 100;
    s.target_test.pixels.resize(static_cast<size_t>(keep * kCifarPixelBytes));
    s.target_test.labels.resize(static_cast<size_t>(keep));
    s.target_test.src_indices.resize(static_cast<size_t>(keep));
    return s;
  }();
  return split;
}

}  // namespace

TEST_CASE("identity generator yields exactly equal accuracies") {
  VictimParams victim = init_victim({8, 12, 16}, 1);
  GeneratorParams generator = init_generator(8, 2);
  EvalOptions opts;
  opts.identity_generator = true;
  const AttackReport report = evaluate_attack(victim, generator, eval_split(), opts);
  REQUIRE(report.classes.size() == 2);
  for (const auto& pc : report.classes)
    REQUIRE(pc.acc_original_pct == pc.acc_adversarial_pct);
  REQUIRE(report.mean_ssim == Catch::Approx(1.0));
  REQUIRE(report.mean_mae == Catch::Approx(0.0));
}

TEST_CASE("accuracy computation matches a hand-counted fixture") {
  // 10 images through a victim: count matches against manual bookkeeping.
  VictimParams victim = init_victim({8, 12, 16}, 3);
  DatasetSplit small = eval_split();
  small.target_test.pixels.resize(static_cast<size_t>(10 * kCifarPixelBytes));
  small.target_test.labels.resize(10);
  small.target_test.src_indices.resize(10);
  GeneratorParams generator = init_generator(8, 4);
  EvalOptions opts;
  opts.identity_generator = true;
  const AttackReport report = evaluate_attack(victim, generator, small, opts);

  const Tensor probs = classify(victim, small.target_test.gather_range(0, 10));
  std::array<int, 2> correct{}, total{};
  for (int64_t i = 0; i < 10; ++i) {
    const int truth = small.target_index(small.target_test.labels[static_cast<size_t>(i)]);
    const int pred = probs[i * 2 + 1] > probs[i * 2] ? 1 : 0;
    ++total[static_cast<size_t>(truth)];
    if (pred == truth) ++correct[static_cast<size_t>(truth)];
  }
  for (size_t c = 0; c < 2; ++c) {
    const double expected = total[c] ? 100.0 * correct[c] / total[c] : 0.0;
    REQUIRE(report.classes[c].acc_original_pct == Catch::Approx(expected));
  }
  // Prediction counts cover the whole set.
  REQUIRE(report.classes[0].predicted_original + report.classes[1].predicted_original == 10);
}

TEST_CASE("report text table has one accuracy cell per input kind and class") {
  VictimParams victim = init_victim({8, 12, 16}, 5);
  GeneratorParams generator = init_generator(8, 6);
  EvalOptions opts;
  opts.identity_generator = true;
  opts.config_fingerprint = "test-fingerprint";
  const AttackReport report = evaluate_attack(victim, generator, eval_split(), opts);
  const std::string text = report_render_text(report);
  REQUIRE(text.find("cat") != std::string::npos);
  REQUIRE(text.find("dog") != std::string::npos);
  REQUIRE(text.find("original") != std::string::npos);
  REQUIRE(text.find("adversarial") != std::string::npos);
  REQUIRE(text.find("test-fingerprint") != std::string::npos);
  // Rendering is deterministic.
  REQUIRE(report_render_text(report) == text);
}

TEST_CASE("structured report round-trips to an equal report") {
  VictimParams victim = init_victim({8, 12, 16}, 7);
  GeneratorParams generator = init_generator(8, 8);
  EvalOptions opts;
  opts.config_fingerprint = "fp";
  const AttackReport report = evaluate_attack(victim, generator, eval_split(), opts);
  const nlohmann::json j = report_to_json(report);
  const AttackReport back = report_from_json(nlohmann::json::parse(j.dump()));
  REQUIRE(back == report);
}

TEST_CASE("triptych export writes one panel-triple PNG per image") {
  const auto dir = testutil::scratch_dir("triptychs");
  GeneratorParams generator = init_generator(8, 9);
  export_triptychs(generator, eval_split(), dir.string(), 3);
  int count = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    ++count;
    const Tensor img = read_png_rgb(e.path().string());
    REQUIRE(img.dim(2) == 3 * 32);  // three panels side by side
    REQUIRE(img.dim(1) == 32);
  }
  REQUIRE(count == 3);
}
