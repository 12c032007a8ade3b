#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "ftattack/data.hpp"
#include "ftattack/generator.hpp"
#include "ftattack/losses.hpp"
#include "ftattack/victim.hpp"

namespace ftattack {

struct AttackReport {
  struct PerClass {
    std::string name;
    int64_t count = 0;
    double acc_original_pct = 0.0;
    double acc_adversarial_pct = 0.0;
    // How often this class was predicted, over the whole test set.
    int64_t predicted_original = 0;
    int64_t predicted_adversarial = 0;

    bool operator==(const PerClass&) const = default;
  };
  std::vector<PerClass> classes;
  double mean_ssim = 0.0;
  double mean_mae = 0.0;
  std::string config_fingerprint;

  bool operator==(const AttackReport&) const = default;
};

struct EvalOptions {
  int batch = 200;
  bool identity_generator = false;  // control: feed originals as "adversarial"
  std::string config_fingerprint;
};

/// Classifies every target-test image twice (original and generated) and
/// reports per-true-class accuracy, prediction counts, and similarity stats.
inline AttackReport evaluate_attack(VictimParams& victim, GeneratorParams& generator,
                                    const DatasetSplit& split, const EvalOptions& opts = {}) {
  const ImageSet& set = split.target_test;
  if (set.count() == 0) throw FormatError("evaluate_attack: empty target_test");
  const size_t n_classes = split.target_classes.size();
  std::vector<int64_t> total(n_classes, 0), correct_orig(n_classes, 0),
      correct_adv(n_classes, 0), pred_orig(n_classes, 0), pred_adv(n_classes, 0);
  double ssim_sum = 0.0, mae_sum = 0.0;
  int64_t batches = 0;

  for (int64_t begin = 0; begin < set.count(); begin += opts.batch) {
    const int64_t end = std::min(set.count(), begin + int64_t(opts.batch));
    Tensor orig = set.gather_range(begin, end);
    Tensor adv = opts.identity_generator ? orig : generate(generator, orig, Mode::eval);
    ssim_sum += double(ssim(orig, adv)) * double(end - begin);
    mae_sum += double(mae(orig, adv)) * double(end - begin);
    ++batches;

    const Tensor p_orig = classify(victim, orig);
    const Tensor p_adv = classify(victim, adv);
    for (int64_t i = 0; i < end - begin; ++i) {
      const int truth = split.target_index(set.labels[static_cast<size_t>(begin + i)]);
      const int po = p_orig[i * 2 + 1] > p_orig[i * 2] ? 1 : 0;
      const int pa = p_adv[i * 2 + 1] > p_adv[i * 2] ? 1 : 0;
      ++total[static_cast<size_t>(truth)];
      ++pred_orig[static_cast<size_t>(po)];
      ++pred_adv[static_cast<size_t>(pa)];
      if (po == truth) ++correct_orig[static_cast<size_t>(truth)];
      if (pa == truth) ++correct_adv[static_cast<size_t>(truth)];
    }
  }

  AttackReport report;
  report.config_fingerprint = opts.config_fingerprint;
  report.mean_ssim = ssim_sum / double(set.count());
  report.mean_mae = mae_sum / double(set.count());
  for (size_t c = 0; c < n_classes; ++c) {
    AttackReport::PerClass pc;
    pc.name = cifar_class_names()[static_cast<size_t>(split.target_classes[c])];
    pc.count = total[c];
    pc.acc_original_pct = total[c] ? 100.0 * double(correct_orig[c]) / double(total[c]) : 0.0;
    pc.acc_adversarial_pct = total[c] ? 100.0 * double(correct_adv[c]) / double(total[c]) : 0.0;
    pc.predicted_original = pred_orig[c];
    pc.predicted_adversarial = pred_adv[c];
    report.classes.push_back(std::move(pc));
  }
  return report;
}

/// Fixed-column table with one accuracy cell per (input kind x class).
inline std::string report_render_text(const AttackReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << "Accuracy on test set [%]\n";
  os << std::left << std::setw(14) << "input";
  for (const auto& pc : report.classes) os << std::right << std::setw(10) << pc.name;
  os << "\n";
  os << std::left << std::setw(14) << "original";
  for (const auto& pc : report.classes) os << std::right << std::setw(10) << pc.acc_original_pct;
  os << "\n";
  os << std::left << std::setw(14) << "adversarial";
  for (const auto& pc : report.classes)
    os << std::right << std::setw(10) << pc.acc_adversarial_pct;
  os << "\n";
  os << std::setprecision(4);
  os << "mean SSIM(original, adversarial): " << report.mean_ssim << "\n";
  os << "mean MAE(original, adversarial):  " << report.mean_mae << "\n";
  os << "predicted-class counts (original):";
  for (const auto& pc : report.classes) os << " " << pc.name << "=" << pc.predicted_original;
  os << "\npredicted-class counts (adversarial):";
  for (const auto& pc : report.classes) os << " " << pc.name << "=" << pc.predicted_adversarial;
  os << "\n";
  if (!report.config_fingerprint.empty())
    os << "config: " << report.config_fingerprint << "\n";
  return os.str();
}

inline nlohmann::json report_to_json(const AttackReport& report) {
  nlohmann::json j;
  j["mean_ssim"] = report.mean_ssim;
  j["mean_mae"] = report.mean_mae;
  j["config_fingerprint"] = report.config_fingerprint;
  j["classes"] = nlohmann::json::array();
  for (const auto& pc : report.classes) {
    j["classes"].push_back({{"name", pc.name},
                            {"count", pc.count},
                            {"acc_original_pct", pc.acc_original_pct},
                            {"acc_adversarial_pct", pc.acc_adversarial_pct},
                            {"predicted_original", pc.predicted_original},
                            {"predicted_adversarial", pc.predicted_adversarial}});
  }
  return j;
}

inline AttackReport report_from_json(const nlohmann::json& j) {
  AttackReport report;
  report.mean_ssim = j.at("mean_ssim").get<double>();
  report.mean_mae = j.at("mean_mae").get<double>();
  report.config_fingerprint = j.at("config_fingerprint").get<std::string>();
  for (const auto& e : j.at("classes")) {
    AttackReport::PerClass pc;
    pc.name = e.at("name").get<std::string>();
    pc.count = e.at("count").get<int64_t>();
    pc.acc_original_pct = e.at("acc_original_pct").get<double>();
    pc.acc_adversarial_pct = e.at("acc_adversarial_pct").get<double>();
    pc.predicted_original = e.at("predicted_original").get<int64_t>();
    pc.predicted_adversarial = e.at("predicted_adversarial").get<int64_t>();
    report.classes.push_back(std::move(pc));
  }
  return report;
}

/// Original / adversarial / |difference| panels side by side, one PNG per
/// image, for the first `count` target-test images.
inline void export_triptychs(GeneratorParams& generator, const DatasetSplit& split,
                             const std::string& out_dir, int64_t count = 16) {
  const ImageSet& set = split.target_test;
  count = std::min<int64_t>(count, set.count());
  if (count <= 0) return;
  std::filesystem::create_directories(out_dir);
  Tensor orig = set.gather_range(0, count);
  Tensor adv = generate(generator, orig, Mode::eval);
  const int64_t h = orig.dim(2), w = orig.dim(3);
  std::vector<uint8_t> rows(static_cast<size_t>(h * 3 * w * 3));
  for (int64_t i = 0; i < count; ++i) {
    // panel 2 is |a-b| min-max normalized per image
    real lo = std::numeric_limits<real>::max(), hi = std::numeric_limits<real>::lowest();
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t j = 0; j < h * w; ++j) {
        const real d = std::abs(orig.data()[(i * 3 + c) * h * w + j] -
                                adv.data()[(i * 3 + c) * h * w + j]);
        lo = std::min(lo, d);
        hi = std::max(hi, d);
      }
    const real scale = hi > lo ? real(1) / (hi - lo) : real(0);
    auto put = [&](int64_t panel, int64_t c, int64_t y, int64_t x, real v) {
      v = std::min(real(1), std::max(real(0), v));
      rows[static_cast<size_t>((y * 3 * w + panel * w + x) * 3 + c)] =
          static_cast<uint8_t>(std::lround(double(v) * 255.0));
    };
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
          const real vo = orig.at4(i, c, y, x);
          const real va = adv.at4(i, c, y, x);
          put(0, c, y, x, vo);
          put(1, c, y, x, va);
          put(2, c, y, x, (std::abs(vo - va) - lo) * scale);
        }
    char name[64];
    std::snprintf(
        name, sizeof(name), "%06lld_%s.png", static_cast<long long>(i),
        cifar_class_names()[static_cast<size_t>(set.labels[static_cast<size_t>(i)])].c_str());
    write_png((std::filesystem::path(out_dir) / name).string(), rows, 3 * w, h, 3);
  }
}

}  // namespace ftattack
