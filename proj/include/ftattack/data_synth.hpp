#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ftattack/data.hpp"
#include "ftattack/rng.hpp"

namespace ftattack {

/// Offline stand-in corpus in the exact CIFAR-10 binary layout (six files,
/// 10 classes, 5,000/1,000 records per class in train/test). Class identity
/// is carried by the dominant orientation of a sinusoidal texture; color
/// tint, background, blob distractors, and noise are class-independent, so a
/// classifier has to rely on oriented edges.
namespace synth {

inline constexpr double kOrientationStepDeg = 18.0;

inline void render_record(int label, uint64_t seed, bool test_split, int64_t record_index,
                          uint8_t* out /* 3072 bytes, CHW */) {
  Rng rng = Rng::keyed(seed, test_split ? 0x7E57ULL : 0x7124ULL,
                       static_cast<uint64_t>(record_index));
  const double theta_deg = kOrientationStepDeg * label + rng.uniform(-8.0, 8.0);
  const double theta = theta_deg * 3.14159265358979323846 / 180.0;
  const double freq = rng.uniform(0.20, 0.30);
  const double phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const double amp = rng.uniform(0.16, 0.30);

  double corner[4];
  for (double& v : corner) v = rng.uniform(0.30, 0.70);
  double tint[3];
  for (double& v : tint) v = rng.uniform(-0.06, 0.06);

  const int n_blobs = 1 + static_cast<int>(rng.next_below(2));
  double bx[2], by[2], bsig[2], bstr[2];
  for (int i = 0; i < n_blobs; ++i) {
    bx[i] = rng.uniform(4.0, 28.0);
    by[i] = rng.uniform(4.0, 28.0);
    bsig[i] = rng.uniform(2.5, 5.0);
    bstr[i] = rng.uniform(-0.22, 0.22);
  }

  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double two_pi_f = 2.0 * 3.14159265358979323846 * freq;
  for (int y = 0; y < kCifarSide; ++y) {
    for (int x = 0; x < kCifarSide; ++x) {
      const double fy = y / 31.0, fx = x / 31.0;
      const double bg = corner[0] * (1 - fy) * (1 - fx) + corner[1] * (1 - fy) * fx +
                        corner[2] * fy * (1 - fx) + corner[3] * fy * fx;
      const double grating = amp * std::sin(two_pi_f * (x * cos_t + y * sin_t) + phase);
      double blob = 0.0;
      for (int i = 0; i < n_blobs; ++i) {
        const double dx = x - bx[i], dy = y - by[i];
        blob += bstr[i] * std::exp(-(dx * dx + dy * dy) / (2.0 * bsig[i] * bsig[i]));
      }
      const double luma = bg + grating + blob;
      for (int c = 0; c < 3; ++c) {
        const double v = luma + tint[c] + rng.uniform(-0.05, 0.05);
        const double clamped = std::min(1.0, std::max(0.0, v));
        out[c * kCifarSide * kCifarSide + y * kCifarSide + x] =
            static_cast<uint8_t>(std::lround(clamped * 255.0));
      }
    }
  }
}

}  // namespace synth

/// Writes data_batch_1..5.bin and test_batch.bin into `dir`. Labels cycle
/// 0..9 so every class gets exactly 5,000 train / 1,000 test records.
inline void write_synthetic_cifar(const std::string& dir, uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::vector<uint8_t> record(kCifarRecordBytes);
  auto write_file = [&](const std::string& name, bool test_split, int64_t index_base) {
    const std::filesystem::path path = std::filesystem::path(dir) / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_synthetic_cifar: cannot open " + path.string());
    for (int64_t r = 0; r < kCifarRecordsPerFile; ++r) {
      const int64_t global = index_base + r;
      const int label = static_cast<int>(global % kCifarClasses);
      record[0] = static_cast<uint8_t>(label);
      synth::render_record(label, seed, test_split, global, record.data() + 1);
      out.write(reinterpret_cast<const char*>(record.data()), kCifarRecordBytes);
    }
    if (!out) throw IoError("write_synthetic_cifar: write failed for " + path.string());
  };
  for (int i = 1; i <= 5; ++i)
    write_file("data_batch_" + std::to_string(i) + ".bin", false,
               (i - 1) * kCifarRecordsPerFile);
  write_file("test_batch.bin", true, 0);
}

}  // namespace ftattack
