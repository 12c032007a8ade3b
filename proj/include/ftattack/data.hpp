#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ftattack/png_io.hpp"
#include "ftattack/rng.hpp"
#include "ftattack/tensor.hpp"

namespace ftattack {

inline constexpr int kCifarClasses = 10;
inline constexpr int kCifarSide = 32;
inline constexpr int64_t kCifarPixelBytes = 3 * 32 * 32;   // 3,072
inline constexpr int64_t kCifarRecordBytes = 1 + kCifarPixelBytes;  // 3,073
inline constexpr int64_t kCifarRecordsPerFile = 10000;
inline constexpr int64_t kCifarFileBytes = kCifarRecordsPerFile * kCifarRecordBytes;  // 30,730,000

inline const std::array<std::string, kCifarClasses>& cifar_class_names() {
  static const std::array<std::string, kCifarClasses> names = {
      "airplane", "automobile", "bird", "cat", "deer",
      "dog",      "frog",       "horse", "ship", "truck"};
  return names;
}

inline int cifar_class_id(const std::string& name) {
  const auto& names = cifar_class_names();
  for (int i = 0; i < kCifarClasses; ++i)
    if (names[static_cast<size_t>(i)] == name) return i;
  throw FormatError("unknown CIFAR-10 class name: " + name);
}

/// Images kept as raw bytes (CHW plane order, R then G then B); float
/// tensors in [0,1] are materialized per batch.
struct ImageSet {
  std::vector<uint8_t> pixels;       // count * 3072
  std::vector<int> labels;           // class ids 0..9
  std::vector<int64_t> src_indices;  // record index in the source train/test stream

  int64_t count() const { return static_cast<int64_t>(labels.size()); }

  void append(const uint8_t* record_pixels, int label, int64_t src_index) {
    pixels.insert(pixels.end(), record_pixels, record_pixels + kCifarPixelBytes);
    labels.push_back(label);
    src_indices.push_back(src_index);
  }

  /// (n,3,32,32) float images in [0,1] for the given element indices.
  Tensor gather(const std::vector<int64_t>& idx) const {
    Tensor out({static_cast<int64_t>(idx.size()), 3, kCifarSide, kCifarSide});
    for (size_t i = 0; i < idx.size(); ++i) {
      const uint8_t* src = pixels.data() + idx[i] * kCifarPixelBytes;
      real* dst = out.data() + static_cast<int64_t>(i) * kCifarPixelBytes;
      for (int64_t j = 0; j < kCifarPixelBytes; ++j)
        dst[j] = static_cast<real>(src[j]) / real(255);
    }
    return out;
  }

  Tensor gather_range(int64_t begin, int64_t end) const {
    std::vector<int64_t> idx(static_cast<size_t>(end - begin));
    std::iota(idx.begin(), idx.end(), begin);
    return gather(idx);
  }

  Tensor all() const { return gather_range(0, count()); }
};

struct RawCifar {
  ImageSet train;  // 50,000 records
  ImageSet test;   // 10,000 records
};

namespace detail {

inline void load_cifar_file(const std::filesystem::path& path, ImageSet& out,
                            int64_t index_base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_cifar10: missing file " + path.string());
  in.seekg(0, std::ios::end);
  const int64_t length = static_cast<int64_t>(in.tellg());
  if (length != kCifarFileBytes)
    throw FormatError("load_cifar10: " + path.string() + " has " + std::to_string(length) +
                      " bytes, expected " + std::to_string(kCifarFileBytes));
  in.seekg(0);
  std::vector<uint8_t> record(kCifarRecordBytes);
  for (int64_t r = 0; r < kCifarRecordsPerFile; ++r) {
    in.read(reinterpret_cast<char*>(record.data()), kCifarRecordBytes);
    if (!in) throw FormatError("load_cifar10: short read in " + path.string());
    const int label = record[0];
    if (label >= kCifarClasses)
      throw FormatError("load_cifar10: label " + std::to_string(label) + " out of range in " +
                        path.string());
    out.append(record.data() + 1, label, index_base + r);
  }
}

}  // namespace detail

/// Reads the six standard binary batch files from `dir`.
inline RawCifar load_cifar10(const std::string& dir) {
  RawCifar raw;
  raw.train.pixels.reserve(static_cast<size_t>(5 * kCifarRecordsPerFile * kCifarPixelBytes));
  for (int i = 1; i <= 5; ++i)
    detail::load_cifar_file(std::filesystem::path(dir) / ("data_batch_" + std::to_string(i) + ".bin"),
                            raw.train, (i - 1) * kCifarRecordsPerFile);
  detail::load_cifar_file(std::filesystem::path(dir) / "test_batch.bin", raw.test, 0);
  return raw;
}

/// CIFAR-10 partitioned into target classes (the victim's task) and the
/// remaining adversarial classes (the generator's training data).
struct DatasetSplit {
  ImageSet target_train, target_test, adv_train, adv_test;
  std::vector<int> target_classes;  // e.g. {3, 5} = cat, dog

  bool is_target(int label) const {
    return std::find(target_classes.begin(), target_classes.end(), label) !=
           target_classes.end();
  }
  /// Position of a label within target_classes (the victim's logit index).
  int target_index(int label) const {
    for (size_t i = 0; i < target_classes.size(); ++i)
      if (target_classes[i] == label) return static_cast<int>(i);
    throw FormatError("label " + std::to_string(label) + " is not a target class");
  }
};

inline DatasetSplit make_split(const RawCifar& raw, std::vector<int> target_classes = {3, 5}) {
  if (target_classes.empty()) throw FormatError("make_split: no target classes");
  for (int c : target_classes)
    if (c < 0 || c >= kCifarClasses)
      throw FormatError("make_split: class id " + std::to_string(c) + " out of range");
  DatasetSplit split;
  split.target_classes = target_classes;
  auto partition = [&](const ImageSet& src, ImageSet& target, ImageSet& adv) {
    for (int64_t i = 0; i < src.count(); ++i) {
      const uint8_t* px = src.pixels.data() + i * kCifarPixelBytes;
      if (split.is_target(src.labels[static_cast<size_t>(i)]))
        target.append(px, src.labels[static_cast<size_t>(i)], src.src_indices[static_cast<size_t>(i)]);
      else
        adv.append(px, src.labels[static_cast<size_t>(i)], src.src_indices[static_cast<size_t>(i)]);
    }
  };
  partition(raw.train, split.target_train, split.adv_train);
  partition(raw.test, split.target_test, split.adv_test);
  if (split.adv_train.count() == 0)
    throw FormatError("make_split: adversarial split is empty (all classes are targets)");
  return split;
}

// ---------------------------------------------------------------------------
// Split manifest: line-oriented text, one record per line.

inline void write_manifest(const std::string& path, const DatasetSplit& split,
                           const std::string& cifar_dir, const std::string& config_line = "") {
  std::ofstream out(path);
  if (!out) throw IoError("write_manifest: cannot open " + path);
  out << "# ftattack split manifest v1\n";
  if (!config_line.empty()) out << "# config: " << config_line << "\n";
  out << "cifar_dir " << cifar_dir << "\n";
  out << "target_classes";
  for (int c : split.target_classes) out << " " << cifar_class_names()[static_cast<size_t>(c)];
  out << "\n";
  auto dump = [&](const ImageSet& set, const char* name) {
    for (int64_t i = 0; i < set.count(); ++i)
      out << set.src_indices[static_cast<size_t>(i)] << " "
          << cifar_class_names()[static_cast<size_t>(set.labels[static_cast<size_t>(i)])] << " "
          << name << "\n";
  };
  dump(split.target_train, "target_train");
  dump(split.target_test, "target_test");
  dump(split.adv_train, "adv_train");
  dump(split.adv_test, "adv_test");
  if (!out) throw IoError("write_manifest: write failed for " + path);
}

/// Rebuilds a split from a manifest; `cifar_dir_override` replaces the
/// directory recorded in the file when non-empty.
inline DatasetSplit load_split_from_manifest(const std::string& path,
                                             const std::string& cifar_dir_override = "") {
  std::ifstream in(path);
  if (!in) throw IoError("load_split: cannot open manifest " + path);
  std::string cifar_dir;
  std::vector<int> target_classes;
  struct Row {
    int64_t index;
    int label;
    int partition;
  };
  std::vector<Row> rows;
  static const std::array<std::string, 4> parts = {"target_train", "target_test", "adv_train",
                                                   "adv_test"};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string first;
    ls >> first;
    if (first == "cifar_dir") {
      std::string rest;
      std::getline(ls, rest);
      const size_t pos = rest.find_first_not_of(' ');
      cifar_dir = pos == std::string::npos ? "" : rest.substr(pos);
    } else if (first == "target_classes") {
      std::string name;
      while (ls >> name) target_classes.push_back(cifar_class_id(name));
    } else {
      Row row{};
      row.index = std::stoll(first);
      std::string cls, part;
      if (!(ls >> cls >> part)) throw FormatError("load_split: malformed line: " + line);
      row.label = cifar_class_id(cls);
      const auto it = std::find(parts.begin(), parts.end(), part);
      if (it == parts.end()) throw FormatError("load_split: unknown partition: " + part);
      row.partition = static_cast<int>(it - parts.begin());
      rows.push_back(row);
    }
  }
  if (!cifar_dir_override.empty()) cifar_dir = cifar_dir_override;
  if (cifar_dir.empty()) throw FormatError("load_split: manifest has no cifar_dir");
  if (target_classes.empty()) throw FormatError("load_split: manifest has no target_classes");

  const RawCifar raw = load_cifar10(cifar_dir);
  DatasetSplit split;
  split.target_classes = target_classes;
  for (const Row& row : rows) {
    const ImageSet& src = (row.partition == 0 || row.partition == 2) ? raw.train : raw.test;
    if (row.index < 0 || row.index >= src.count())
      throw FormatError("load_split: record index out of range: " + std::to_string(row.index));
    if (src.labels[static_cast<size_t>(row.index)] != row.label)
      throw FormatError("load_split: label mismatch at record " + std::to_string(row.index) +
                        " (stale manifest?)");
    ImageSet& dst = row.partition == 0   ? split.target_train
                    : row.partition == 1 ? split.target_test
                    : row.partition == 2 ? split.adv_train
                                         : split.adv_test;
    dst.append(src.pixels.data() + row.index * kCifarPixelBytes, row.label, row.index);
  }
  return split;
}

// ---------------------------------------------------------------------------
// Deterministic batch sampling: Fisher-Yates reshuffle per epoch from a
// counter-based generator, identical across platforms and runs.

class BatchSampler {
 public:
  BatchSampler(int64_t count, int batch_size, uint64_t seed)
      : count_(count), batch_size_(batch_size), seed_(seed) {
    if (count <= 0) throw FormatError("BatchSampler: empty dataset");
    order_.resize(static_cast<size_t>(count));
  }

  /// Element indices of iteration `iter` (0-based).
  std::vector<int64_t> batch_indices(int64_t iter) {
    const int64_t per_epoch = std::max<int64_t>(1, count_ / batch_size_);
    const int64_t epoch = iter / per_epoch;
    const int64_t slot = iter % per_epoch;
    if (epoch != cached_epoch_) {
      std::iota(order_.begin(), order_.end(), int64_t(0));
      Rng rng = Rng::keyed(seed_, 0xBA7C4ULL + static_cast<uint64_t>(epoch));
      for (int64_t i = count_ - 1; i > 0; --i) {
        const int64_t j = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(i + 1)));
        std::swap(order_[static_cast<size_t>(i)], order_[static_cast<size_t>(j)]);
      }
      cached_epoch_ = epoch;
    }
    std::vector<int64_t> idx;
    idx.reserve(static_cast<size_t>(batch_size_));
    for (int64_t i = 0; i < batch_size_; ++i)
      idx.push_back(order_[static_cast<size_t>((slot * batch_size_ + i) % count_)]);
    return idx;
  }

 private:
  int64_t count_;
  int64_t batch_size_;
  uint64_t seed_;
  int64_t cached_epoch_ = -1;
  std::vector<int64_t> order_;
};

// ---------------------------------------------------------------------------
// PNG export

/// Writes one 8-bit RGB PNG per image, named <index>_<class>.png.
inline void export_png(const Tensor& images, const std::vector<int>& labels,
                       const std::string& out_dir) {
  if (images.rank() != 4 || images.dim(1) != 3) throw ShapeError("export_png: need (N,3,H,W)");
  std::filesystem::create_directories(out_dir);
  const int64_t n = images.dim(0), h = images.dim(2), w = images.dim(3);
  std::vector<uint8_t> rows(static_cast<size_t>(h * w * 3));
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          const real v = images.at4(i, c, y, x);
          const real clamped = std::min(real(1), std::max(real(0), v));
          rows[static_cast<size_t>((y * w + x) * 3 + c)] =
              static_cast<uint8_t>(std::lround(double(clamped) * 255.0));
        }
    char name[64];
    std::snprintf(name, sizeof(name), "%06lld_%s.png", static_cast<long long>(i),
                  labels.empty()
                      ? "image"
                      : cifar_class_names()[static_cast<size_t>(labels[static_cast<size_t>(i)])]
                            .c_str());
    write_png((std::filesystem::path(out_dir) / name).string(), rows, w, h, 3);
  }
}

/// Writes |a - b| min-max normalized per image.
inline void diff_png(const Tensor& a, const Tensor& b, const std::string& out_dir) {
  require_same_shape(a, b, "diff_png");
  Tensor diff(a.shape());
  const int64_t n = a.dim(0), per = a.size() / a.dim(0);
  for (int64_t i = 0; i < n; ++i) {
    real lo = std::numeric_limits<real>::max(), hi = std::numeric_limits<real>::lowest();
    for (int64_t j = 0; j < per; ++j) {
      const real d = std::abs(a[i * per + j] - b[i * per + j]);
      diff[i * per + j] = d;
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    const real scale = hi > lo ? real(1) / (hi - lo) : real(0);
    for (int64_t j = 0; j < per; ++j) diff[i * per + j] = (diff[i * per + j] - lo) * scale;
  }
  export_png(diff, {}, out_dir);
}

}  // namespace ftattack
