#pragma once

#include <cstdio>

#include "ftattack/generator.hpp"
#include "ftattack/io.hpp"
#include "ftattack/kernels.hpp"
#include "ftattack/victim.hpp"

namespace ftattack {

// ---------------------------------------------------------------------------
// Kernel bank <-> named tensors ("kernel_00".."kernel_NN" + "angles_deg")

inline NamedTensors bank_to_named_tensors(const KernelBank& bank) {
  NamedTensors out;
  char name[16];
  for (int i = 0; i < bank.count(); ++i) {
    const Kernel2D& k = bank.kernel(i);
    std::snprintf(name, sizeof(name), "kernel_%02d", i);
    std::vector<real> w(k.weights.size());
    for (size_t j = 0; j < w.size(); ++j) w[j] = static_cast<real>(k.weights[j]);
    out.emplace_back(name, Tensor::from_values({k.size, k.size}, std::move(w)));
  }
  Tensor angles({bank.count()});
  for (int i = 0; i < bank.count(); ++i)
    angles[i] = static_cast<real>(bank.kernel(i).angle_deg);
  out.emplace_back("angles_deg", std::move(angles));
  return out;
}

inline KernelBank bank_from_named_tensors(const NamedTensors& tensors) {
  const Tensor& angles = checkpoint_find(tensors, "angles_deg");
  std::vector<Kernel2D> kernels;
  char name[16];
  for (int64_t i = 0; i < angles.size(); ++i) {
    std::snprintf(name, sizeof(name), "kernel_%02d", static_cast<int>(i));
    const Tensor& w = checkpoint_find(tensors, name);
    if (w.rank() != 2 || w.dim(0) != w.dim(1))
      throw FormatError("bank checkpoint: kernel tensor must be square");
    Kernel2D k;
    k.size = static_cast<int>(w.dim(0));
    k.angle_deg = double(angles[i]);
    k.kind = k.angle_deg == 0.0 ? KernelKind::FT1 : KernelKind::Rotated;
    k.weights.assign(w.data(), w.data() + w.size());
    kernels.push_back(std::move(k));
  }
  const double step = kernels.size() > 1 ? kernels[1].angle_deg - kernels[0].angle_deg : 0.0;
  return KernelBank::from_kernels(std::move(kernels), step);
}

// ---------------------------------------------------------------------------
// Generator parameters

inline NamedTensors generator_to_named_tensors(const GeneratorParams& p) {
  NamedTensors out;
  for (int l = 0; l < kGeneratorLayers; ++l) {
    const std::string tag = "conv" + std::to_string(l + 1);
    out.emplace_back(tag + "/weight", p.conv_w[l]);
    out.emplace_back(tag + "/bias", p.conv_b[l]);
  }
  for (int l = 0; l < kGeneratorLayers - 1; ++l) {
    const std::string tag = "bn" + std::to_string(l + 1);
    out.emplace_back(tag + "/gamma", p.bn_gamma[l]);
    out.emplace_back(tag + "/beta", p.bn_beta[l]);
    out.emplace_back(tag + "/running_mean", p.bn_state[l].running_mean);
    out.emplace_back(tag + "/running_var", p.bn_state[l].running_var);
  }
  return out;
}

inline GeneratorParams generator_from_named_tensors(const NamedTensors& tensors) {
  GeneratorParams p;
  p.hidden_width = static_cast<int>(checkpoint_find(tensors, "conv1/weight").dim(0));
  for (int l = 0; l < kGeneratorLayers; ++l) {
    const std::string tag = "conv" + std::to_string(l + 1);
    p.conv_w[l] = checkpoint_find(tensors, tag + "/weight");
    p.conv_b[l] = checkpoint_find(tensors, tag + "/bias");
  }
  for (int l = 0; l < kGeneratorLayers - 1; ++l) {
    const std::string tag = "bn" + std::to_string(l + 1);
    p.bn_gamma[l] = checkpoint_find(tensors, tag + "/gamma");
    p.bn_beta[l] = checkpoint_find(tensors, tag + "/beta");
    p.bn_state[l] = BatchNormState::init(p.bn_gamma[l].size());
    p.bn_state[l].running_mean = checkpoint_find(tensors, tag + "/running_mean");
    p.bn_state[l].running_var = checkpoint_find(tensors, tag + "/running_var");
  }
  return p;
}

// ---------------------------------------------------------------------------
// Victim parameters

inline NamedTensors victim_to_named_tensors(const VictimParams& p) {
  NamedTensors out;
  for (int b = 0; b < kVictimBlocks; ++b) {
    const std::string tag = "block" + std::to_string(b + 1);
    out.emplace_back(tag + "/conv_w", p.conv_w[b]);
    out.emplace_back(tag + "/conv_b", p.conv_b[b]);
    out.emplace_back(tag + "/bn_gamma", p.bn_gamma[b]);
    out.emplace_back(tag + "/bn_beta", p.bn_beta[b]);
    out.emplace_back(tag + "/running_mean", p.bn_state[b].running_mean);
    out.emplace_back(tag + "/running_var", p.bn_state[b].running_var);
  }
  out.emplace_back("fc/weight", p.fc_w);
  out.emplace_back("fc/bias", p.fc_b);
  return out;
}

inline VictimParams victim_from_named_tensors(const NamedTensors& tensors) {
  VictimParams p;
  for (int b = 0; b < kVictimBlocks; ++b) {
    const std::string tag = "block" + std::to_string(b + 1);
    p.conv_w[b] = checkpoint_find(tensors, tag + "/conv_w");
    p.conv_b[b] = checkpoint_find(tensors, tag + "/conv_b");
    p.bn_gamma[b] = checkpoint_find(tensors, tag + "/bn_gamma");
    p.bn_beta[b] = checkpoint_find(tensors, tag + "/bn_beta");
    p.bn_state[b] = BatchNormState::init(p.bn_gamma[b].size());
    p.bn_state[b].running_mean = checkpoint_find(tensors, tag + "/running_mean");
    p.bn_state[b].running_var = checkpoint_find(tensors, tag + "/running_var");
    p.widths[static_cast<size_t>(b)] = static_cast<int>(p.conv_w[b].dim(0));
  }
  p.fc_w = checkpoint_find(tensors, "fc/weight");
  p.fc_b = checkpoint_find(tensors, "fc/bias");
  return p;
}

}  // namespace ftattack
