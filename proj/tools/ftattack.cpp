// Command-line front end: each pipeline stage (kernels, data, victim
// training, generator training, attack, evaluation, gradient checks) is an
// independent subcommand.
#include <CLI11.hpp>

#include <cinttypes>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ftattack/checkpoint.hpp"
#include "ftattack/data.hpp"
#include "ftattack/data_synth.hpp"
#include "ftattack/eval.hpp"
#include "ftattack/kernels.hpp"
#include "ftattack/parallel.hpp"
#include "ftattack/trainer.hpp"
#include "ftattack/victim.hpp"

namespace {

using namespace ftattack;

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Canonical "key=value" list of the resolved options plus the worker count;
/// echoed to stdout and into every produced artifact.
class Fingerprint {
 public:
  explicit Fingerprint(std::string command) : command_(std::move(command)) {}

  template <class T>
  void add(const std::string& key, const T& value) {
    std::ostringstream os;
    os << value;
    items_.emplace_back(key, os.str());
  }

  std::string str() const {
    std::ostringstream os;
    os << command_;
    for (const auto& [k, v] : items_) os << " " << k << "=" << v;
    os << " threads=" << worker_count();
    const std::string body = os.str();
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016" PRIx64, fnv1a64(body));
    return body + " fingerprint=" + hex;
  }

  void echo() const { std::cout << "config: " << str() << "\n"; }

 private:
  std::string command_;
  std::vector<std::pair<std::string, std::string>> items_;
};

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  out << content;
  if (!out) throw IoError("write failed for " + path);
}

std::vector<int> parse_class_list(const std::string& csv) {
  std::vector<int> ids;
  std::istringstream ss(csv);
  std::string token;
  while (std::getline(ss, token, ',')) ids.push_back(cifar_class_id(token));
  return ids;
}

std::array<int, 3> parse_widths(const std::string& csv) {
  std::array<int, 3> w{};
  std::istringstream ss(csv);
  std::string token;
  for (int i = 0; i < 3; ++i) {
    if (!std::getline(ss, token, ',')) throw FormatError("--widths needs three values");
    w[static_cast<size_t>(i)] = std::stoi(token);
  }
  return w;
}

AugmentationConfig augment_by_name(const std::string& name) {
  if (name == "base") return AugmentationConfig::base();
  if (name == "enriched") return AugmentationConfig::enriched();
  if (name == "none") return AugmentationConfig::none();
  throw FormatError("--augment must be base, enriched, or none");
}

std::string victim_log_csv(const std::vector<VictimTrainLogRow>& rows,
                           const std::string& config) {
  std::ostringstream os;
  os << "# config: " << config << "\n";
  os << "iter,loss,lr\n";
  for (const auto& r : rows) os << r.iter << "," << r.loss << "," << r.lr << "\n";
  return os.str();
}

std::string generator_log_csv(const std::vector<GenTrainLogRow>& rows,
                              const std::string& config) {
  std::ostringstream os;
  os << "# config: " << config << "\n";
  os << "iter,mae,dssim,varc,feat_dist,total\n";
  for (const auto& r : rows)
    os << r.iter << "," << r.parts.mae << "," << r.parts.dssim << "," << r.parts.varc << ","
       << r.parts.feat_dist << "," << r.parts.total << "\n";
  return os.str();
}

int run(int argc, char** argv) {
  CLI::App app{"F-transform kernel black-box adversarial attack pipeline"};
  app.require_subcommand(1);

  // ---- kernels ----
  auto* kernels = app.add_subcommand("kernels", "synthesize and export kernel banks");
  kernels->require_subcommand(1);

  auto* kgen = kernels->add_subcommand("gen", "build a rotated FT1 kernel bank");
  int k_size = 5, k_angles = 12;
  std::string k_out = "bank.ftak";
  kgen->add_option("--size", k_size, "odd kernel size >= 3");
  kgen->add_option("--angles", k_angles, "number of rotations");
  kgen->add_option("--out", k_out, "output checkpoint");
  kgen->set_config("--config");

  auto* kexp = kernels->add_subcommand("export-png", "write kernels as grayscale PNGs");
  std::string ke_bank = "bank.ftak", ke_out = "kernels";
  kexp->add_option("--bank", ke_bank, "bank checkpoint")->required();
  kexp->add_option("--out", ke_out, "output directory");
  kexp->set_config("--config");

  // ---- data ----
  auto* data = app.add_subcommand("data", "dataset ingestion and utilities");
  data->require_subcommand(1);

  auto* dsplit = data->add_subcommand("split", "partition CIFAR-10 into target/adversarial");
  std::string ds_cifar, ds_out = "split.manifest", ds_classes = "cat,dog";
  dsplit->add_option("--cifar", ds_cifar, "directory with the six binary batch files")
      ->required();
  dsplit->add_option("--out", ds_out, "manifest path");
  dsplit->add_option("--target-classes", ds_classes, "comma-separated class names");
  dsplit->set_config("--config");

  auto* dsynth = data->add_subcommand(
      "synth", "write a synthetic corpus in the CIFAR-10 binary format (offline stand-in)");
  std::string dn_out = "synthetic-cifar";
  uint64_t dn_seed = 1;
  dsynth->add_option("--out", dn_out, "output directory");
  dsynth->add_option("--seed", dn_seed, "generation seed");
  dsynth->set_config("--config");

  // ---- train-victim ----
  auto* tv = app.add_subcommand("train-victim", "train the stand-in classifier");
  std::string tv_split, tv_out = "victim.ftak", tv_augment = "base", tv_widths = "32,64,128";
  std::string tv_log, tv_cifar_override;
  int tv_iters = 4000, tv_batch = 64, tv_log_every = 50;
  uint64_t tv_seed = 1;
  tv->add_option("--split", tv_split, "split manifest")->required();
  tv->add_option("--cifar", tv_cifar_override, "override the manifest's CIFAR directory");
  tv->add_option("--augment", tv_augment, "base | enriched | none");
  tv->add_option("--iters", tv_iters, "training iterations");
  tv->add_option("--batch", tv_batch, "batch size");
  tv->add_option("--widths", tv_widths, "block widths, e.g. 32,64,128");
  tv->add_option("--seed", tv_seed, "training seed");
  tv->add_option("--out", tv_out, "output checkpoint");
  tv->add_option("--log", tv_log, "CSV log path (default <out>.log.csv)");
  tv->add_option("--log-every", tv_log_every, "log interval");
  tv->set_config("--config");

  // ---- train-generator ----
  auto* tg = app.add_subcommand("train-generator", "train the adversarial generator");
  std::string tg_split, tg_bank = "", tg_out = "gen.ftak", tg_log, tg_cifar_override;
  std::string tg_optimizer = "adadelta";
  int tg_iters = 5000, tg_batch = 64, tg_hidden = 32, tg_log_every = 10;
  uint64_t tg_seed = 1;
  double tg_alpha = 1, tg_beta = 1, tg_gamma = 1, tg_delta = 1, tg_lr = 1, tg_momentum = 0.9;
  tg->add_option("--split", tg_split, "split manifest")->required();
  tg->add_option("--cifar", tg_cifar_override, "override the manifest's CIFAR directory");
  tg->add_option("--bank", tg_bank, "kernel bank checkpoint (default: built-in 5x5/12)");
  tg->add_option("--alpha", tg_alpha, "MAE weight");
  tg->add_option("--beta", tg_beta, "DSSIM weight");
  tg->add_option("--gamma", tg_gamma, "channel-variability weight");
  tg->add_option("--delta", tg_delta, "feature-distance weight");
  tg->add_option("--iters", tg_iters, "training iterations");
  tg->add_option("--batch", tg_batch, "batch size");
  tg->add_option("--hidden-width", tg_hidden, "generator hidden width");
  tg->add_option("--seed", tg_seed, "training seed");
  tg->add_option("--optimizer", tg_optimizer, "adadelta | sgd");
  tg->add_option("--lr", tg_lr, "learning rate");
  tg->add_option("--momentum", tg_momentum, "momentum (sgd only)");
  tg->add_option("--out", tg_out, "output checkpoint");
  tg->add_option("--log", tg_log, "CSV log path (default <out>.log.csv)");
  tg->add_option("--log-every", tg_log_every, "log interval");
  tg->set_config("--config");

  // ---- attack ----
  auto* atk = app.add_subcommand("attack", "export adversarial triptychs");
  std::string at_gen, at_split, at_out = "attack-images", at_cifar_override;
  int at_count = 16;
  atk->add_option("--gen", at_gen, "generator checkpoint")->required();
  atk->add_option("--split", at_split, "split manifest")->required();
  atk->add_option("--cifar", at_cifar_override, "override the manifest's CIFAR directory");
  atk->add_option("--out-images", at_out, "output directory");
  atk->add_option("--count", at_count, "number of images");
  atk->set_config("--config");

  // ---- evaluate ----
  auto* ev = app.add_subcommand("evaluate", "measure the attack against a victim");
  std::string ev_victim, ev_gen, ev_split, ev_report = "report.json", ev_cifar_override;
  bool ev_identity = false;
  ev->add_option("--victim", ev_victim, "victim checkpoint")->required();
  ev->add_option("--gen", ev_gen, "generator checkpoint")->required();
  ev->add_option("--split", ev_split, "split manifest")->required();
  ev->add_option("--cifar", ev_cifar_override, "override the manifest's CIFAR directory");
  ev->add_option("--report", ev_report, "structured report path");
  ev->add_flag("--identity", ev_identity, "control run: generator forced to identity");
  ev->set_config("--config");

  // ---- gradcheck ----
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  std::string gc_scope = "all";
  uint64_t gc_seed = 1;
  gc->add_option("--scope", gc_scope, "all | losses | generator | victim");
  gc->add_option("--seed", gc_seed, "sampling seed");
  gc->set_config("--config");

  CLI11_PARSE(app, argc, argv);

  if (kgen->parsed()) {
    Fingerprint fp("kernels gen");
    fp.add("size", k_size);
    fp.add("angles", k_angles);
    fp.add("out", k_out);
    fp.echo();
    const KernelBank bank = build_bank(k_size, k_angles);
    checkpoint_write_file(k_out, bank_to_named_tensors(bank));
    write_text_file(k_out + ".config.txt", fp.str() + "\n");
    std::cout << "wrote " << bank.count() << " kernels to " << k_out << "\n";
    return 0;
  }
  if (kexp->parsed()) {
    Fingerprint fp("kernels export-png");
    fp.add("bank", ke_bank);
    fp.add("out", ke_out);
    fp.echo();
    const KernelBank bank = bank_from_named_tensors(checkpoint_read_file(ke_bank));
    std::filesystem::create_directories(ke_out);
    const int d = bank.kernel_size();
    std::vector<uint8_t> rows(static_cast<size_t>(d) * d);
    for (int i = 0; i < bank.count(); ++i) {
      const Kernel2D& k = bank.kernel(i);
      double lo = k.weights[0], hi = k.weights[0];
      for (double v : k.weights) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
      for (size_t j = 0; j < k.weights.size(); ++j)
        rows[j] = static_cast<uint8_t>(std::lround((k.weights[j] - lo) * scale));
      char name[32];
      std::snprintf(name, sizeof(name), "kernel_%02d.png", i);
      write_png((std::filesystem::path(ke_out) / name).string(), rows, d, d, 1);
    }
    std::cout << "wrote " << bank.count() << " PNGs to " << ke_out << "\n";
    return 0;
  }
  if (dsplit->parsed()) {
    Fingerprint fp("data split");
    fp.add("cifar", ds_cifar);
    fp.add("target_classes", ds_classes);
    fp.add("out", ds_out);
    fp.echo();
    const DatasetSplit split = make_split(load_cifar10(ds_cifar), parse_class_list(ds_classes));
    write_manifest(ds_out, split, ds_cifar, fp.str());
    std::cout << "split: target_train=" << split.target_train.count()
              << " target_test=" << split.target_test.count()
              << " adv_train=" << split.adv_train.count()
              << " adv_test=" << split.adv_test.count() << "\n";
    return 0;
  }
  if (dsynth->parsed()) {
    Fingerprint fp("data synth");
    fp.add("out", dn_out);
    fp.add("seed", dn_seed);
    fp.echo();
    write_synthetic_cifar(dn_out, dn_seed);
    std::cout << "wrote synthetic corpus to " << dn_out << "\n";
    return 0;
  }
  if (tv->parsed()) {
    Fingerprint fp("train-victim");
    fp.add("split", tv_split);
    fp.add("augment", tv_augment);
    fp.add("iters", tv_iters);
    fp.add("batch", tv_batch);
    fp.add("widths", tv_widths);
    fp.add("seed", tv_seed);
    fp.add("out", tv_out);
    fp.echo();
    const DatasetSplit split = load_split_from_manifest(tv_split, tv_cifar_override);
    VictimTrainConfig cfg;
    cfg.iterations = tv_iters;
    cfg.batch_size = tv_batch;
    cfg.seed = tv_seed;
    cfg.widths = parse_widths(tv_widths);
    cfg.augment_cfg = augment_by_name(tv_augment);
    cfg.log_every = tv_log_every;
    std::vector<VictimTrainLogRow> log;
    VictimParams params = train_victim(split, cfg, &log);
    checkpoint_write_file(tv_out, victim_to_named_tensors(params));
    write_text_file(tv_out + ".config.txt", fp.str() + "\n");
    write_text_file(tv_log.empty() ? tv_out + ".log.csv" : tv_log,
                    victim_log_csv(log, fp.str()));
    const std::vector<double> acc = victim_accuracy(params, split.target_test, split);
    std::cout << "test accuracy:";
    for (size_t c = 0; c < acc.size(); ++c)
      std::cout << " "
                << cifar_class_names()[static_cast<size_t>(split.target_classes[c])] << "="
                << acc[c] << "%";
    std::cout << "\nwrote " << tv_out << "\n";
    return 0;
  }
  if (tg->parsed()) {
    Fingerprint fp("train-generator");
    fp.add("split", tg_split);
    fp.add("bank", tg_bank.empty() ? "builtin-5x5x12" : tg_bank);
    fp.add("alpha", tg_alpha);
    fp.add("beta", tg_beta);
    fp.add("gamma", tg_gamma);
    fp.add("delta", tg_delta);
    fp.add("iters", tg_iters);
    fp.add("batch", tg_batch);
    fp.add("hidden_width", tg_hidden);
    fp.add("optimizer", tg_optimizer);
    fp.add("lr", tg_lr);
    fp.add("seed", tg_seed);
    fp.add("out", tg_out);
    fp.echo();
    const DatasetSplit split = load_split_from_manifest(tg_split, tg_cifar_override);
    const KernelBank bank = tg_bank.empty()
                                ? build_bank(5, 12)
                                : bank_from_named_tensors(checkpoint_read_file(tg_bank));
    const SimNet net(bank);
    TrainConfig cfg;
    cfg.iterations = tg_iters;
    cfg.batch_size = tg_batch;
    cfg.seed = tg_seed;
    cfg.hidden_width = tg_hidden;
    cfg.weights.alpha = static_cast<real>(tg_alpha);
    cfg.weights.beta = static_cast<real>(tg_beta);
    cfg.weights.gamma = static_cast<real>(tg_gamma);
    cfg.weights.delta = static_cast<real>(tg_delta);
    cfg.lr = static_cast<real>(tg_lr);
    cfg.momentum = static_cast<real>(tg_momentum);
    cfg.log_every = tg_log_every;
    if (tg_optimizer == "sgd")
      cfg.optimizer = OptimizerKind::sgd;
    else if (tg_optimizer != "adadelta")
      throw FormatError("--optimizer must be adadelta or sgd");
    std::vector<GenTrainLogRow> log;
    GeneratorParams params = train_generator(split, net, cfg, &log);
    checkpoint_write_file(tg_out, generator_to_named_tensors(params));
    write_text_file(tg_out + ".config.txt", fp.str() + "\n");
    write_text_file(tg_log.empty() ? tg_out + ".log.csv" : tg_log,
                    generator_log_csv(log, fp.str()));
    std::cout << "final loss: total=" << log.back().parts.total
              << " mae=" << log.back().parts.mae << " dssim=" << log.back().parts.dssim
              << " feat_dist=" << log.back().parts.feat_dist << "\nwrote " << tg_out << "\n";
    return 0;
  }
  if (atk->parsed()) {
    Fingerprint fp("attack");
    fp.add("gen", at_gen);
    fp.add("split", at_split);
    fp.add("out_images", at_out);
    fp.add("count", at_count);
    fp.echo();
    const DatasetSplit split = load_split_from_manifest(at_split, at_cifar_override);
    GeneratorParams params = generator_from_named_tensors(checkpoint_read_file(at_gen));
    export_triptychs(params, split, at_out, at_count);
    write_text_file((std::filesystem::path(at_out) / "config.txt").string(), fp.str() + "\n");
    std::cout << "wrote " << at_count << " triptychs to " << at_out << "\n";
    return 0;
  }
  if (ev->parsed()) {
    Fingerprint fp("evaluate");
    fp.add("victim", ev_victim);
    fp.add("gen", ev_gen);
    fp.add("split", ev_split);
    fp.add("identity", ev_identity ? 1 : 0);
    fp.add("report", ev_report);
    fp.echo();
    const DatasetSplit split = load_split_from_manifest(ev_split, ev_cifar_override);
    VictimParams victim = victim_from_named_tensors(checkpoint_read_file(ev_victim));
    GeneratorParams generator = generator_from_named_tensors(checkpoint_read_file(ev_gen));
    EvalOptions opts;
    opts.identity_generator = ev_identity;
    opts.config_fingerprint = fp.str();
    const AttackReport report = evaluate_attack(victim, generator, split, opts);
    std::cout << report_render_text(report);
    write_text_file(ev_report, report_to_json(report).dump(2) + "\n");
    return 0;
  }
  if (gc->parsed()) {
    Fingerprint fp("gradcheck");
    fp.add("scope", gc_scope);
    fp.add("seed", gc_seed);
    fp.echo();
    GradcheckScope scope;
    if (gc_scope == "all")
      scope = GradcheckScope::all;
    else if (gc_scope == "losses")
      scope = GradcheckScope::losses;
    else if (gc_scope == "generator")
      scope = GradcheckScope::generator;
    else if (gc_scope == "victim")
      scope = GradcheckScope::victim;
    else
      throw FormatError("--scope must be all, losses, generator, or victim");
    const GradcheckReport report = gradcheck(scope, gc_seed);
    for (const auto& g : report.groups)
      std::cout << (g.pass ? "PASS" : "FAIL") << " " << g.name << " max_rel_err=" << g.max_rel_err
                << "\n";
    std::cout << (report.all_pass ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance "
              << report.tolerance << ")\n";
    return report.all_pass ? 0 : 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
