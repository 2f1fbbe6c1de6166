#include "vitkit/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "vitkit/data/split.hpp"
#include "vitkit/data/synthetic.hpp"
#include "vitkit/errors.hpp"
#include "vitkit/models/cnn.hpp"
#include "vitkit/models/vit.hpp"
#include "vitkit/tnsr.hpp"
#include "vitkit/train/trainer.hpp"

namespace vitkit::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  fs::path out = "out";
  std::size_t epochs = 10;
  std::size_t batch_size = 75;
  double lr = 1e-3;
};

struct AugmentFlags {
  std::size_t crop_pad = 0;
  double flip_p = 0;
  bool rotate = false;
  bool oversample = false;

  void add_to(CLI::App* app) {
    app->add_option("--crop-pad", crop_pad, "Random-crop padding in pixels (0 disables)");
    app->add_option("--flip-p", flip_p, "Horizontal flip probability")->check(CLI::Range(0.0, 1.0));
    app->add_flag("--rotate", rotate, "Random quarter-turn rotations");
    app->add_flag("--oversample", oversample, "Top up minority classes every epoch");
  }
};

struct ModelFlags {
  std::string kind;
  std::string config_path;
  std::size_t image_size = 32;

  void add_to(CLI::App* app, bool required) {
    auto* m = app->add_option("--model", kind, "Model kind: vit, vgg-mini, resnet-mini, mobilenet-mini");
    if (required) m->required();
    app->add_option("--model-config", config_path, "JSON file with model config fields")->check(CLI::ExistingFile);
    app->add_option("--image-size", image_size, "Square input size images are resized to");
  }
};

train::TrainConfig make_train_config(const Globals& g, const AugmentFlags& a) {
  train::TrainConfig c;
  c.epochs = g.epochs;
  c.batch_size = g.batch_size;
  c.lr = g.lr;
  c.seed = g.seed;
  if (a.crop_pad > 0) c.augment.crop_pad = a.crop_pad;
  if (a.flip_p > 0) c.augment.flip_probability = a.flip_p;
  c.augment.quarter_turns = a.rotate;
  c.oversample = a.oversample;
  c.validate();
  return c;
}

data::LoadedDataset load(const fs::path& manifest, std::size_t image_size) {
  return data::load_dataset(data::load_manifest(manifest), {.image_size = image_size});
}

nlohmann::json model_config(const ModelFlags& f, std::size_t channels, std::size_t classes) {
  nlohmann::json cfg = models::default_config(f.kind, f.image_size, channels, classes);
  if (!f.config_path.empty()) {
    const auto bytes = read_file_bytes(f.config_path);
    nlohmann::json overrides;
    try {
      overrides = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(f.config_path + ": " + e.what());
    }
    if (!overrides.is_object()) throw ConfigError(f.config_path + ": expected a JSON object");
    for (const auto& [key, value] : overrides.items()) {
      if (!cfg.contains(key)) throw ConfigError(f.config_path + ": unknown " + f.kind + " config key '" + key + "'");
    }
    cfg.merge_patch(overrides);
  }
  cfg["image_size"] = f.image_size;
  cfg["channels"] = channels;
  cfg["num_classes"] = classes;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string percent(Real accuracy) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << accuracy * 100;
  return s.str();
}

void print_evaluation(std::ostream& out, const train::Evaluation& ev) {
  out << "accuracy=" << percent(ev.record.accuracy) << "% loss=" << std::fixed << std::setprecision(4)
      << ev.record.loss << " samples=" << ev.confusion.total() << "\n";
  const std::size_t c = ev.confusion.num_classes();
  out << "confusion (rows = true, cols = predicted):\n";
  for (std::size_t t = 0; t < c; ++t) {
    for (std::size_t p = 0; p < c; ++p) out << (p ? " " : "  ") << std::setw(6) << ev.confusion.at(t, p);
    out << "\n";
  }
  if (c == 2) {
    const auto b = ev.confusion.binary();
    out << "TP=" << b.tp << " TN=" << b.tn << " FP=" << b.fp << " FN=" << b.fn << "\n";
  }
}

// --- gen-synthetic ---------------------------------------------------------

struct GenFlags {
  std::string preset;
  data::SyntheticSpec spec;
  std::string format = "ppm";
};

int cmd_gen(const Globals& g, GenFlags f, std::ostream& out) {
  data::SyntheticSpec spec = f.spec;
  if (f.preset == "surrogate") {
    spec = data::transfer_source_spec(g.seed, f.spec.per_class);
  } else if (f.preset == "target") {
    spec = data::transfer_target_spec(g.seed, f.spec.per_class);
  }
  spec.seed = g.seed;
  spec.image_size = f.spec.image_size;
  spec.format = data::format_from_path("x." + f.format);
  const auto m = data::generate_synthetic(spec, g.out);
  out << "wrote " << m.size() << " images in " << m.num_classes() << " classes to " << (g.out / "manifest.txt").string()
      << "\n";
  return kExitOk;
}

// --- split -----------------------------------------------------------------

struct SplitFlags {
  std::string manifest;
  std::vector<double> ratios{0.8, 0.1, 0.1};
  bool no_stratify = false;
};

int cmd_split(const Globals& g, const SplitFlags& f, std::ostream& out, std::ostream& err) {
  if (f.ratios.size() != 3) throw ConfigError("--ratios takes exactly three values");
  const auto m = data::load_manifest(f.manifest);
  const auto r = data::split_dataset(
      m, {.train = f.ratios[0], .val = f.ratios[1], .test = f.ratios[2], .seed = g.seed, .stratified = !f.no_stratify});
  for (const auto& w : r.warnings) err << "warning: " << w << "\n";
  data::save_manifest(r.train, g.out / "train.txt");
  data::save_manifest(r.val, g.out / "val.txt");
  data::save_manifest(r.test, g.out / "test.txt");
  out << "train=" << r.train.size() << " val=" << r.val.size() << " test=" << r.test.size() << "\n";
  return kExitOk;
}

// --- gradcheck -------------------------------------------------------------

struct GradcheckFlags {
  std::string kind;
  std::size_t max_entries = 64;
  double eps = 1e-4;
  double threshold = 1e-3;
};

int cmd_gradcheck(const Globals& g, const GradcheckFlags& f, std::ostream& out) {
  nlohmann::json cfg;
  std::size_t size = 0;
  if (f.kind == "vit") {
    cfg = models::ViTConfig{};
    size = 32;
  } else {
    models::CnnConfig c;
    c.kind = models::parse_cnn_kind(f.kind);
    c.stage_widths = {4, 6};
    c.image_size = 8;
    cfg = c;
    size = 8;
  }
  auto model = models::build_classifier(f.kind, cfg, g.seed);
  models::perturb_biases(*model, 0.1, derive_seed(g.seed, 1));
  Rng rng(derive_seed(g.seed, 2));
  const std::size_t batch = f.kind == "vit" ? 2 : 1;
  Tensor images({batch, 3, size, size});
  for (auto& v : images.data()) v = rng.uniform();
  std::vector<std::size_t> labels;
  for (std::size_t b = 0; b < batch; ++b) labels.push_back(rng.below(model->num_classes()));
  const auto report = models::gradcheck_classifier(
      *model, images, labels, {.eps = f.eps, .max_entries_per_param = f.max_entries, .seed = derive_seed(g.seed, 3)});
  out << "model=" << f.kind << " entries=" << report.entries_checked << " worst=" << report.worst_param << "["
      << report.worst_index << "]\n";
  out << "max_rel_err=" << std::scientific << std::setprecision(3) << report.max_rel_error << "\n";
  if (!(report.max_rel_error < f.threshold)) {
    throw NumericError("gradient check failed: max relative error above " + std::to_string(f.threshold));
  }
  return kExitOk;
}

// --- pretrain / finetune / evaluate ----------------------------------------

struct TrainFlags {
  ModelFlags model;
  AugmentFlags augment;
  std::string train_manifest, val_manifest, checkpoint;
  bool freeze = false;
};

void write_history(const fs::path& path, const std::vector<train::MetricsRecord>& history) {
  fs::create_directories(path.parent_path());
  train::write_metrics_csv(history, path);
}

int cmd_pretrain(const Globals& g, const TrainFlags& f, std::ostream& out) {
  const auto tr = load(f.train_manifest, f.model.image_size);
  const auto va = load(f.val_manifest, f.model.image_size);
  const auto cfg = model_config(f.model, tr.channels(), tr.num_classes());
  auto r = train::pretrain(f.model.kind, cfg, tr, va, make_train_config(g, f.augment));
  train::save_checkpoint(r.checkpoint, g.out / "pretrained.ovck");
  write_history(g.out / "history.csv", r.training.history);
  out << "final val accuracy " << percent(r.training.history.back().accuracy) << "%, checkpoint "
      << (g.out / "pretrained.ovck").string() << "\n";
  return kExitOk;
}

int cmd_finetune(const Globals& g, const TrainFlags& f, std::ostream& out) {
  const auto ck = train::load_checkpoint(f.checkpoint);
  const std::size_t size = ck.meta.config.value("image_size", std::size_t{32});
  const auto tr = load(f.train_manifest, size);
  const auto va = load(f.val_manifest, size);
  auto cfg = make_train_config(g, f.augment);
  cfg.freeze_backbone = f.freeze;
  auto r = train::fine_tune(ck, tr, va, cfg);
  train::CheckpointMeta meta;
  meta.seed = g.seed;
  meta.epochs = r.training.epochs_run;
  meta.source_dataset = tr.manifest.name;
  meta.adam = cfg.adam();
  train::save_checkpoint(train::make_checkpoint(*r.model, meta), g.out / "finetuned.ovck");
  write_history(g.out / "history.csv", r.training.history);
  out << "final val accuracy " << percent(r.training.history.back().accuracy) << "%, checkpoint "
      << (g.out / "finetuned.ovck").string() << "\n";
  return kExitOk;
}

struct EvalFlags {
  std::string checkpoint, manifest, split = "test";
};

int cmd_evaluate(const Globals& g, const EvalFlags& f, std::ostream& out) {
  const auto ck = train::load_checkpoint(f.checkpoint);
  auto model = train::restore_model(ck);
  const auto d = load(f.manifest, model->image_size());
  if (d.num_classes() != model->num_classes()) {
    throw ValidationError("checkpoint predicts " + std::to_string(model->num_classes()) + " classes but " +
                          f.manifest + " has " + std::to_string(d.num_classes()));
  }
  const auto ev = train::evaluate(*model, d, train::parse_split(f.split), std::nullopt, g.batch_size);
  print_evaluation(out, ev);
  fs::create_directories(g.out);
  train::write_metrics_csv({ev.record}, g.out / "evaluation.csv");
  return kExitOk;
}

// --- compare ---------------------------------------------------------------

struct CompareFlags {
  std::vector<std::string> models = models::model_kinds();
  std::vector<std::string> datasets;
  std::size_t per_class = 50;
  std::size_t image_size = 32;
  std::vector<std::size_t> cnn_widths{16, 32, 64};
  std::size_t cnn_blocks = 2;
  bool parallel = false;
};

struct DatasetSplits {
  std::string name;
  data::LoadedDataset train, val, test;
};

std::vector<DatasetSplits> compare_datasets(const Globals& g, const CompareFlags& f) {
  std::vector<fs::path> manifests;
  for (const auto& d : f.datasets) manifests.emplace_back(d);
  if (manifests.empty()) {
    for (const std::string family : {"stripes", "shapes"}) {
      data::SyntheticSpec spec;
      spec.family = family;
      spec.per_class = f.per_class;
      spec.seed = derive_seed(g.seed, family == "stripes" ? 1 : 2);
      data::generate_synthetic(spec, g.out / "data" / family);
      manifests.push_back(g.out / "data" / family / "manifest.txt");
    }
  }
  std::vector<DatasetSplits> out;
  for (const auto& path : manifests) {
    const auto m = data::load_manifest(path);
    const auto parts = data::split_dataset(m, {.seed = g.seed});
    const data::PreprocessSpec pre{.image_size = f.image_size};
    out.push_back({m.name, data::load_dataset(parts.train, pre), data::load_dataset(parts.val, pre),
                   data::load_dataset(parts.test, pre)});
  }
  return out;
}

std::vector<train::MetricsRecord> run_cell(const Globals& g, const CompareFlags& f, const std::string& kind,
                                           const DatasetSplits& d) {
  nlohmann::json cfg = models::default_config(kind, f.image_size, d.train.channels(), d.train.num_classes());
  if (kind != "vit") {
    cfg["stage_widths"] = f.cnn_widths;
    cfg["blocks_per_stage"] = f.cnn_blocks;
  }
  auto model = models::build_classifier(kind, cfg, g.seed);
  auto tc = make_train_config(g, {});
  auto r = train::train(*model, d.train, d.val, tc);
  auto records = r.history;
  records.push_back(train::evaluate(*model, d.val, train::Split::val, std::nullopt, g.batch_size).record);
  records.push_back(train::evaluate(*model, d.test, train::Split::test, std::nullopt, g.batch_size).record);
  for (auto& rec : records) rec.dataset = d.name;
  return records;
}

std::string compare_summary(const std::vector<train::MetricsRecord>& records, const std::vector<std::string>& kinds,
                            const std::vector<DatasetSplits>& datasets) {
  std::ostringstream s;
  for (const auto& d : datasets) {
    s << "dataset " << d.name << " (train " << d.train.size() << ", val " << d.val.size() << ", test "
      << d.test.size() << ")\n";
    std::string best;
    Real best_acc = -1;
    for (const auto& kind : kinds) {
      const train::MetricsRecord* val = nullptr;
      const train::MetricsRecord* test = nullptr;
      for (const auto& r : records) {
        if (r.dataset != d.name || r.model != kind || r.epoch) continue;
        (r.split == train::Split::val ? val : test) = &r;
      }
      if (!val || !test) continue;
      s << "  " << std::left << std::setw(16) << kind << " val " << percent(val->accuracy) << "%  test "
        << percent(test->accuracy) << "%  val loss " << std::fixed << std::setprecision(2) << val->loss << "\n";
      if (val->accuracy > best_acc) {
        best_acc = val->accuracy;
        best = kind;
      }
    }
    s << "  best: " << best << " (" << percent(best_acc) << "% val)\n";
  }
  return s.str();
}

int cmd_compare(const Globals& g, const CompareFlags& f, std::ostream& out, std::ostream& err) {
  const auto kinds = models::model_kinds();
  for (const auto& k : f.models) {
    if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) {
      throw ConfigError("unknown model kind '" + k + "'");
    }
  }
  const auto datasets = compare_datasets(g, f);
  struct Cell {
    std::string kind;
    const DatasetSplits* data;
  };
  std::vector<Cell> cells;
  for (const auto& d : datasets)
    for (const auto& k : f.models) cells.push_back({k, &d});

  std::vector<std::vector<train::MetricsRecord>> results(cells.size());
  if (f.parallel) {
    std::vector<std::future<std::vector<train::MetricsRecord>>> jobs;
    for (const auto& c : cells) {
      jobs.push_back(std::async(std::launch::async, [&g, &f, c] { return run_cell(g, f, c.kind, *c.data); }));
    }
    for (std::size_t i = 0; i < jobs.size(); ++i) results[i] = jobs[i].get();
  } else {
    for (std::size_t i = 0; i < cells.size(); ++i) results[i] = run_cell(g, f, cells[i].kind, *cells[i].data);
  }
  std::vector<train::MetricsRecord> records;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& final_val = results[i][results[i].size() - 2];
    err << cells[i].kind << " on " << cells[i].data->name << ": final val " << percent(final_val.accuracy) << "%\n";
    records.insert(records.end(), results[i].begin(), results[i].end());
  }
  fs::create_directories(g.out);
  train::write_metrics_csv(records, g.out / "metrics.csv");
  const std::string summary = compare_summary(records, f.models, datasets);
  write_text(g.out / "summary.txt", summary);
  out << summary << "wrote " << (g.out / "metrics.csv").string() << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vision transformer and CNN toolkit: data, gradient checks, training, transfer and comparison"};
  app.name("vitkit");
  app.fallthrough();
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  app.set_config("--config", "", "INI file: global keys at the top, [subcommand] sections for the rest");

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--epochs", g.epochs, "Training epochs")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--batch-size", g.batch_size, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--lr", g.lr, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Write a synthetic dataset and its manifest to --out");
  gen_cmd->add_option("--family", gen.spec.family, "stripes or shapes")->capture_default_str();
  gen_cmd->add_option("--classes", gen.spec.num_classes, "Number of classes")->capture_default_str();
  gen_cmd->add_option("--per-class", gen.spec.per_class, "Images per class")->capture_default_str();
  gen_cmd->add_option("--image-size", gen.spec.image_size, "Image side in pixels")->capture_default_str();
  gen_cmd->add_option("--noise", gen.spec.noise, "Pixel noise standard deviation")->capture_default_str();
  gen_cmd->add_option("--angle-offset", gen.spec.angle_offset, "Stripe angle offset in class steps")
      ->capture_default_str();
  gen_cmd->add_option("--name", gen.spec.name, "Dataset name (defaults to the family)");
  gen_cmd->add_option("--format", gen.format, "Image format: ppm, pgm or tnsr")
      ->capture_default_str()
      ->check(CLI::IsMember({"ppm", "pgm", "tnsr"}));
  gen_cmd->add_option("--preset", gen.preset, "Transfer presets: surrogate (10 classes) or target (3 classes)")
      ->check(CLI::IsMember({"surrogate", "target"}));

  SplitFlags split;
  auto* split_cmd = app.add_subcommand("split", "Split a manifest into train.txt, val.txt and test.txt under --out");
  split_cmd->add_option("--manifest", split.manifest, "Manifest to split")->required()->check(CLI::ExistingFile);
  split_cmd->add_option("--ratios", split.ratios, "Train, val and test ratios")->expected(3)->capture_default_str();
  split_cmd->add_flag("--no-stratify", split.no_stratify, "Shuffle all entries together instead of per class");

  GradcheckFlags gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check of a model kind");
  gc_cmd->add_option("--model", gc.kind, "Model kind")->required();
  gc_cmd->add_option("--max-entries", gc.max_entries, "Entries checked per parameter tensor (0 = all)")
      ->capture_default_str();
  gc_cmd->add_option("--eps", gc.eps, "Central-difference step")->capture_default_str();
  gc_cmd->add_option("--threshold", gc.threshold, "Maximum allowed relative error")->capture_default_str();

  TrainFlags pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "Train from random init and write pretrained.ovck");
  pre.model.add_to(pre_cmd, true);
  pre.augment.add_to(pre_cmd);
  pre_cmd->add_option("--train", pre.train_manifest, "Training manifest")->required()->check(CLI::ExistingFile);
  pre_cmd->add_option("--val", pre.val_manifest, "Validation manifest")->required()->check(CLI::ExistingFile);

  TrainFlags ft;
  auto* ft_cmd = app.add_subcommand("finetune", "Fine-tune a checkpoint on a target task and write finetuned.ovck");
  ft.augment.add_to(ft_cmd);
  ft_cmd->add_option("--checkpoint", ft.checkpoint, "Pretrained checkpoint")->required()->check(CLI::ExistingFile);
  ft_cmd->add_option("--train", ft.train_manifest, "Training manifest")->required()->check(CLI::ExistingFile);
  ft_cmd->add_option("--val", ft.val_manifest, "Validation manifest")->required()->check(CLI::ExistingFile);
  ft_cmd->add_flag("--freeze-backbone", ft.freeze, "Only train the new head");

  EvalFlags ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on a manifest");
  ev_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--manifest", ev.manifest, "Manifest to evaluate")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--split", ev.split, "Split label for the record")
      ->capture_default_str()
      ->check(CLI::IsMember({"train", "val", "test"}));

  CompareFlags cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "Train every model on every dataset; write metrics.csv and summary.txt");
  cmp_cmd->add_option("--models", cmp.models, "Model kinds")->capture_default_str();
  cmp_cmd->add_option("--datasets", cmp.datasets, "Manifests (default: generate stripes and shapes)")
      ->check(CLI::ExistingFile);
  cmp_cmd->add_option("--per-class", cmp.per_class, "Images per class for generated datasets")->capture_default_str();
  cmp_cmd->add_option("--image-size", cmp.image_size, "Model input size")->capture_default_str();
  cmp_cmd->add_option("--cnn-widths", cmp.cnn_widths, "CNN stage widths")->capture_default_str();
  cmp_cmd->add_option("--cnn-blocks", cmp.cnn_blocks, "CNN blocks per stage")->capture_default_str();
  cmp_cmd->add_flag("--parallel", cmp.parallel, "Run grid cells concurrently (output order unchanged)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code != 0 && !dynamic_cast<const CLI::CallForHelp*>(&e)) err << app.help();
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen(g, gen, out);
    if (*split_cmd) return cmd_split(g, split, out, err);
    if (*gc_cmd) return cmd_gradcheck(g, gc, out);
    if (*pre_cmd) return cmd_pretrain(g, pre, out);
    if (*ft_cmd) return cmd_finetune(g, ft, out);
    if (*ev_cmd) return cmd_evaluate(g, ev, out);
    if (*cmp_cmd) return cmd_compare(g, cmp, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace vitkit::cli
