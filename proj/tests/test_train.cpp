#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "doctest.h"
#include "test_support.hpp"
#include "vitkit/data/synthetic.hpp"
#include "vitkit/errors.hpp"
#include "vitkit/models/cnn.hpp"
#include "vitkit/models/vit.hpp"
#include "vitkit/tnsr.hpp"
#include "vitkit/train/trainer.hpp"

using namespace vitkit;
using namespace vitkit::train;
using testing::random_tensor;
using testing::scratch_dir;

namespace {

// In-memory synthetic dataset of size x size stripes, normalized like the loader.
data::LoadedDataset synthetic_set(std::size_t classes, std::size_t per_class, std::size_t size, std::uint64_t seed,
                                  const std::string& name = "toy") {
  data::SyntheticSpec spec;
  spec.num_classes = classes;
  spec.per_class = per_class;
  spec.image_size = size;
  data::LoadedDataset d;
  d.manifest.name = name;
  for (std::size_t k = 0; k < classes; ++k) d.manifest.class_names.push_back("c" + std::to_string(k));
  Rng rng(seed);
  const std::vector<Real> half{0.5};
  for (std::size_t i = 0; i < classes * per_class; ++i) {
    const std::size_t label = i % classes;
    d.manifest.entries.push_back({"mem" + std::to_string(i), label});
    d.images.push_back(data::preprocess(data::synthetic_image(spec, label, rng), size, half, half));
  }
  return d;
}

nlohmann::json tiny_vit(std::size_t classes) {
  models::ViTConfig c;
  c.image_size = 8;
  c.patch_size = 4;
  c.embed_dim = 16;
  c.num_heads = 2;
  c.num_layers = 1;
  c.num_classes = classes;
  return c;
}

ParameterStore scalar_store(Real value) {
  ParameterStore s;
  s.add("theta", Tensor({1}, value));
  return s;
}

// Scalar Adam written from the textbook update.
Real scalar_adam(Real theta, std::size_t steps, Real lr, const std::function<Real(Real)>& grad) {
  double m = 0, v = 0;
  for (std::size_t t = 1; t <= steps; ++t) {
    const double g = grad(theta);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, static_cast<double>(t)));
    const double vh = v / (1 - std::pow(0.999, static_cast<double>(t)));
    theta -= lr * mh / (std::sqrt(vh) + 1e-8);
  }
  return theta;
}

}  // namespace

TEST_SUITE("adam") {
  TEST_CASE("first step moves each component by about lr") {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
      ParameterStore s;
      const Tensor start = random_tensor({5}, rng);
      s.add("w", start);
      Tensor g = random_tensor({5}, rng, -10, 10);
      for (auto& v : g.data())
        if (std::abs(v) < 1e-3) v = 1e-3;
      s.at("w").grad = g;
      Adam adam;
      adam.step(s);
      for (std::size_t i = 0; i < 5; ++i) {
        const Real delta = std::abs(s.at("w").value[i] - start[i]);
        CHECK(delta >= 0.9e-3);
        CHECK(delta <= 1e-3);
        CHECK((s.at("w").value[i] - start[i]) * g[i] < 0);
      }
    }
  }

  TEST_CASE("zero gradient leaves parameters unchanged") {
    auto s = scalar_store(1.25);
    s.zero_grad();
    Adam adam;
    adam.step(s);
    CHECK(s.at("theta").value[0] == 1.25);
    CHECK(adam.steps() == 1);
  }

  TEST_CASE("scalar quadratic follows the textbook update") {
    const auto grad = [](Real t) { return 2 * (t - 3); };
    auto s = scalar_store(0);
    Adam adam;
    for (int step = 0; step < 2000; ++step) {
      s.at("theta").grad = Tensor({1}, grad(s.at("theta").value[0]));
      adam.step(s);
    }
    const Real after = s.at("theta").value[0];
    CHECK(after == doctest::Approx(scalar_adam(0, 2000, 1e-3, grad)).epsilon(1e-12));
    // Each step moves at most about lr, so 2000 steps at lr 1e-3 cannot cover 3 units.
    CHECK(after < 2.0);
    for (int step = 2000; step < 6000; ++step) {
      s.at("theta").grad = Tensor({1}, grad(s.at("theta").value[0]));
      adam.step(s);
    }
    CHECK(std::abs(s.at("theta").value[0] - 3) < 1e-2);
    CHECK(std::abs(scalar_adam(0, 2000, 1e-2, grad) - 3) < 1e-2);
  }

  TEST_CASE("missing gradient names the parameter") {
    ParameterStore s;
    s.add("encoder.0.attn.wq", Tensor({2}));
    Adam adam;
    try {
      adam.step(s);
      FAIL("expected ContractError");
    } catch (const ContractError& e) {
      CHECK(std::string(e.what()).find("encoder.0.attn.wq") != std::string::npos);
    }
    CHECK(adam.steps() == 0);
  }

  TEST_CASE("frozen parameters are skipped and moments track shapes") {
    ParameterStore s;
    s.add("a", Tensor({2, 3}, Real{1}));
    s.add("b", Tensor({4}, Real{1}));
    s.at("b").requires_grad = false;
    Adam adam;
    for (int i = 0; i < 5; ++i) {
      s.at("a").grad = Tensor({2, 3}, Real{0.5});
      adam.step(s);
    }
    CHECK(adam.steps() == 5);
    CHECK(s.at("b").value == Tensor({4}, Real{1}));
    REQUIRE(adam.first_moment("a") != nullptr);
    CHECK(adam.first_moment("a")->shape() == Shape{2, 3});
    CHECK(adam.second_moment("b") == nullptr);
  }

  TEST_CASE("invalid hyperparameters") {
    CHECK_THROWS_AS(Adam({.lr = 0}), ConfigError);
    CHECK_THROWS_AS(Adam({.beta1 = 1}), ConfigError);
  }
}

TEST_SUITE("evaluation") {
  TEST_CASE("binary worked case is 0.875") {
    ConfusionMatrix cm(2);
    for (int i = 0; i < 90; ++i) cm.add(1, 1);
    for (int i = 0; i < 85; ++i) cm.add(0, 0);
    for (int i = 0; i < 10; ++i) cm.add(0, 1);
    for (int i = 0; i < 15; ++i) cm.add(1, 0);
    const auto b = cm.binary();
    CHECK(b.tp == 90);
    CHECK(b.tn == 85);
    CHECK(b.fp == 10);
    CHECK(b.fn == 15);
    CHECK(cm.accuracy() == 0.875);
    CHECK(b.accuracy() == 0.875);
    CHECK(BinaryCounts{90, 85, 10, 15}.accuracy() == 0.875);
  }

  TEST_CASE("accuracy equals a brute-force count") {
    Rng rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t classes = 1 + rng.below(6), n = 1 + rng.below(200);
      ConfusionMatrix cm(classes);
      std::size_t hits = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t t = rng.below(classes), p = rng.below(classes);
        hits += t == p;
        cm.add(t, p);
      }
      REQUIRE(cm.total() == n);
      REQUIRE(cm.accuracy() == static_cast<Real>(hits) / static_cast<Real>(n));
    }
  }

  TEST_CASE("confusion errors") {
    ConfusionMatrix cm(3);
    CHECK_THROWS_AS(cm.add(3, 0), LabelError);
    CHECK_THROWS_AS(cm.accuracy(), EmptyError);
    CHECK_THROWS_AS(cm.binary(), ConfigError);
  }

  TEST_CASE("evaluate counts every sample and perfect predictions give 1") {
    const auto d = synthetic_set(3, 4, 8, 1);
    auto model = models::build_classifier("vit", tiny_vit(3), 1);
    const auto ev = evaluate(*model, d, Split::test);
    CHECK(ev.confusion.total() == 12);
    CHECK(ev.predictions.size() == 12);
    CHECK(ev.record.split == Split::test);
    CHECK(ev.record.dataset == "toy");
    CHECK(ev.record.model == "vit");
    CHECK(ev.record.loss > 0);

    // A head that reads the label straight from a marker feature is perfect.
    data::LoadedDataset marked = d;
    for (std::size_t i = 0; i < marked.size(); ++i) {
      marked.images[i].fill(0);
      marked.images[i].at({0, 0, 0}) = static_cast<Real>(marked.manifest.entries[i].label);
    }
    models::CnnConfig cnn;
    cnn.kind = models::CnnKind::vgg_mini;
    cnn.stage_widths = {1};
    cnn.blocks_per_stage = 1;
    cnn.image_size = 8;
    auto probe = models::build_classifier("vgg-mini", cnn, 1);
    auto& p = probe->parameters();
    p.at("stage0.conv0.weight").value.fill(0);
    p.at("stage0.conv0.weight").value.at({0, 0, 1, 1}) = 1;
    p.at("head.weight").value.fill(0);
    // Feature 0 holds the label v; logit_k = -(k - v)^2 up to a shared term.
    for (std::size_t k = 0; k < 3; ++k) {
      p.at("head.weight").value.at({0, k}) = 2 * static_cast<Real>(k);
      p.at("head.bias").value[k] = -static_cast<Real>(k * k);
    }
    const auto perfect = evaluate(*probe, marked, Split::val);
    CHECK(perfect.record.accuracy == 1.0);
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t q = 0; q < 3; ++q)
        if (t != q) CHECK(perfect.confusion.at(t, q) == 0);
  }

  TEST_CASE("evaluate rejects empty data") {
    auto model = models::build_classifier("vit", tiny_vit(3), 1);
    data::LoadedDataset empty;
    empty.manifest.class_names = {"a"};
    CHECK_THROWS_AS(evaluate(*model, empty), EmptyError);
  }
}

TEST_SUITE("csv") {
  TEST_CASE("accuracy renders as a two-decimal percentage") {
    const std::vector<MetricsRecord> rs{{"transformer", "colon", std::nullopt, Split::val, 0.9741, 0.1234}};
    const auto text = format_metrics_csv(rs);
    CHECK(text.find("transformer,colon,final,val,97.41,0.12\n") != std::string::npos);
    CHECK(text.find("# best val accuracy: colon=97.41 (transformer)") != std::string::npos);
  }

  TEST_CASE("empty list gives a header-only file") {
    CHECK(format_metrics_csv({}) == "model,dataset,epoch,split,accuracy,loss\n");
    CHECK(parse_metrics_csv(format_metrics_csv({})).empty());
  }

  TEST_CASE("rows are sorted by dataset, model, epoch and split") {
    std::vector<MetricsRecord> rs{
        {"vit", "b", 2, Split::val, 0.5, 1},   {"vit", "b", std::nullopt, Split::test, 0.5, 1},
        {"vit", "b", 10, Split::train, 0.5, 1}, {"cnn", "b", 1, Split::val, 0.5, 1},
        {"vit", "a", 1, Split::val, 0.5, 1},   {"vit", "b", 2, Split::train, 0.5, 1},
        {"vit", "b", std::nullopt, Split::val, 0.5, 1},
    };
    const auto parsed = parse_metrics_csv(format_metrics_csv(rs));
    std::vector<std::string> keys;
    for (const auto& r : parsed)
      keys.push_back(r.dataset + "/" + r.model + "/" + (r.epoch ? std::to_string(*r.epoch) : "final") + "/" +
                     to_string(r.split));
    CHECK(keys == std::vector<std::string>{"a/vit/1/val", "b/cnn/1/val", "b/vit/2/train", "b/vit/2/val",
                                           "b/vit/10/train", "b/vit/final/val", "b/vit/final/test"});
  }

  TEST_CASE("emitted files parse back to the same records") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<MetricsRecord> rs;
      const std::size_t n = rng.below(30);
      for (std::size_t i = 0; i < n; ++i) {
        MetricsRecord r;
        r.model = std::vector<std::string>{"vit", "vgg-mini", "resnet-mini"}[rng.below(3)];
        r.dataset = std::vector<std::string>{"stripes", "shapes"}[rng.below(2)];
        if (rng.below(4) != 0) r.epoch = 1 + rng.below(12);
        r.split = static_cast<Split>(rng.below(3));
        r.accuracy = static_cast<Real>(rng.below(10001)) / 10000;
        r.loss = static_cast<Real>(rng.below(100000)) / 100;
        rs.push_back(r);
      }
      const auto text = format_metrics_csv(rs);
      const auto back = parse_metrics_csv(text);
      REQUIRE(back.size() == rs.size());
      auto sorted = rs;
      std::stable_sort(sorted.begin(), sorted.end(), csv_order);
      for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].model == sorted[i].model);
        CHECK(back[i].dataset == sorted[i].dataset);
        CHECK(back[i].epoch == sorted[i].epoch);
        CHECK(back[i].split == sorted[i].split);
        CHECK(back[i].accuracy == doctest::Approx(sorted[i].accuracy).epsilon(1e-12));
        CHECK(back[i].loss == doctest::Approx(sorted[i].loss).epsilon(1e-12));
      }
      CHECK(format_metrics_csv(back) == text);
    }
  }

  TEST_CASE("malformed CSV and unwritable paths") {
    CHECK_THROWS_AS(parse_metrics_csv("nope\n"), FormatError);
    CHECK_THROWS_AS(parse_metrics_csv("model,dataset,epoch,split,accuracy,loss\nvit,a,1,val,x,1\n"), FormatError);
    CHECK_THROWS_AS(parse_metrics_csv("model,dataset,epoch,split,accuracy,loss\nvit,a,1,dev,1,1\n"), FormatError);
    CHECK_THROWS_AS(write_metrics_csv({}, "/nonexistent-dir/x/metrics.csv"), IoError);
  }
}

TEST_SUITE("training") {
  TEST_CASE("one epoch on one batch gives two records") {
    const auto d = synthetic_set(3, 2, 8, 4);
    auto model = models::build_classifier("vit", tiny_vit(3), 2);
    const auto r = train::train(*model, d, d, {.epochs = 1, .batch_size = 75});
    REQUIRE(r.history.size() == 2);
    CHECK(r.history[0].split == Split::train);
    CHECK(r.history[1].split == Split::val);
    CHECK(r.history[0].epoch == 1u);
    CHECK(r.optimizer_steps == 1);
  }

  TEST_CASE("fixed seed gives identical histories and weights") {
    const auto d = synthetic_set(3, 5, 8, 5);
    const TrainConfig cfg{.epochs = 3, .batch_size = 4, .seed = 9,
                          .augment = {.crop_pad = 1, .flip_probability = 0.5}};
    auto a = models::build_classifier("vit", tiny_vit(3), 3);
    auto b = models::build_classifier("vit", tiny_vit(3), 3);
    const auto ra = train::train(*a, d, d, cfg), rb = train::train(*b, d, d, cfg);
    CHECK(ra.history == rb.history);
    CHECK(ra.optimizer_steps == 3 * 4);
    for (const auto& n : a->parameters().names()) CHECK(a->parameters().at(n).value == b->parameters().at(n).value);
  }

  TEST_CASE("training reduces the loss") {
    const auto d = synthetic_set(3, 6, 8, 6);
    auto model = models::build_classifier("vit", tiny_vit(3), 4);
    const auto r = train::train(*model, d, d, {.epochs = 30, .batch_size = 18, .lr = 3e-3});
    CHECK(r.history.back().loss < r.history[1].loss);
  }

  TEST_CASE("non-finite loss reports epoch and batch") {
    const auto d = synthetic_set(3, 2, 8, 7);
    auto model = models::build_classifier("vit", tiny_vit(3), 5);
    model->parameters().at("head.bias").value[0] = std::numeric_limits<Real>::quiet_NaN();
    try {
      train::train(*model, d, d, {.epochs = 2, .batch_size = 3});
      FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("epoch 1") != std::string::npos);
      CHECK(msg.find("batch 1") != std::string::npos);
    }
  }

  TEST_CASE("config and data checks") {
    const auto d = synthetic_set(3, 2, 8, 8);
    auto model = models::build_classifier("vit", tiny_vit(3), 6);
    CHECK_THROWS_AS(train::train(*model, d, d, {.epochs = 0}), ConfigError);
    CHECK_THROWS_AS(train::train(*model, d, d, {.batch_size = 0}), ConfigError);
    CHECK_THROWS_AS(train::train(*model, d, d, {.lr = -1}), ConfigError);
    data::LoadedDataset empty;
    empty.manifest.class_names = {"a", "b", "c"};
    CHECK_THROWS_AS(train::train(*model, empty, d, {}), EmptyError);
    const auto wide = synthetic_set(4, 1, 8, 8);
    CHECK_THROWS_AS(train::train(*model, wide, wide, {}), ConfigError);
  }

  TEST_CASE("hook can stop training early") {
    const auto d = synthetic_set(3, 2, 8, 9);
    auto model = models::build_classifier("vit", tiny_vit(3), 7);
    const auto r = train::train(*model, d, d, {.epochs = 10}, [](const auto& tr, const auto&) { return *tr.epoch < 3; });
    CHECK(r.epochs_run == 3);
    CHECK(r.history.size() == 6);
  }
}

TEST_SUITE("transfer") {
  TEST_CASE("checkpoint round trips bit-exactly and byte-identically") {
    const auto dir = scratch_dir("checkpoint");
    const auto src = synthetic_set(10, 2, 8, 10, "surrogate");
    auto pre = pretrain("vit", tiny_vit(10), src, src, {.epochs = 2, .batch_size = 8, .seed = 11});
    CHECK(pre.checkpoint.meta.source_dataset == "surrogate");
    CHECK(pre.checkpoint.meta.kind == "vit");
    CHECK(pre.checkpoint.meta.epochs == 2);
    CHECK(pre.checkpoint.meta.adam.beta2 == 0.999);
    save_checkpoint(pre.checkpoint, dir / "a.ovck");
    const auto loaded = load_checkpoint(dir / "a.ovck");
    auto restored = restore_model(loaded);
    for (const auto* p : pre.model->parameters().all()) CHECK(restored->parameters().at(p->name).value == p->value);
    save_checkpoint(loaded, dir / "b.ovck");
    CHECK(read_file_bytes(dir / "a.ovck") == read_file_bytes(dir / "b.ovck"));

    const auto bytes = read_file_bytes(dir / "a.ovck");
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "OVCK");
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
  }

  TEST_CASE("mismatched config lists missing and extra names") {
    const auto src = synthetic_set(3, 1, 8, 12);
    auto pre = pretrain("vit", tiny_vit(3), src, src, {.epochs = 1});
    auto cfg = tiny_vit(3);
    cfg["num_layers"] = 2;
    auto deeper = models::build_classifier("vit", cfg, 1);
    try {
      load_parameters(*deeper, pre.checkpoint);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("missing") != std::string::npos);
      CHECK(msg.find("encoder.1.attn.wq") != std::string::npos);
    }
    Checkpoint extra = pre.checkpoint;
    extra.parameters.emplace_back("rogue.weight", Tensor({1}));
    auto same = models::build_classifier("vit", tiny_vit(3), 1);
    try {
      load_parameters(*same, extra);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("extra [rogue.weight]") != std::string::npos);
    }
    auto wide = tiny_vit(3);
    wide["embed_dim"] = 32;
    auto other = models::build_classifier("vit", wide, 1);
    CHECK_THROWS_AS(load_parameters(*other, pre.checkpoint), ValidationError);
  }

  TEST_CASE("corrupt checkpoints are format errors") {
    const auto src = synthetic_set(3, 1, 8, 13);
    auto pre = pretrain("vit", tiny_vit(3), src, src, {.epochs = 1});
    auto bytes = encode_checkpoint(pre.checkpoint);
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    bad = bytes;
    bad.resize(bytes.size() - 3);
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    bad = bytes;
    bad.push_back(0);
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  }

  TEST_CASE("pretraining needs two classes") {
    const auto one = synthetic_set(1, 3, 8, 14);
    CHECK_THROWS_AS(pretrain("vit", tiny_vit(1), one, one, {.epochs = 1}), ConfigError);
  }

  TEST_CASE("pretrained features are non-degenerate") {
    const auto src = synthetic_set(10, 10, 8, 15, "surrogate");
    auto pre = pretrain("vit", tiny_vit(10), src, src, {.epochs = 5, .batch_size = 25, .seed = 2});
    Tape tape;
    Tensor batch({src.size(), 3, 8, 8});
    for (std::size_t i = 0; i < src.size(); ++i)
      std::copy(src.images[i].data().begin(), src.images[i].data().end(),
                batch.data().begin() + static_cast<std::ptrdiff_t>(i * 192));
    const Tensor feats = pre.model->features(tape, batch).value();
    REQUIRE(feats.shape() == Shape{100, 16});
    std::size_t varied = 0;
    for (std::size_t j = 0; j < 16; ++j) {
      Real mean = 0, var = 0;
      for (std::size_t i = 0; i < 100; ++i) mean += feats.at({i, j}) / 100;
      for (std::size_t i = 0; i < 100; ++i) var += (feats.at({i, j}) - mean) * (feats.at({i, j}) - mean);
      varied += var > 0;
    }
    CHECK(varied >= 15);
  }

  TEST_CASE("fine-tuning swaps the head and honours freezing") {
    const auto src = synthetic_set(10, 2, 8, 16, "surrogate");
    const auto dst = synthetic_set(3, 4, 8, 17, "target");
    auto pre = pretrain("vit", tiny_vit(10), src, src, {.epochs = 2, .batch_size = 10});
    auto ft = fine_tune(pre.checkpoint, dst, dst, {.epochs = 3, .batch_size = 4, .seed = 5, .freeze_backbone = true});
    CHECK(ft.model->num_classes() == 3);
    Tape tape;
    CHECK(ft.model->forward(tape, Tensor({2, 3, 8, 8})).shape() == Shape{2, 3});
    std::set<std::string> changed;
    for (const auto& [name, value] : pre.checkpoint.parameters) {
      const auto* p = ft.model->parameters().find(name);
      REQUIRE(p != nullptr);
      if (p->value != value) changed.insert(name);
    }
    CHECK(changed == std::set<std::string>{"head.weight", "head.bias"});

    auto unfrozen = fine_tune(pre.checkpoint, dst, dst, {.epochs = 1, .batch_size = 4, .seed = 5});
    CHECK(unfrozen.model->parameters().at("encoder.0.attn.wq").value !=
          restore_model(pre.checkpoint)->parameters().at("encoder.0.attn.wq").value);
  }
}
