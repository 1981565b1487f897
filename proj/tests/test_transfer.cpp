#include <catch2/catch_amalgamated.hpp>

#include "doa/transfer.hpp"

using namespace doa;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.embed_dim = 16;
  c.depth = 1;
  c.heads = 2;
  c.sources = 2;
  c.elements = 4;
  return c;
}

SignalScenario tiny_scenario() {
  SignalScenario sc;
  sc.geometry = ArrayGeometry::make_ula(4, 0.5);
  sc.sources = 2;
  sc.snr_db = 10.0;
  sc.snapshots = 16;
  sc.doa = DoaSpec::make_uniform(3.0);
  sc.fov = ula_fov();
  return sc;
}

}  // namespace

TEST_CASE("mse loss hand cases", "[transfer]") {
  REQUIRE(loss_mse(std::vector<double>{1.0, 2.0},
                   std::vector<double>{1.0, 2.0}) == 0.0);
  REQUIRE(loss_mse(std::vector<double>{1.0, 0.0},
                   std::vector<double>{0.0, 1.0}) == 2.0);
  // homogeneity: scaling both vectors by c scales the loss by c^2
  REQUIRE(loss_mse(std::vector<double>{3.0, 0.0},
                   std::vector<double>{0.0, 3.0}) == 18.0);
  REQUIRE_THROWS_AS(
      loss_mse(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}),
      InvalidArgument);
}

TEST_CASE("cosine loss hand cases and scale invariance", "[transfer]") {
  REQUIRE(loss_cos(std::vector<double>{2.0, 0.0},
                   std::vector<double>{5.0, 0.0}) ==
          Catch::Approx(0.0).margin(1e-12));
  REQUIRE(loss_cos(std::vector<double>{1.0, 0.0},
                   std::vector<double>{0.0, 1.0}) ==
          Catch::Approx(1.0).margin(1e-12));
  REQUIRE(loss_cos(std::vector<double>{1.0, 1.0},
                   std::vector<double>{-2.0, -2.0}) ==
          Catch::Approx(2.0).margin(1e-12));

  bool degenerate = false;
  REQUIRE(loss_cos(std::vector<double>{0.0, 0.0},
                   std::vector<double>{1.0, 2.0}, &degenerate) == 1.0);
  REQUIRE(degenerate);

  Rng rng(71);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> a(8), b(8);
    for (std::size_t i = 0; i < 8; ++i) {
      a[i] = rng.uniform(-1.0, 1.0);
      b[i] = rng.uniform(-1.0, 1.0);
    }
    const double base = loss_cos(a, b);
    auto a2 = a;
    auto b2 = b;
    const double ca = rng.uniform(0.1, 10.0), cb = rng.uniform(0.1, 10.0);
    for (std::size_t i = 0; i < 8; ++i) {
      a2[i] *= ca;
      b2[i] *= cb;
    }
    REQUIRE(loss_cos(a2, b2) == Catch::Approx(base).margin(1e-12));
  }
}

TEST_CASE("total loss mixes the two terms over the batch", "[transfer]") {
  const std::vector<std::vector<double>> zs{{1.0, 0.0}, {0.0, 2.0}};
  const std::vector<std::vector<double>> zt{{0.0, 1.0}, {0.0, 2.0}};
  const double cos_mean = (1.0 + 0.0) / 2.0;
  const double mse_mean = (2.0 + 0.0) / 2.0;
  REQUIRE(loss_total(zs, zt, 1.0, 0.0) == Catch::Approx(cos_mean));
  REQUIRE(loss_total(zs, zt, 0.0, 1.0) == Catch::Approx(mse_mean));
  REQUIRE(loss_total(zs, zs, 0.7, 1.3) == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(loss_total(zs, zt, 2.0, 0.5) ==
          Catch::Approx(2.0 * cos_mean + 0.5 * mse_mean));

  // with both weights positive the loss vanishes only on exact alignment
  Rng rng(73);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> a(6), b(6);
    for (std::size_t i = 0; i < 6; ++i) {
      a[i] = rng.uniform(-1.0, 1.0);
      b[i] = rng.uniform(-1.0, 1.0);
    }
    if (a == b) continue;
    REQUIRE(loss_total({a}, {b}, 1.0, 1.0) > 0.0);
  }
}

TEST_CASE("pairing an ideal dataset reproduces it bitwise", "[transfer]") {
  const SignalScenario sc = tiny_scenario();
  const std::uint64_t seed = 33;
  const Dataset target =
      generate_records(sc, ImperfectionSpec::none(4), 10, seed);
  const PairedDataset pairs = make_pairs(target, sc, seed);
  REQUIRE(pairs.records.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    REQUIRE(pairs.records[i].label.thetas == target.records[i].label.thetas);
    REQUIRE(pairs.records[i].target_scm == target.records[i].scm);
    REQUIRE(pairs.records[i].ideal_scm == target.records[i].scm);
    REQUIRE(pairs.records[i].gen_seed == mix_seed(seed, i));
  }
}

TEST_CASE("pairing is deterministic and order-preserving", "[transfer]") {
  const SignalScenario sc = tiny_scenario();
  const auto imp = build_imperfections(sc.geometry, 1.0,
                                       ImperfectionFlags::all(true));
  const Dataset target = generate_records(sc, imp, 12, 44);
  const PairedDataset a = make_pairs(target, sc, 9);
  const PairedDataset b = make_pairs(target, sc, 9);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    REQUIRE(a.records[i].ideal_scm == b.records[i].ideal_scm);
    REQUIRE(a.records[i].label.thetas == target.records[i].label.thetas);
  }
}

TEST_CASE("labels outside the field of view are rejected", "[transfer]") {
  const SignalScenario sc = tiny_scenario();
  Dataset bogus;
  bogus.meta = DatasetMeta::from_scenario(sc, 0.0);
  DatasetRecord rec;
  rec.label.thetas = {100.0, 0.0};  // outside [-60, 60]
  rec.scm = CMat::identity(4);
  bogus.records.push_back(rec);
  REQUIRE_THROWS_AS(make_pairs(bogus, sc, 1), InvalidArgument);
}

TEST_CASE("paired dataset file round-trip", "[transfer]") {
  const SignalScenario sc = tiny_scenario();
  const auto imp = build_imperfections(sc.geometry, 0.5,
                                       ImperfectionFlags::all(true));
  const Dataset target = generate_records(sc, imp, 6, 5);
  const PairedDataset pairs = make_pairs(target, sc, 6);
  const std::string path =
      (std::filesystem::temp_directory_path() / "doakit_pairs.doap").string();
  save_paired(path, pairs);
  const PairedDataset back = load_paired(path);
  REQUIRE(back.records.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    REQUIRE(back.records[i].target_scm == pairs.records[i].target_scm);
    REQUIRE(back.records[i].ideal_scm == pairs.records[i].ideal_scm);
    REQUIRE(back.records[i].gen_seed == pairs.records[i].gen_seed);
  }
}

TEST_CASE("zero transfer epochs copy the source exactly", "[transfer]") {
  const SignalScenario sc = tiny_scenario();
  const Dataset target = generate_records(sc, ImperfectionSpec::none(4), 6, 3);
  const PairedDataset pairs = make_pairs(target, sc, 3);
  const TransDoaParams source = init_params(tiny_config(), 77);
  TransferConfig cfg;
  cfg.max_epochs = 0;
  const TransferResult res = transfer_train(source, pairs, cfg, 1);
  REQUIRE(res.params.data == source.data);
}

TEST_CASE("identical domains keep the target near the source", "[transfer]") {
  const SignalScenario sc = tiny_scenario();
  const std::uint64_t seed = 21;
  const Dataset target =
      generate_records(sc, ImperfectionSpec::none(4), 8, seed);
  const PairedDataset pairs = make_pairs(target, sc, seed);  // ideal == target
  const TransDoaParams source = init_params(tiny_config(), 78);
  TransferConfig cfg;
  cfg.max_epochs = 5;
  cfg.batches_per_epoch = 2;
  const TransferResult res = transfer_train(source, pairs, cfg, 2);
  REQUIRE(res.align_history.front() == Catch::Approx(0.0).margin(1e-12));
  double drift = 0.0;
  for (std::size_t i = 0; i < source.data.size(); ++i)
    drift = std::max(drift, std::abs(res.params.data[i] - source.data[i]));
  REQUIRE(drift < 1e-6);
}

TEST_CASE("the source extractor is never mutated", "[transfer]") {
  const SignalScenario sc = tiny_scenario();
  const auto imp = build_imperfections(sc.geometry, 1.0,
                                       ImperfectionFlags::all(true));
  const Dataset target = generate_records(sc, imp, 12, 91);
  const PairedDataset pairs = make_pairs(target, sc, 91);
  const TransDoaParams source = init_params(tiny_config(), 79);
  const std::vector<double> snapshot = source.data;
  TransferConfig cfg;
  cfg.max_epochs = 10;
  cfg.batches_per_epoch = 3;
  cfg.adam.lr = 3e-3;
  const TransferResult res = transfer_train(source, pairs, cfg, 5);
  REQUIRE(source.data == snapshot);
  REQUIRE_FALSE(res.params.data == source.data);  // it did train
}

TEST_CASE("alignment loss trends downward over training", "[transfer]") {
  const SignalScenario sc = tiny_scenario();
  const auto imp = build_imperfections(sc.geometry, 1.0,
                                       ImperfectionFlags::all(true));
  for (std::uint64_t seed : {101ull, 202ull, 303ull}) {
    const Dataset target = generate_records(sc, imp, 16, seed);
    const PairedDataset pairs = make_pairs(target, sc, seed);
    const TransDoaParams source = init_params(tiny_config(), seed);
    TransferConfig cfg;
    cfg.max_epochs = 8;
    cfg.batches_per_epoch = 4;
    cfg.adam.lr = 1e-3;
    const TransferResult res = transfer_train(source, pairs, cfg, seed);
    REQUIRE(res.align_history.back() <= res.align_history.front() + 1e-12);
  }
}

TEST_CASE("alpha and beta must not both vanish", "[transfer]") {
  TransferConfig cfg;
  cfg.alpha = 0.0;
  cfg.beta = 0.0;
  REQUIRE_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("baseline arms honor a zero-epoch budget", "[transfer]") {
  const SignalScenario sc = tiny_scenario();
  const Dataset target = generate_records(sc, ImperfectionSpec::none(4), 4, 6);
  const TrainSet ts = prepare_train_set(target);
  const TransDoaParams source = init_params(tiny_config(), 81);
  TrainConfig cfg;
  cfg.epochs = 0;
  REQUIRE(finetune_baseline(source, ts, cfg, 1).params.data == source.data);
  const TrainResult direct = direct_train_baseline(tiny_config(), ts, cfg, 9);
  REQUIRE(direct.params.data == init_params(tiny_config(), 9).data);
}

TEST_CASE("finetune can overfit a single sample", "[transfer]") {
  const SignalScenario sc = tiny_scenario();
  const Dataset target = generate_records(sc, ImperfectionSpec::none(4), 1, 7);
  const TrainSet ts = prepare_train_set(target);
  const TransDoaParams source = init_params(tiny_config(), 83);
  TrainConfig coarse;
  coarse.adam.lr = 1e-2;
  coarse.epochs = 300;
  coarse.batch = 1;
  coarse.patience = 300;
  const TrainResult first = finetune_baseline(source, ts, coarse, 2);
  TrainConfig fine = coarse;
  fine.adam.lr = 5e-4;
  fine.epochs = 150;
  const TrainResult res = finetune_baseline(first.params, ts, fine, 3);
  REQUIRE(res.history.back().train_loss < 0.1);
}

TEST_CASE("head finetuning touches only the head tensors", "[transfer]") {
  const SignalScenario sc = tiny_scenario();
  const auto imp = build_imperfections(sc.geometry, 1.0,
                                       ImperfectionFlags::all(true));
  const Dataset target = generate_records(sc, imp, 8, 15);
  const PairedDataset pairs = make_pairs(target, sc, 15);
  const TransDoaParams source = init_params(tiny_config(), 85);
  TransferConfig cfg;
  cfg.max_epochs = 3;
  cfg.batches_per_epoch = 2;
  cfg.head = HeadPolicy::finetune_head;
  TransferConfig reuse = cfg;
  reuse.head = HeadPolicy::reuse_source;
  const TransferResult with_head = transfer_train(source, pairs, cfg, 4);
  const TransferResult without = transfer_train(source, pairs, reuse, 4);
  // backbone identical, head differs
  for (const auto& e : source.layout.entries) {
    const bool is_head = e.name.rfind("head.", 0) == 0;
    bool differs = false;
    for (std::size_t i = 0; i < e.rows * e.cols; ++i)
      if (with_head.params.data[e.offset + i] !=
          without.params.data[e.offset + i])
        differs = true;
    if (is_head)
      REQUIRE(differs);
    else
      REQUIRE_FALSE(differs);
  }
}
