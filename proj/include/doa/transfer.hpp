#pragma once
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "doa/dataset_io.hpp"
#include "doa/train.hpp"

namespace doa {

enum class HeadPolicy : std::uint8_t { reuse_source, finetune_head };

struct TransferConfig {
  double alpha = 1.0;  // cosine-loss weight
  double beta = 1.0;   // mse-loss weight
  AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  int batches_per_epoch = 8;
  int max_epochs = 60;
  HeadPolicy head = HeadPolicy::reuse_source;

  void validate() const {
    if (alpha < 0.0 || beta < 0.0 || alpha + beta <= 0.0)
      throw InvalidArgument("transfer config: need alpha + beta > 0");
    if (batches_per_epoch < 1 || max_epochs < 0)
      throw InvalidArgument("transfer config: bad batching");
  }
};

// Squared Euclidean distance between feature vectors.
inline double loss_mse(std::span<const double> zs, std::span<const double> zt) {
  if (zs.size() != zt.size()) throw InvalidArgument("loss_mse: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    const double d = zs[i] - zt[i];
    s += d * d;
  }
  return s;
}

// 1 - cosine similarity, in [0, 2]. A zero vector is degenerate: the loss is
// defined as the neutral value 1 and the flag is set.
inline double loss_cos(std::span<const double> zs, std::span<const double> zt,
                       bool* degenerate = nullptr) {
  if (zs.size() != zt.size()) throw InvalidArgument("loss_cos: size mismatch");
  double dot = 0.0, ns = 0.0, nt = 0.0;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    dot += zs[i] * zt[i];
    ns += zs[i] * zs[i];
    nt += zt[i] * zt[i];
  }
  if (ns == 0.0 || nt == 0.0) {
    if (degenerate) *degenerate = true;
    return 1.0;
  }
  if (degenerate) *degenerate = false;
  return 1.0 - dot / (std::sqrt(ns) * std::sqrt(nt));
}

// alpha * mean(cos) + beta * mean(mse) over aligned feature batches.
inline double loss_total(const std::vector<std::vector<double>>& zs,
                         const std::vector<std::vector<double>>& zt,
                         double alpha, double beta) {
  if (zs.size() != zt.size() || zs.empty())
    throw InvalidArgument("loss_total: batch mismatch");
  double c = 0.0, m = 0.0;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    c += loss_cos(zs[i], zt[i]);
    m += loss_mse(zs[i], zt[i]);
  }
  const double n = static_cast<double>(zs.size());
  return alpha * c / n + beta * m / n;
}

// Pairs every target record with an ideal-array counterpart generated from
// its true DOAs at the scenario's nominal SNR and snapshot count. Record i
// uses seed mix_seed(seed, i).
inline PairedDataset make_pairs(const Dataset& target,
                                const SignalScenario& sc, std::uint64_t seed) {
  if (target.meta.m != sc.geometry.elements ||
      target.meta.k != static_cast<std::uint32_t>(sc.sources))
    throw InvalidArgument("make_pairs: dataset does not match scenario");
  for (const DatasetRecord& rec : target.records) {
    for (double t : rec.label.thetas)
      if (!sc.fov.contains_theta(t))
        throw InvalidArgument("make_pairs: label outside field of view");
    for (double p : rec.label.phis)
      if (!sc.fov.contains_phi(p))
        throw InvalidArgument("make_pairs: label outside field of view");
  }

  PairedDataset out;
  out.meta = target.meta;
  out.records.resize(target.records.size());
  const ImperfectionSpec ideal = ImperfectionSpec::none(sc.geometry.elements);
  constexpr std::size_t kChunk = 2048;
  for (std::size_t base = 0; base < target.records.size(); base += kChunk) {
    const std::size_t n = std::min(kChunk, target.records.size() - base);
    parallel_for(n, [&](std::size_t w) {
      const std::size_t i = base + w;
      const DatasetRecord& rec = target.records[i];
      SignalScenario det = sc;
      det.doa = DoaSpec::make_deterministic(rec.label.thetas, rec.label.phis);
      const std::uint64_t gen_seed = mix_seed(seed, i);
      DatasetRecord ideal_rec = generate_record(det, ideal, gen_seed);
      out.records[i] =
          PairedRecord{rec.label, rec.scm, std::move(ideal_rec.scm), gen_seed};
    });
  }
  return out;
}

struct TransferResult {
  TransDoaParams params;
  std::vector<double> align_history;  // entry 0 = before training
  int best_epoch = 0;
};

namespace detail {

// Alignment loss graph for one pair: alpha * (1 - cos(z_s, z_t)) +
// beta * |z_s - z_t|^2 with z_s a constant. Returns the scalar node.
inline int build_align_loss(ad::Tape& t, int zt_node,
                            const std::vector<double>& zs, double alpha,
                            double beta) {
  const std::size_t d = zs.size();
  const int zs_node = ad::leaf_copy(t, 1, d, zs.data());
  int loss = -1;

  if (beta != 0.0) {
    const int diff = ad::sub(t, zs_node, zt_node);
    const int mse = ad::reduce_sum(t, ad::hadamard(t, diff, diff));
    loss = ad::scale(t, mse, beta);
  }
  if (alpha != 0.0) {
    double ns = 0.0;
    for (double v : zs) ns += v * v;
    int cos_term;
    const auto zt_val = t.value(zt_node);
    double nt = 0.0;
    for (double v : zt_val) nt += v * v;
    if (ns == 0.0 || nt == 0.0) {
      cos_term = ad::scalar_const(t, 1.0);  // degenerate pair, neutral loss
    } else {
      const int dot = ad::reduce_sum(t, ad::hadamard(t, zs_node, zt_node));
      const int ztn =
          ad::sqrt_elem(t, ad::reduce_sum(t, ad::hadamard(t, zt_node, zt_node)));
      const int denom = ad::scale(t, ztn, std::sqrt(ns));
      cos_term = ad::sub(t, ad::scalar_const(t, 1.0), ad::divide(t, dot, denom));
    }
    const int weighted = ad::scale(t, cos_term, alpha);
    loss = loss < 0 ? weighted : ad::add(t, loss, weighted);
  }
  return loss;
}

inline double align_sample_grad(ad::Tape& t, const TransDoaParams& params,
                                const std::vector<double>& input,
                                const std::vector<double>& zs, double alpha,
                                double beta, std::vector<double>& grad) {
  t.clear();
  const ModelConfig& c = params.config;
  const int in =
      ad::leaf_view(t, static_cast<std::size_t>(c.elements),
                    2 * static_cast<std::size_t>(c.elements), input.data());
  std::vector<std::pair<int, std::size_t>> offsets;
  const ParamRefs refs = params_to_refs(t, params, &offsets);
  const ForwardNodes nodes = build_forward(t, c, refs, in);
  const int loss = build_align_loss(t, nodes.feature, zs, alpha, beta);
  ad::backward(t, loss);
  grad.assign(params.data.size(), 0.0);
  for (const auto& [node, off] : offsets) {
    const auto g = t.gradient(node);
    std::copy(g.begin(), g.end(), grad.begin() + static_cast<long>(off));
  }
  return t.scalar_value(loss);
}

}  // namespace detail

// Feature-alignment adaptation: the source extractor is frozen and provides
// reference features from the ideal SCMs; the target model (initialized from
// the source) is trained so its features on the imperfect SCMs match.
// Returns the parameters at the epoch with the best mean alignment loss;
// the source head is carried over unchanged unless finetune_head is chosen.
inline TransferResult transfer_train(const TransDoaParams& source,
                                     const PairedDataset& pairs,
                                     const TransferConfig& cfg,
                                     std::uint64_t seed) {
  cfg.validate();
  if (pairs.records.empty()) throw InvalidArgument("transfer: empty pair set");
  if (pairs.meta.m != static_cast<std::uint32_t>(source.config.elements))
    throw InvalidArgument("transfer: pair set does not match source model");

  const std::size_t n = pairs.records.size();

  // Frozen-source reference features, computed once.
  std::vector<std::vector<double>> zs(n);
  std::vector<std::vector<double>> target_inputs(n);
  parallel_for(n, [&](std::size_t i) {
    zs[i] = feature_extract(source, pairs.records[i].ideal_scm);
    target_inputs[i] = embed_input(pairs.records[i].target_scm);
  });

  TransferResult res;
  res.params = source;
  if (cfg.max_epochs == 0) return res;

  TransDoaParams current = source;
  auto mean_align = [&](const TransDoaParams& p) {
    std::vector<double> losses(n);
    parallel_for(n, [&](std::size_t i) {
      const ModelEval ev = eval_from_input(p, target_inputs[i]);
      losses[i] = cfg.alpha * loss_cos(zs[i], ev.feature) +
                  cfg.beta * loss_mse(zs[i], ev.feature);
    });
    double s = 0.0;
    for (double v : losses) s += v;
    return s / static_cast<double>(n);
  };

  double best = mean_align(current);
  res.align_history.push_back(best);

  AdamState adam(current.data.size());
  Rng shuffle_rng(mix_seed(seed, 0x7u));
  BatchGradienter grad(current.data.size());
  std::vector<double> accum(current.data.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  const std::size_t batches =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.batches_per_epoch), n);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * n / batches;
      const std::size_t hi = (b + 1) * n / batches;
      const std::vector<std::size_t> batch(order.begin() + long(lo),
                                           order.begin() + long(hi));
      if (batch.empty()) continue;
      const double batch_loss = grad.accumulate(
          batch,
          [&](ad::Tape& t, std::size_t idx, std::vector<double>& g) {
            return detail::align_sample_grad(t, current, target_inputs[idx],
                                             zs[idx], cfg.alpha, cfg.beta, g);
          },
          accum);
      if (!std::isfinite(batch_loss)) return res;
      const double inv = 1.0 / static_cast<double>(batch.size());
      for (double& v : accum) v *= inv;
      adam_step(current.data, accum, adam, cfg.adam);
    }
    const double score = mean_align(current);
    res.align_history.push_back(score);
    if (score < best) {
      best = score;
      res.params = current;
      res.best_epoch = epoch;
    }
  }

  if (cfg.head == HeadPolicy::finetune_head) {
    // Supervised head-only pass on the paired labels; backbone stays as
    // aligned.
    TrainSet ts;
    ts.m = pairs.meta.m;
    ts.k = pairs.meta.k;
    ts.two_d = pairs.meta.label_dims == 2;
    ts.inputs = target_inputs;
    for (const auto& rec : pairs.records) ts.labels.push_back(rec.label);

    const auto& layout = res.params.layout;
    std::size_t head_begin = res.params.data.size(), head_end = head_begin;
    for (const auto& e : layout.entries) {
      if (e.name == "head.weight") head_begin = e.offset;
      if (e.name == "head.bias") head_end = e.offset + e.rows * e.cols;
    }

    AdamState head_adam(res.params.data.size());
    BatchGradienter head_grad(res.params.data.size());
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
      shuffle_rng.shuffle(all);
      const double loss_sum = head_grad.accumulate(
          all,
          [&](ad::Tape& t, std::size_t idx, std::vector<double>& g) {
            return detail::sample_grad(t, res.params, ts.inputs[idx],
                                       ts.labels[idx], g);
          },
          accum);
      if (!std::isfinite(loss_sum)) break;
      const double inv = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < accum.size(); ++i)
        accum[i] = (i >= head_begin && i < head_end) ? accum[i] * inv : 0.0;
      adam_step(res.params.data, accum, head_adam, cfg.adam);
    }
  }
  return res;
}

// Table-III comparison arms: supervised fine-tuning from the source
// checkpoint, and training from scratch on the target data alone.
inline TrainResult finetune_baseline(const TransDoaParams& source,
                                     const TrainSet& target,
                                     const TrainConfig& cfg,
                                     std::uint64_t seed) {
  return train(source, target, TrainSet{target.m, target.k, target.two_d,
                                        {}, {}},
               cfg, seed);
}

inline TrainResult direct_train_baseline(const ModelConfig& config,
                                         const TrainSet& target,
                                         const TrainConfig& cfg,
                                         std::uint64_t seed) {
  return train(init_params(config, seed), target,
               TrainSet{target.m, target.k, target.two_d, {}, {}}, cfg, seed);
}

}  // namespace doa
