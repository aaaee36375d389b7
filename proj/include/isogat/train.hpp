#pragma once

// Minibatch AAM-softmax training with Adam over random fixed-length crops.
// Single-threaded and fully determined by the seed.

#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "isogat/dataio.hpp"
#include "isogat/evaluation.hpp"
#include "isogat/model.hpp"

namespace isogat {

struct TrainConfig {
  InputMode mode = InputMode::kLastLayer;
  std::size_t k = 1;
  std::size_t hidden = 1024;
  double epsilon = 0.0;
  bool learn_epsilon = false;
  double lr = 1e-4;
  std::size_t epochs = 30;
  std::size_t batch = 16;
  std::size_t crop = 50;
  std::uint64_t seed = 0;
  std::optional<PoolingKind> baseline;
  std::optional<std::size_t> embed_dim;
  double scale = 30.0;
  double margin = 0.2;
};

/// Utterances with integer speaker labels (index into `speakers`).
struct Dataset {
  std::vector<EmbeddingSequence> utterances;
  std::vector<std::size_t> labels;
  std::vector<std::string> speakers;

  std::size_t size() const { return utterances.size(); }
};

inline Dataset load_dataset(const std::vector<ManifestEntry>& entries) {
  Dataset ds;
  std::map<std::string, std::size_t> index;
  for (const auto& e : entries) index.emplace(e.speaker, 0);
  for (auto& [name, id] : index) {
    id = ds.speakers.size();
    ds.speakers.push_back(name);
  }
  for (const auto& e : entries) {
    ds.utterances.push_back(read_sse(e.path));
    ds.labels.push_back(index.at(e.speaker));
    const auto& first = ds.utterances.front();
    const auto& cur = ds.utterances.back();
    if (cur.layers != first.layers || cur.dim != first.dim)
      throw DataError("'" + e.path + "' has " + std::to_string(cur.layers) + " layers x " +
                      std::to_string(cur.dim) + " dims, expected " +
                      std::to_string(first.layers) + " x " + std::to_string(first.dim));
  }
  return ds;
}

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  std::optional<double> val_eer;
};

struct TrainResult {
  IsoGatModel model;
  std::vector<EpochMetrics> metrics;
};

inline void accumulate(IsoGatModel& into, const IsoGatModel& g, double scale) {
  auto dst = parameter_tensors(into);
  auto src = parameter_tensors(g);
  for (std::size_t k = 0; k < dst.size(); ++k)
    for (std::size_t i = 0; i < dst[k].values.size(); ++i)
      dst[k].values[i] += scale * src[k].values[i];
}

inline ModelConfig model_config_for(const TrainConfig& cfg, const Dataset& data) {
  ModelConfig mc;
  mc.mode = cfg.mode;
  mc.input_layers = data.utterances.front().layers;
  mc.input_dim = data.utterances.front().dim;
  mc.embed_dim = cfg.embed_dim;
  mc.aggregation_layers = cfg.k;
  mc.hidden = cfg.hidden;
  mc.epsilon = cfg.epsilon;
  mc.classes = data.speakers.size();
  mc.scale = cfg.scale;
  mc.margin = cfg.margin;
  mc.baseline = cfg.baseline;
  mc.pool_seed = cfg.seed;
  mc.seed = cfg.seed;
  return mc;
}

/// Random window of `crop` frames (whole utterance when shorter).
inline EmbeddingSequence random_crop(const EmbeddingSequence& seq, std::size_t crop, Rng& rng) {
  if (crop == 0 || seq.frames <= crop) return seq;
  const std::size_t start = static_cast<std::size_t>(rng.index(seq.frames - crop + 1));
  return seq.crop(start, crop);
}

/// Validation EER over every pair of full-length validation utterances.
inline double validation_eer(const IsoGatModel& model, const Dataset& val) {
  std::vector<Vector> emb;
  emb.reserve(val.size());
  for (const auto& u : val.utterances) emb.push_back(embed_utterance(u, model).z);
  return all_pairs_eer(emb, val.labels).eer;
}

struct SampleGrad {
  double loss;
  IsoGatModel grads;
};

inline SampleGrad sample_loss_and_grad(const EmbeddingSequence& seq, std::size_t label,
                                       const IsoGatModel& model,
                                       std::optional<std::uint64_t> pool_seed) {
  const EmbedResult fwd = embed_utterance(seq, model, pool_seed);
  const AamResult head = aam_softmax_loss(fwd.z, label, model.aam);
  IsoGatModel g = embed_backward(seq, model, fwd, head.dz, pool_seed);
  g.aam.class_weights = head.d_class_weights;
  return {head.loss, std::move(g)};
}

inline TrainResult train(const Dataset& data, const Dataset* validation, const TrainConfig& cfg,
                         const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  if (data.size() == 0) throw DataError("training manifest is empty");
  if (data.speakers.size() < 2) throw DataError("training needs at least two speakers");
  if (cfg.batch == 0) throw ConfigError("batch size must be positive");
  if (!(cfg.lr >= 0.0)) throw ConfigError("learning rate must be non-negative");

  TrainResult result;
  result.model = init_model(model_config_for(cfg, data));
  IsoGatModel& model = result.model;
  AdamState adam = AdamState::for_model(model);
  const AdamConfig adam_cfg{cfg.lr, 0.9, 0.999, 1e-8, cfg.learn_epsilon};

  auto pool_seed_for = [&](std::size_t epoch, std::size_t idx) -> std::optional<std::uint64_t> {
    if (model.baseline != PoolingKind::kRandom) return std::nullopt;
    return derive_seed(cfg.seed, {static_cast<std::uint64_t>(StreamTag::kRandomPool), epoch, idx});
  };
  auto crop_of = [&](std::size_t epoch, std::size_t idx) {
    Rng rng(cfg.seed, StreamTag::kCrop, {epoch, idx});
    return random_crop(data.utterances[idx], cfg.crop, rng);
  };
  auto report = [&](std::size_t epoch, double loss) {
    if (!std::isfinite(loss))
      throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
    EpochMetrics m{epoch, loss, std::nullopt};
    if (validation) m.val_eer = validation_eer(model, *validation);
    result.metrics.push_back(m);
    if (on_epoch) on_epoch(m);
  };

  {
    double total = 0.0;
    for (std::size_t idx = 0; idx < data.size(); ++idx) {
      const EmbedResult fwd = embed_utterance(crop_of(0, idx), model, pool_seed_for(0, idx));
      total += aam_softmax_loss(fwd.z, data.labels[idx], model.aam).loss;
    }
    report(0, total / static_cast<double>(data.size()));
  }

  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(cfg.seed, StreamTag::kShuffle, {epoch});
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.index(i))]);

    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch);
      IsoGatModel grads = zeros_like(model);
      const double inv = 1.0 / static_cast<double>(end - begin);
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t idx = order[b];
        const SampleGrad s =
            sample_loss_and_grad(crop_of(epoch, idx), data.labels[idx], model,
                                 pool_seed_for(epoch, idx));
        if (!std::isfinite(s.loss))
          throw NumericError("non-finite loss on '" + data.utterances[idx].utterance_id + "'");
        epoch_loss += s.loss;
        accumulate(grads, s.grads, inv);
      }
      if (!all_finite(flatten_parameters(grads)))
        throw NumericError("non-finite gradient at epoch " + std::to_string(epoch));
      adam_step(model, grads, adam, adam_cfg);
    }
    report(epoch, epoch_loss / static_cast<double>(data.size()));
  }
  return result;
}

inline void write_metrics_csv(const std::vector<EpochMetrics>& metrics, std::ostream& out) {
  out << "epoch,loss,val_eer\n";
  for (const auto& m : metrics)
    out << m.epoch << ',' << format_real(m.loss) << ','
        << (m.val_eer ? format_real(*m.val_eer) : std::string("NA")) << '\n';
}

}  // namespace isogat
