#pragma once

// Embedding-sequence files (SSE), dataset manifests and the synthetic
// speaker corpus generator.
//
// SSE layout (all little-endian):
//   "SSE0" | u32 version=1 | u32 id_len | id bytes (UTF-8) | u32 L | u32 N | u32 F
//   | L*N*F float32, layer-major, then frame, then feature.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "isogat/binary_io.hpp"
#include "isogat/numerics.hpp"
#include "isogat/random.hpp"

namespace isogat {

struct EmbeddingSequence {
  std::string utterance_id;
  std::size_t layers = 0;
  std::size_t frames = 0;
  std::size_t dim = 0;
  std::vector<double> values;  // layer-major, then frame, then feature

  EmbeddingSequence() = default;
  EmbeddingSequence(std::string id, std::size_t l, std::size_t n, std::size_t f)
      : utterance_id(std::move(id)), layers(l), frames(n), dim(f), values(l * n * f, 0.0) {}

  double& at(std::size_t layer, std::size_t frame, std::size_t feature) {
    return values[(layer * frames + frame) * dim + feature];
  }
  double at(std::size_t layer, std::size_t frame, std::size_t feature) const {
    return values[(layer * frames + frame) * dim + feature];
  }

  /// F x N matrix of one layer (frames as columns).
  Matrix layer(std::size_t l) const {
    Matrix m(dim, frames);
    for (std::size_t i = 0; i < frames; ++i)
      for (std::size_t f = 0; f < dim; ++f) m(f, i) = at(l, i, f);
    return m;
  }

  /// Contiguous frame window [start, start + count) across every layer.
  EmbeddingSequence crop(std::size_t start, std::size_t count) const {
    if (start + count > frames) throw DomainError("crop window exceeds utterance length");
    EmbeddingSequence out(utterance_id, layers, count, dim);
    for (std::size_t l = 0; l < layers; ++l)
      for (std::size_t i = 0; i < count; ++i)
        for (std::size_t f = 0; f < dim; ++f) out.at(l, i, f) = at(l, start + i, f);
    return out;
  }

  /// Same utterance with frames reordered: frame i of the result is frame perm[i].
  EmbeddingSequence permuted(std::span<const std::size_t> perm) const {
    EmbeddingSequence out(utterance_id, layers, frames, dim);
    for (std::size_t l = 0; l < layers; ++l)
      for (std::size_t i = 0; i < frames; ++i)
        for (std::size_t f = 0; f < dim; ++f) out.at(l, i, f) = at(l, perm[i], f);
    return out;
  }
};

inline constexpr std::string_view kSseMagic = "SSE0";
inline constexpr std::uint32_t kSseVersion = 1;

inline ByteWriter encode_sse(const EmbeddingSequence& seq) {
  if (seq.values.size() != seq.layers * seq.frames * seq.dim)
    throw ShapeError("EmbeddingSequence payload does not match L*N*F");
  ByteWriter w;
  w.raw(kSseMagic);
  w.u32(kSseVersion);
  w.string(seq.utterance_id);
  w.u32(static_cast<std::uint32_t>(seq.layers));
  w.u32(static_cast<std::uint32_t>(seq.frames));
  w.u32(static_cast<std::uint32_t>(seq.dim));
  for (double v : seq.values) w.f32(static_cast<float>(v));
  return w;
}

inline void write_sse(const EmbeddingSequence& seq, const std::string& path) {
  encode_sse(seq).save(path);
}

inline EmbeddingSequence decode_sse(ByteReader& r) {
  const std::string magic = r.raw(4, "magic");
  if (magic != kSseMagic) throw FormatError("bad SSE magic", 0);
  const std::uint64_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kSseVersion)
    throw FormatError("unsupported SSE version " + std::to_string(version), version_at);
  EmbeddingSequence seq;
  seq.utterance_id = r.string("utterance id");
  const std::uint64_t dims_at = r.offset();
  seq.layers = r.u32("layer count");
  seq.frames = r.u32("frame count");
  seq.dim = r.u32("feature dim");
  if (seq.layers == 0 || seq.frames == 0 || seq.dim == 0)
    throw FormatError("SSE header has a zero dimension", dims_at);
  const std::uint64_t count = static_cast<std::uint64_t>(seq.layers) * seq.frames * seq.dim;
  const std::uint64_t payload_at = r.offset();
  if (r.remaining() != count * 4)
    throw FormatError("SSE payload size mismatch: header claims " + std::to_string(count * 4) +
                          " bytes, file has " + std::to_string(r.remaining()),
                      payload_at);
  seq.values.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const float v = r.f32("payload");
    if (!std::isfinite(v)) throw FormatError("non-finite value in SSE payload", r.offset() - 4);
    seq.values[i] = v;
  }
  return seq;
}

inline EmbeddingSequence read_sse(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  return decode_sse(r);
}

struct ManifestEntry {
  std::string path;      // resolved against the manifest directory
  std::string relative;  // as written in the manifest
  std::string speaker;
};

/// Parses "relative/path<TAB>speaker_id" lines. Blank lines are ignored.
inline std::vector<ManifestEntry> parse_manifest(std::istream& in, const std::string& base_dir,
                                                 const std::string& source) {
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() ||
        line.find('\t', tab + 1) != std::string::npos)
      throw DataError(source + ":" + std::to_string(line_no) +
                      ": expected 'path<TAB>speaker_id'");
    ManifestEntry e;
    e.relative = line.substr(0, tab);
    e.speaker = line.substr(tab + 1);
    if (!seen.insert(e.relative).second)
      throw DataError(source + ":" + std::to_string(line_no) + ": duplicate utterance path '" +
                      e.relative + "'");
    e.path = (std::filesystem::path(base_dir) / e.relative).string();
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw DataError(source + ": manifest has no entries");
  return entries;
}

inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  return parse_manifest(in, std::filesystem::path(path).parent_path().string(), path);
}

inline void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  for (const auto& e : entries) out << e.relative << '\t' << e.speaker << '\n';
}

struct SyntheticConfig {
  std::size_t speakers = 20;
  std::size_t utterances_per_speaker = 10;
  std::size_t frames = 50;
  std::size_t dim = 32;
  std::size_t layers = 4;
  double speaker_spread = 1.0;
  double channel_noise = 0.5;
  double temporal_correlation = 0.7;
  double layer_noise = 0.05;
  std::size_t held_out_speakers = 5;  // last speakers go to the test split
  std::uint64_t seed = 0;

  void validate() const {
    if (speakers == 0 || utterances_per_speaker == 0 || frames == 0 || dim == 0 || layers == 0)
      throw ConfigError("synthetic config: counts must be positive");
    if (!(speaker_spread >= 0.0) || !(channel_noise >= 0.0) || !(layer_noise >= 0.0))
      throw ConfigError("synthetic config: spreads must be non-negative");
    if (!(temporal_correlation >= 0.0 && temporal_correlation < 1.0))
      throw ConfigError("synthetic config: temporal correlation must lie in [0, 1)");
    if (held_out_speakers >= speakers)
      throw ConfigError("synthetic config: held-out speakers must leave training speakers");
  }
};

inline Vector synthetic_centroid(const SyntheticConfig& cfg, std::size_t speaker) {
  Rng rng(cfg.seed, StreamTag::kSpeakerCentroid, {speaker});
  Vector mu(cfg.dim);
  for (double& v : mu) v = cfg.speaker_spread * rng.normal();
  return mu;
}

/// Base F x N sequence mu_s + e_t, e_t = rho e_{t-1} + sqrt(1 - rho^2) xi_t,
/// e_0 = xi_0, xi ~ N(0, sigma_ch^2 I).
inline Matrix synthetic_base_frames(const SyntheticConfig& cfg, std::size_t speaker,
                                    std::size_t utterance) {
  const Vector mu = synthetic_centroid(cfg, speaker);
  Rng rng(cfg.seed, StreamTag::kUtteranceNoise, {speaker, utterance});
  const double rho = cfg.temporal_correlation;
  const double innov = std::sqrt(1.0 - rho * rho);
  Matrix x(cfg.dim, cfg.frames);
  Vector e(cfg.dim, 0.0);
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    for (std::size_t f = 0; f < cfg.dim; ++f) {
      const double xi = cfg.channel_noise * rng.normal();
      e[f] = t == 0 ? xi : rho * e[f] + innov * xi;
      x(f, t) = mu[f] + e[f];
    }
  }
  return x;
}

/// Random orthogonal F x F matrix for one layer (Gram-Schmidt on a Gaussian draw).
inline Matrix synthetic_layer_mix(const SyntheticConfig& cfg, std::size_t layer) {
  Rng rng(cfg.seed, StreamTag::kLayerMix, {layer});
  const std::size_t f = cfg.dim;
  Matrix q(f, f);
  for (double& v : q.values()) v = rng.normal();
  for (std::size_t j = 0; j < f; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double proj = 0.0;
      for (std::size_t r = 0; r < f; ++r) proj += q(r, j) * q(r, k);
      for (std::size_t r = 0; r < f; ++r) q(r, j) -= proj * q(r, k);
    }
    double n = 0.0;
    for (std::size_t r = 0; r < f; ++r) n += q(r, j) * q(r, j);
    n = std::sqrt(n);
    for (std::size_t r = 0; r < f; ++r) q(r, j) /= n;
  }
  return q;
}

inline std::string synthetic_utterance_id(std::size_t speaker, std::size_t utterance) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "spk%03zu/utt%03zu", speaker, utterance);
  return buf;
}

inline std::string synthetic_speaker_id(std::size_t speaker) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "spk%03zu", speaker);
  return buf;
}

/// Layer l, frame t = Q_l x_t + layer_noise * eta.
inline EmbeddingSequence synthetic_utterance(const SyntheticConfig& cfg, std::size_t speaker,
                                             std::size_t utterance) {
  const Matrix base = synthetic_base_frames(cfg, speaker, utterance);
  EmbeddingSequence seq(synthetic_utterance_id(speaker, utterance), cfg.layers, cfg.frames,
                        cfg.dim);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const Matrix mixed = matmul(synthetic_layer_mix(cfg, l), base);
    Rng noise(cfg.seed, StreamTag::kLayerNoise, {speaker, utterance, l});
    for (std::size_t t = 0; t < cfg.frames; ++t)
      for (std::size_t f = 0; f < cfg.dim; ++f)
        seq.at(l, t, f) = mixed(f, t) + cfg.layer_noise * noise.normal();
  }
  return seq;
}

struct SyntheticCorpus {
  std::vector<ManifestEntry> all;
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> test;
};

inline constexpr const char* kManifestFile = "manifest.tsv";
inline constexpr const char* kTrainManifestFile = "train.tsv";
inline constexpr const char* kTestManifestFile = "test.tsv";
inline constexpr const char* kTrialsFile = "trials.txt";

/// Writes <out>/spkSSS/uttUUU.sse for every utterance, the manifests
/// manifest.tsv / train.tsv / test.tsv, and trials.txt with every pair of
/// test utterances.
inline SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create '" + out_dir + "': " + ec.message());

  SyntheticCorpus corpus;
  const std::size_t first_test = cfg.speakers - cfg.held_out_speakers;
  for (std::size_t s = 0; s < cfg.speakers; ++s) {
    fs::create_directories(fs::path(out_dir) / synthetic_speaker_id(s), ec);
    if (ec) throw DataError("cannot create speaker directory: " + ec.message());
    for (std::size_t u = 0; u < cfg.utterances_per_speaker; ++u) {
      const EmbeddingSequence seq = synthetic_utterance(cfg, s, u);
      ManifestEntry e;
      e.relative = seq.utterance_id + ".sse";
      e.path = (fs::path(out_dir) / e.relative).string();
      e.speaker = synthetic_speaker_id(s);
      write_sse(seq, e.path);
      corpus.all.push_back(e);
      (s < first_test ? corpus.train : corpus.test).push_back(e);
    }
  }
  write_manifest(corpus.all, (fs::path(out_dir) / kManifestFile).string());
  write_manifest(corpus.train, (fs::path(out_dir) / kTrainManifestFile).string());
  write_manifest(corpus.test, (fs::path(out_dir) / kTestManifestFile).string());

  std::ofstream trials(fs::path(out_dir) / kTrialsFile);
  if (!trials) throw DataError("cannot write trial list in '" + out_dir + "'");
  auto strip = [](const std::string& rel) { return rel.substr(0, rel.size() - 4); };
  for (std::size_t i = 0; i < corpus.test.size(); ++i)
    for (std::size_t j = i + 1; j < corpus.test.size(); ++j)
      trials << (corpus.test[i].speaker == corpus.test[j].speaker ? 1 : 0) << ' '
             << strip(corpus.test[i].relative) << ' ' << strip(corpus.test[j].relative) << '\n';
  return corpus;
}

}  // namespace isogat
