#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "test_support.hpp"

using namespace isogat;
using namespace isogat::testing;

TEST(Sse, RoundTripIsByteIdentical) {
  Rng rng(1);
  const EmbeddingSequence seq = random_sequence(rng, 3, 5, 4, "spk001/utt002");
  const std::string dir = temp_dir("sse_round_trip");
  write_sse(seq, dir + "/a.sse");
  const EmbeddingSequence back = read_sse(dir + "/a.sse");
  EXPECT_EQ(back.utterance_id, seq.utterance_id);
  ASSERT_EQ(back.values.size(), seq.values.size());
  for (std::size_t i = 0; i < seq.values.size(); ++i)
    EXPECT_EQ(back.values[i], static_cast<double>(static_cast<float>(seq.values[i])));
  write_sse(back, dir + "/b.sse");
  EXPECT_EQ(read_bytes(dir + "/a.sse"), read_bytes(dir + "/b.sse"));
}

TEST(Sse, CorruptionRejectedWithFormatError) {
  Rng rng(2);
  const std::vector<char> bytes = encode_sse(random_sequence(rng, 2, 3, 2)).bytes();
  auto decode = [](std::vector<char> b) {
    ByteReader r(std::move(b));
    return decode_sse(r);
  };
  auto bad_magic = bytes;
  bad_magic[1] = 'Q';
  EXPECT_THROW(decode(bad_magic), FormatError);
  auto short_payload = bytes;
  short_payload.resize(bytes.size() - 8);
  EXPECT_THROW(decode(short_payload), FormatError);
  auto long_payload = bytes;
  long_payload.resize(bytes.size() + 8);
  EXPECT_THROW(decode(long_payload), FormatError);
  auto header_only = bytes;
  header_only.resize(6);
  EXPECT_THROW(decode(header_only), FormatError);
}

TEST(Sse, NonFiniteValueRejected) {
  EmbeddingSequence seq("u", 1, 1, 2);
  seq.values[1] = NAN;
  ByteReader r(encode_sse(seq).bytes());
  EXPECT_THROW(decode_sse(r), FormatError);
}

TEST(Sse, LayerCountMismatchInAllLayersModeIsShapeError) {
  Rng rng(3);
  const IsoGatModel model = random_toy_model(rng, 3, 2, 4, 2);
  EXPECT_THROW(embed_utterance(random_sequence(rng, 1, 4, 2), model), ShapeError);
}

TEST(Manifest, ParsesRelativePaths) {
  std::istringstream in("a/x.sse\tspk1\n\nb/y.sse\tspk2\r\n");
  const auto entries = parse_manifest(in, "/data", "m.tsv");
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].path, "/data/a/x.sse");
  EXPECT_EQ(entries[1].speaker, "spk2");
}

TEST(Manifest, ErrorsCarryLineNumbers) {
  std::istringstream missing_tab("a.sse\tspk\nb.sse spk\n");
  try {
    parse_manifest(missing_tab, ".", "m.tsv");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("m.tsv:2"), std::string::npos);
  }
  std::istringstream dup("a.sse\tx\na.sse\ty\n");
  EXPECT_THROW(parse_manifest(dup, ".", "m.tsv"), DataError);
  std::istringstream empty("\n");
  EXPECT_THROW(parse_manifest(empty, ".", "m.tsv"), DataError);
}

TEST(Synthetic, NoiselessFramesEqualRotatedCentroid) {
  SyntheticConfig cfg;
  cfg.speakers = 3;
  cfg.dim = 4;
  cfg.frames = 5;
  cfg.layers = 2;
  cfg.channel_noise = 0.0;
  cfg.layer_noise = 0.0;
  cfg.held_out_speakers = 1;
  cfg.seed = 5;
  const Vector mu = synthetic_centroid(cfg, 1);
  const EmbeddingSequence seq = synthetic_utterance(cfg, 1, 0);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const Matrix q = synthetic_layer_mix(cfg, l);
    for (std::size_t t = 0; t < cfg.frames; ++t)
      for (std::size_t f = 0; f < cfg.dim; ++f) {
        double want = 0.0;
        for (std::size_t k = 0; k < cfg.dim; ++k) want += q(f, k) * mu[k];
        EXPECT_NEAR(seq.at(l, t, f), want, 1e-12);
      }
  }
}

TEST(Synthetic, LayerMixIsOrthogonal) {
  SyntheticConfig cfg;
  cfg.dim = 6;
  cfg.seed = 8;
  const Matrix q = synthetic_layer_mix(cfg, 2);
  const Matrix qtq = matmul(transpose(q), q);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(qtq(i, j), i == j ? 1.0 : 0.0, 1e-12);
}

TEST(Synthetic, CorpusIsDeterministicByteForByte) {
  SyntheticConfig cfg;
  cfg.speakers = 3;
  cfg.utterances_per_speaker = 2;
  cfg.frames = 4;
  cfg.dim = 3;
  cfg.layers = 2;
  cfg.held_out_speakers = 1;
  cfg.seed = 77;
  const std::string a = temp_dir("syn_a"), b = temp_dir("syn_b");
  const SyntheticCorpus ca = generate_synthetic(cfg, a);
  generate_synthetic(cfg, b);
  for (const auto& e : ca.all)
    EXPECT_EQ(read_bytes(a + "/" + e.relative), read_bytes(b + "/" + e.relative)) << e.relative;
  for (const char* f : {kManifestFile, kTrainManifestFile, kTestManifestFile, kTrialsFile})
    EXPECT_EQ(read_bytes(a + "/" + f), read_bytes(b + "/" + f)) << f;
  EXPECT_EQ(ca.train.size(), 4u);
  EXPECT_EQ(ca.test.size(), 2u);
  EXPECT_EQ(read_trials(a + "/" + kTrialsFile).size(), 1u);
}

TEST(Synthetic, NearestCentroidRecoversSpeakers) {
  SyntheticConfig cfg;
  cfg.speakers = 5;
  cfg.utterances_per_speaker = 6;
  cfg.speaker_spread = 10.0;
  cfg.channel_noise = 0.1;
  cfg.held_out_speakers = 1;
  cfg.seed = 31;
  std::vector<Vector> centroids;
  for (std::size_t s = 0; s < cfg.speakers; ++s) centroids.push_back(synthetic_centroid(cfg, s));
  for (std::size_t s = 0; s < cfg.speakers; ++s)
    for (std::size_t u = 0; u < cfg.utterances_per_speaker; ++u) {
      const Vector m = column_mean(synthetic_base_frames(cfg, s, u));
      std::size_t best = 0;
      double best_d = INFINITY;
      for (std::size_t c = 0; c < centroids.size(); ++c) {
        double d = 0.0;
        for (std::size_t f = 0; f < m.size(); ++f) d += (m[f] - centroids[c][f]) * (m[f] - centroids[c][f]);
        if (d < best_d) best_d = d, best = c;
      }
      EXPECT_EQ(best, s);
    }
}

TEST(Synthetic, InvalidConfigRejected) {
  SyntheticConfig cfg;
  cfg.temporal_correlation = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.held_out_speakers = cfg.speakers;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
