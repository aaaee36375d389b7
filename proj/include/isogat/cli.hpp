#pragma once

// Command-line front end. Exit codes: 0 success, 1 usage error, 2 data or
// format error, 3 numeric failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "isogat/aggregation.hpp"
#include "isogat/baselines.hpp"
#include "isogat/dataio.hpp"
#include "isogat/evaluation.hpp"
#include "isogat/model.hpp"
#include "isogat/train.hpp"

namespace isogat {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

namespace cli_detail {

inline CLI::App* add_subcommand(CLI::App& app, const std::string& name, const std::string& help) {
  CLI::App* sub = app.add_subcommand(name, help);
  // Consumed by expand_config_file before parsing; declared for --help.
  sub->add_option("--config", "Flat key=value file supplying option values");
  return sub;
}

/// Replaces "--config FILE" with the file's key=value pairs as "--key value"
/// tokens. Keys also given explicitly on the command line are skipped, so
/// explicit flags win.
inline std::vector<std::string> expand_config_file(std::vector<std::string> args) {
  std::optional<std::string> path;
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config requires a file path");
      path = args[++i];
    } else if (args[i].starts_with("--config=")) {
      path = args[i].substr(9);
    } else {
      kept.push_back(args[i]);
    }
  }
  if (!path || kept.size() < 2) return kept;

  std::ifstream in(*path);
  if (!in) throw ConfigError("cannot open config file '" + *path + "'");
  auto explicitly_given = [&](const std::string& flag) {
    for (const auto& a : kept)
      if (a == flag || a.starts_with(flag + "=")) return true;
    return false;
  };
  std::vector<std::string> injected;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(*path + ":" + std::to_string(line_no) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(*path + ":" + std::to_string(line_no) + ": empty key");
    const std::string flag = "--" + key;
    if (explicitly_given(flag)) continue;
    injected.push_back(flag);
    injected.push_back(value);
  }
  // kept[0] is the program name, kept[1] the subcommand.
  kept.insert(kept.begin() + 2, injected.begin(), injected.end());
  return kept;
}

inline void print_resolved(const CLI::App& sub, std::ostream& out) {
  out << "# " << sub.get_name() << " resolved config\n";
  std::istringstream lines(sub.config_to_str(true, false));
  std::string line;
  while (std::getline(lines, line))
    if (!line.empty()) out << "#   " << line << '\n';
}

inline void write_vector(std::span<const double> v, std::ostream& out) {
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << format_real(v[i]);
  out << '\n';
}

inline void require_finite(std::span<const double> v, const std::string& what) {
  if (!all_finite(v)) throw NumericError("NaN/Inf detected in " + what);
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"Graph-attention pooling of embedding sequences for speaker verification", "isogat"};
  app.require_subcommand(1);

  // gen-data
  SyntheticConfig syn;
  std::string gen_out;
  CLI::App* gen = add_subcommand(app, "gen-data", "Generate a synthetic speaker corpus");
  gen->add_option("--speakers", syn.speakers, "Number of speakers")->capture_default_str();
  gen->add_option("--utterances", syn.utterances_per_speaker, "Utterances per speaker")
      ->capture_default_str();
  gen->add_option("--frames", syn.frames, "Frames per utterance (N)")->capture_default_str();
  gen->add_option("--dim", syn.dim, "Feature dimension (F)")->capture_default_str();
  gen->add_option("--layers", syn.layers, "Representation layers (L)")->capture_default_str();
  gen->add_option("--speaker-spread", syn.speaker_spread, "Centroid std deviation")
      ->capture_default_str();
  gen->add_option("--channel-noise", syn.channel_noise, "Frame noise std deviation")
      ->capture_default_str();
  gen->add_option("--rho", syn.temporal_correlation, "AR(1) temporal correlation in [0,1)")
      ->capture_default_str();
  gen->add_option("--layer-noise", syn.layer_noise, "Per-layer noise std deviation")
      ->capture_default_str();
  gen->add_option("--held-out", syn.held_out_speakers, "Speakers reserved for test trials")
      ->capture_default_str();
  gen->add_option("--seed", syn.seed, "Generator seed")->required();
  gen->add_option("--out", gen_out, "Output directory")->required();

  // train
  TrainConfig tc;
  std::string manifest, val_manifest, out_model, metrics_csv, mode = "last", pooling = "isogat";
  CLI::App* tr = add_subcommand(app, "train", "Train a pooling model with the AAM head");
  tr->add_option("--manifest", manifest, "Training manifest (path<TAB>speaker)")->required();
  tr->add_option("--val-manifest", val_manifest, "Validation manifest for per-epoch EER");
  tr->add_option("--mode", mode, "Input layers: last|all")->capture_default_str();
  tr->add_option("--pooling", pooling, "isogat or a classical method")->capture_default_str();
  tr->add_option("--k", tc.k, "Aggregation layers")->capture_default_str();
  tr->add_option("--hidden", tc.hidden, "MLP hidden width")->capture_default_str();
  tr->add_option("--epsilon", tc.epsilon, "Self-term epsilon")->capture_default_str();
  tr->add_option("--lr", tc.lr, "Adam learning rate")->capture_default_str();
  tr->add_option("--epochs", tc.epochs, "Training epochs")->capture_default_str();
  tr->add_option("--batch", tc.batch, "Minibatch size")->capture_default_str();
  tr->add_option("--crop", tc.crop, "Frames per training crop")->capture_default_str();
  tr->add_option("--seed", tc.seed, "Seed")->capture_default_str();
  tr->add_option("--out-model", out_model, "Model file to write")->required();
  tr->add_option("--metrics-csv", metrics_csv, "Per-epoch metrics CSV");

  // eval
  std::string model_path, trials_path, store_dir, scores_csv;
  CLI::App* ev = add_subcommand(app, "eval", "Score a trial list and report EER");
  ev->add_option("--model", model_path, "Model file")->required();
  ev->add_option("--trials", trials_path, "Trial list (label enroll test)")->required();
  ev->add_option("--store", store_dir, "Directory holding <id>.sse files")->required();
  ev->add_option("--scores-csv", scores_csv, "Per-trial score CSV");

  // pool
  std::string pool_input, pool_method = "isogat", pool_model, pool_out;
  std::optional<std::uint64_t> pool_seed;
  CLI::App* po = add_subcommand(app, "pool", "Pool one SSE file into a vector");
  po->add_option("--input", pool_input, "SSE file")->required();
  po->add_option("--method", pool_method, "isogat|mean|maximum|random|first|median|middle|last|mean_std")
      ->capture_default_str();
  po->add_option("--model", pool_model, "Model file (required for isogat)");
  po->add_option("--seed", pool_seed, "Seed for random pooling");
  po->add_option("--out", pool_out, "Vector file (comma-separated); stdout when omitted");

  // theorem1
  std::optional<std::size_t> t1_n;
  double t1_beta = 1.0, t1_eps = 0.5;
  std::vector<double> t1_hdot;
  CLI::App* th = add_subcommand(app, "theorem1", "Build the plain-aggregation collision pair");
  th->add_option("--n", t1_n, "Vertex count (defaults to the length of --hdot)");
  th->add_option("--beta", t1_beta, "Attention temperature")->capture_default_str();
  th->add_option("--epsilon", t1_eps, "Self-term epsilon of the injective aggregator")
      ->capture_default_str();
  th->add_option("--hdot", t1_hdot, "Target aggregate, comma-separated")
      ->required()
      ->delimiter(',');

  // dump-adjacency
  std::string da_model, da_input, da_csv, da_pgm;
  CLI::App* da = add_subcommand(app, "dump-adjacency", "Export an utterance's attention matrix");
  da->add_option("--model", da_model, "Model file")->required();
  da->add_option("--input", da_input, "SSE file")->required();
  da->add_option("--csv", da_csv, "CSV output");
  da->add_option("--pgm", da_pgm, "8-bit PGM heatmap output");

  std::vector<std::string> args(argv, argv + argc);
  try {
    args = expand_config_file(std::move(args));
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      print_resolved(*gen, out);
      const SyntheticCorpus corpus = generate_synthetic(syn, gen_out);
      out << "wrote " << corpus.all.size() << " utterances (" << corpus.train.size() << " train, "
          << corpus.test.size() << " test) to " << gen_out << '\n';
    } else if (*tr) {
      print_resolved(*tr, out);
      tc.mode = parse_input_mode(mode);
      if (pooling != "isogat") tc.baseline = parse_pooling_kind(pooling);
      const Dataset data = load_dataset(load_manifest(manifest));
      std::optional<Dataset> val;
      if (!val_manifest.empty()) val = load_dataset(load_manifest(val_manifest));
      const TrainResult result =
          train(data, val ? &*val : nullptr, tc, [&](const EpochMetrics& m) {
            out << "epoch " << m.epoch << " loss " << format_real(m.loss);
            if (m.val_eer) out << " val_eer " << format_real(*m.val_eer);
            out << '\n';
          });
      save_model(result.model, out_model);
      if (!metrics_csv.empty()) {
        std::ofstream mf(metrics_csv);
        if (!mf) throw DataError("cannot open '" + metrics_csv + "' for writing");
        write_metrics_csv(result.metrics, mf);
      }
      out << "saved model to " << out_model << '\n';
    } else if (*ev) {
      print_resolved(*ev, out);
      const IsoGatModel model = load_model(model_path);
      const std::vector<Trial> trials = read_trials(trials_path);
      EmbeddingStore store(store_dir, model);
      const TrialRun run = run_trials(trials, store);
      if (!std::isfinite(run.eer.eer)) throw NumericError("EER is not finite");
      if (!scores_csv.empty()) write_scores_csv(run, scores_csv);
      out << "trials " << run.scores.size() << " genuine " << run.eer.genuine_count
          << " impostor " << run.eer.impostor_count << '\n';
      out << "eer " << format_real(run.eer.eer) << " threshold " << format_real(run.eer.threshold)
          << '\n';
    } else if (*po) {
      print_resolved(*po, out);
      const EmbeddingSequence seq = read_sse(pool_input);
      Vector pooled;
      if (pool_method == "isogat") {
        if (pool_model.empty()) throw ConfigError("--method isogat requires --model");
        pooled = embed_utterance(seq, load_model(pool_model)).z;
      } else {
        const PoolingKind kind = parse_pooling_kind(pool_method);
        if (kind == PoolingKind::kRandom && !pool_seed)
          throw ConfigError("--method random requires --seed");
        pooled = pool_classical(seq.layer(seq.layers - 1), kind,
                                kind == PoolingKind::kRandom ? pool_seed : std::nullopt);
      }
      require_finite(pooled, "pooled vector");
      if (pool_out.empty()) {
        write_vector(pooled, out);
      } else {
        std::ofstream vf(pool_out);
        if (!vf) throw DataError("cannot open '" + pool_out + "' for writing");
        write_vector(pooled, vf);
      }
    } else if (*th) {
      print_resolved(*th, out);
      if (t1_n && *t1_n != t1_hdot.size())
        throw ConfigError("--n " + std::to_string(*t1_n) + " does not match --hdot length " +
                          std::to_string(t1_hdot.size()));
      const CollisionPair pair = build_theorem1_pair(t1_hdot, t1_beta);
      const CollisionReport rep = verify_collision(pair, t1_beta, t1_eps);
      require_finite(rep.plain_check, "plain aggregate");
      out << "phi1_check ";
      write_vector(rep.plain_check, out);
      out << "phi1_hat ";
      write_vector(rep.plain_hat, out);
      out << "plain_gap " << format_real(rep.plain_gap) << '\n';
      out << "injective_gap " << format_real(rep.injective_gap) << '\n';
    } else if (*da) {
      print_resolved(*da, out);
      const IsoGatModel model = load_model(da_model);
      if (model.baseline) throw ConfigError("model uses classical pooling; it has no adjacency");
      const EmbedResult fwd = embed_utterance(read_sse(da_input), model);
      require_finite(fwd.adjacency.a.values(), "adjacency");
      if (!da_csv.empty()) write_adjacency_csv(fwd.adjacency, da_csv);
      if (!da_pgm.empty()) write_adjacency_pgm(fwd.adjacency, da_pgm);
      out << "adjacency " << fwd.adjacency.n() << "x" << fwd.adjacency.n() << '\n';
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace isogat
