#pragma once

// Cosine-backend verification scoring and equal error rate.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "isogat/dataio.hpp"
#include "isogat/model.hpp"
#include "isogat/numerics.hpp"

namespace isogat {

/// Shortest decimal text that round-trips to the same double.
inline std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double score_trial(std::span<const double> enroll, std::span<const double> test) {
  if (enroll.size() != test.size())
    throw ShapeError("score_trial: embedding dims " + std::to_string(enroll.size()) + " vs " +
                     std::to_string(test.size()));
  if (norm2(enroll) < kZeroNorm || norm2(test) < kZeroNorm)
    throw DomainError("score_trial: zero embedding");
  return std::clamp(cosine_similarity(enroll, test), -1.0, 1.0);
}

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
  std::size_t genuine_count = 0;
  std::size_t impostor_count = 0;
};

/// Operating point at threshold t: FAR = share of impostors with score >= t,
/// FRR = share of genuine trials with score < t.
struct OperatingPoint {
  double threshold;
  double far;
  double frr;
};

/// Interpolates the FAR = FRR crossing from the operating points at each
/// distinct score (ascending). A closing point (FAR 0, FRR 1) at the top
/// threshold covers curves that never cross inside the score range.
inline EerResult eer_from_operating_points(const std::vector<OperatingPoint>& points) {
  EerResult r;
  for (std::size_t k = 0; k <= points.size(); ++k) {
    const OperatingPoint cur =
        k < points.size() ? points[k] : OperatingPoint{points.back().threshold, 0.0, 1.0};
    const double diff = cur.far - cur.frr;
    if (diff > 0.0) continue;
    if (diff == 0.0 || k == 0) {
      r.eer = cur.far;
      r.threshold = cur.threshold;
      return r;
    }
    const OperatingPoint& prev = points[k - 1];
    const double prev_diff = prev.far - prev.frr;
    const double alpha = prev_diff / (prev_diff - diff);
    r.eer = prev.far + alpha * (cur.far - prev.far);
    r.threshold = prev.threshold + alpha * (cur.threshold - prev.threshold);
    return r;
  }
  return r;  // unreachable: the closing point always has diff < 0
}

inline EerResult compute_eer(std::vector<double> genuine, std::vector<double> impostor) {
  if (genuine.empty() || impostor.empty())
    throw DataError("compute_eer: need at least one genuine and one impostor score");
  std::sort(genuine.begin(), genuine.end());
  std::sort(impostor.begin(), impostor.end());
  std::vector<double> thresholds;
  thresholds.reserve(genuine.size() + impostor.size());
  std::merge(genuine.begin(), genuine.end(), impostor.begin(), impostor.end(),
             std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double g = static_cast<double>(genuine.size());
  const double i = static_cast<double>(impostor.size());
  std::vector<OperatingPoint> points;
  points.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto rejected = std::lower_bound(genuine.begin(), genuine.end(), t) - genuine.begin();
    const auto below = std::lower_bound(impostor.begin(), impostor.end(), t) - impostor.begin();
    points.push_back({t, static_cast<double>(impostor.size() - static_cast<std::size_t>(below)) / i,
                      static_cast<double>(rejected) / g});
  }
  EerResult r = eer_from_operating_points(points);
  r.genuine_count = genuine.size();
  r.impostor_count = impostor.size();
  return r;
}

struct Trial {
  bool genuine = false;
  std::string enroll_id;
  std::string test_id;
};

/// "label enroll_id test_id" per line, label 1 = genuine, 0 = impostor.
inline std::vector<Trial> parse_trials(std::istream& in, const std::string& source) {
  std::vector<Trial> trials;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string label, extra;
    Trial t;
    if (!(ls >> label)) continue;
    if (!(ls >> t.enroll_id >> t.test_id) || (ls >> extra) || (label != "0" && label != "1"))
      throw DataError(source + ":" + std::to_string(line_no) +
                      ": expected 'label enroll_id test_id' with label 0 or 1");
    t.genuine = label == "1";
    trials.push_back(std::move(t));
  }
  if (trials.empty()) throw DataError(source + ": trial list is empty");
  return trials;
}

inline std::vector<Trial> read_trials(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trial list '" + path + "'");
  return parse_trials(in, path);
}

/// Resolves utterance ids to SSE files under a directory and caches embeddings.
class EmbeddingStore {
 public:
  EmbeddingStore(std::string root, const IsoGatModel& model)
      : root_(std::move(root)), model_(model) {}

  std::string path_for(const std::string& id) const {
    std::filesystem::path p = std::filesystem::path(root_) / id;
    if (p.extension() != ".sse") p += ".sse";
    return p.string();
  }

  const Vector& embedding(const std::string& id) {
    auto it = cache_.find(id);
    if (it != cache_.end()) return it->second;
    const std::string path = path_for(id);
    if (!std::filesystem::exists(path))
      throw DataError("utterance id '" + id + "' does not resolve (looked for " + path + ")");
    Vector z = embed_utterance(read_sse(path), model_).z;
    return cache_.emplace(id, std::move(z)).first->second;
  }

 private:
  std::string root_;
  const IsoGatModel& model_;
  std::map<std::string, Vector> cache_;
};

struct TrialScore {
  const Trial* trial;
  double score;
};

struct TrialRun {
  EerResult eer;
  std::vector<TrialScore> scores;
};

inline TrialRun run_trials(const std::vector<Trial>& trials, EmbeddingStore& store) {
  TrialRun run;
  std::vector<double> genuine, impostor;
  for (const Trial& t : trials) {
    const double s = score_trial(store.embedding(t.enroll_id), store.embedding(t.test_id));
    run.scores.push_back({&t, s});
    (t.genuine ? genuine : impostor).push_back(s);
  }
  run.eer = compute_eer(std::move(genuine), std::move(impostor));
  return run;
}

inline void write_scores_csv(const TrialRun& run, std::ostream& out) {
  out << "enroll_id,test_id,label,score\n";
  for (const auto& s : run.scores)
    out << s.trial->enroll_id << ',' << s.trial->test_id << ',' << (s.trial->genuine ? 1 : 0)
        << ',' << format_real(s.score) << '\n';
}

inline void write_scores_csv(const TrialRun& run, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  write_scores_csv(run, out);
}

/// Every unordered pair of embeddings as a trial, genuine when labels match.
inline EerResult all_pairs_eer(const std::vector<Vector>& embeddings,
                               const std::vector<std::size_t>& labels) {
  std::vector<double> genuine, impostor;
  for (std::size_t i = 0; i < embeddings.size(); ++i)
    for (std::size_t j = i + 1; j < embeddings.size(); ++j)
      (labels[i] == labels[j] ? genuine : impostor)
          .push_back(score_trial(embeddings[i], embeddings[j]));
  return compute_eer(std::move(genuine), std::move(impostor));
}

}  // namespace isogat
