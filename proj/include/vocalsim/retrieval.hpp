// Copyright 2026 The vocalsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VOCALSIM_RETRIEVAL_HPP_
#define VOCALSIM_RETRIEVAL_HPP_

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vocalsim/evaluation.hpp"

namespace vocalsim {

struct IndexEntry {
  std::string track_id;
  std::string model_id;
  Vector embedding;  // unit norm
};

class RetrievalIndex {
 public:
  explicit RetrievalIndex(InputMode mode = InputMode::kMixture) : mode_(mode) {}

  InputMode mode() const { return mode_; }
  /// Normalizes on insert; rejects duplicates and zero vectors.
  void add(std::string track_id, std::string model_id, const Vector& embedding);

  const std::vector<IndexEntry>& entries() const { return entries_; }
  std::vector<std::string> models() const;
  std::vector<std::string> tracks(const std::string& model_id) const;
  bool contains(const std::string& model_id, const std::string& track_id) const;
  const IndexEntry& entry(const std::string& model_id, const std::string& track_id) const;

  /// Candidates of `model_id` other than the query, by descending cosine
  /// similarity, ties by track id.
  std::vector<std::pair<std::string, double>> query_topk(const std::string& model_id, const std::string& query_track,
                                                         std::size_t k) const;
  std::string query_top1(const std::string& model_id, const std::string& query_track) const;

  nlohmann::json to_json() const;
  static RetrievalIndex from_json(const nlohmann::json& j);

 private:
  InputMode mode_;
  std::vector<IndexEntry> entries_;
  std::map<std::pair<std::string, std::string>, std::size_t> lookup_;  // (model, track)
};

struct NamedModel {
  std::string model_id;
  const ModelState* model;
};

RetrievalIndex build_index(const Corpus& corpus, std::span<const std::size_t> indices,
                           std::span<const NamedModel> models, InputMode mode,
                           std::vector<std::string>* diagnostics = nullptr);

enum class Choice { kA, kB };

std::string_view to_string(Choice c);
Choice parse_choice(std::string_view s);

struct Trial {
  std::string trial_id;
  std::size_t session = 0;  // trials are served per session of n_per_respondent
  std::string query_track;
  std::string model_a, model_b;
  std::string recommendation_a, recommendation_b;
  InputMode input_mode = InputMode::kMixture;
  bool control = false;  // both models recommended the same track
};

void to_json(nlohmann::json& j, const Trial& t);
void from_json(const nlohmann::json& j, Trial& t);

struct TrialConfig {
  std::size_t n_per_respondent = 20;
  std::size_t sessions = 1;
  double control_fraction = 0.05;
};

/// Half of each session uses the mixture index, half the vocals index. Model
/// pairs are drawn uniformly; coinciding recommendations are kept only as
/// controls with probability control_fraction.
std::vector<Trial> generate_trials(const RetrievalIndex& mixture_index, const RetrievalIndex& vocals_index,
                                   std::span<const std::string> queries, std::span<const std::string> models,
                                   const TrialConfig& config, Rng& rng, std::vector<std::string>* warnings = nullptr);

struct TrialResponse {
  std::string trial_id;
  std::string respondent;
  Choice overall_choice = Choice::kA;
  Choice vocal_choice = Choice::kA;
  std::string timestamp;
  Trial trial;  // denormalized copy so the log replays on its own
};

void to_json(nlohmann::json& j, const TrialResponse& r);
void from_json(const nlohmann::json& j, TrialResponse& r);

enum class Question { kOverall, kVocal };

Question parse_question(std::string_view s);

struct WinrateMatrix {
  std::vector<std::string> models;
  std::vector<std::vector<std::size_t>> wins;         // wins[i][j]: i chosen over j
  std::vector<std::vector<double>> percent;           // NaN where no comparisons
  std::vector<std::size_t> total_wins, total_losses;
  std::vector<double> winrate;                        // NaN for models never compared

  nlohmann::json to_json() const;
};

/// Tally of responses into a matrix. Controls are skipped.
class WinrateTally {
 public:
  explicit WinrateTally(std::vector<std::string> models);
  void add(const TrialResponse& response, Question question);
  WinrateMatrix matrix() const;

 private:
  std::vector<std::string> models_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> wins_;
};

WinrateMatrix winrate_matrix(std::span<const TrialResponse> responses, std::span<const std::string> models,
                             Question question);

struct AgreementMatrix {
  std::vector<std::string> models;
  std::vector<std::vector<double>> percent;
  std::size_t queries = 0;

  nlohmann::json to_json() const;
};

AgreementMatrix agreement_matrix(const RetrievalIndex& index, std::span<const std::string> models,
                                 std::span<const std::string> queries);

/// Append-only JSONL; every record is written and fsync'd before append()
/// returns.
class ResponseLog {
 public:
  explicit ResponseLog(std::filesystem::path path);
  ~ResponseLog();
  ResponseLog(const ResponseLog&) = delete;
  ResponseLog& operator=(const ResponseLog&) = delete;

  void append(const TrialResponse& response);
  const std::filesystem::path& path() const { return path_; }

  static std::vector<TrialResponse> read(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::mutex mu_;
};

}  // namespace vocalsim

#endif  // VOCALSIM_RETRIEVAL_HPP_
