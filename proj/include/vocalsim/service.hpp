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

#ifndef VOCALSIM_SERVICE_HPP_
#define VOCALSIM_SERVICE_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "vocalsim/corpus.hpp"
#include "vocalsim/retrieval.hpp"

namespace vocalsim {

struct StudyConfig {
  std::vector<Trial> trials;
  std::vector<std::string> models;
  AgreementMatrix agreement;
  std::filesystem::path response_log;
  const Corpus* corpus = nullptr;  // audio source; must outlive the service
  double query_window_seconds = 0.0;  // 0 serves whole clips
  std::filesystem::path static_dir;   // optional UI bundle mounted at /
};

/// Listening-test backend. Handlers are callable in-process; serve() exposes
/// them over HTTP:
///   GET  /api/trials/next?respondent=<token>
///   POST /api/trials/{trial_id}/response   {respondent, overall_choice, vocal_choice}
///   GET  /api/results/winrate?question=overall|vocal
///   GET  /api/results/agreement
///   GET  /audio/{track_id}.wav[?mode=vocals]
class StudyService {
 public:
  struct Reply {
    int status = 200;
    nlohmann::json body;
  };

  /// Replays an existing response log before accepting new responses.
  explicit StudyService(StudyConfig config);
  ~StudyService();

  Reply next_trial(const std::string& respondent);
  Reply submit(const std::string& trial_id, const std::string& body);
  Reply winrate(const std::string& question) const;
  Reply agreement() const;
  /// WAV bytes or nullopt for unknown tracks; throws on a bad mode.
  std::optional<std::vector<std::uint8_t>> audio(const std::string& track_id, const std::string& mode) const;

  WinrateMatrix live_winrate(Question q) const;
  std::size_t responses() const;

  /// Binds (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void run();
  void stop();

 private:
  static Reply error(int status, const std::string& code, const std::string& message);
  void record(const TrialResponse& r);

  StudyConfig config_;
  std::map<std::string, std::size_t> trial_index_;
  std::vector<std::vector<std::size_t>> sessions_;
  mutable std::mutex mu_;
  std::map<std::string, std::size_t> session_of_;  // respondent -> session
  std::size_t next_session_ = 0;
  std::set<std::pair<std::string, std::string>> answered_;  // (respondent, trial)
  WinrateTally overall_, vocal_;
  std::size_t count_ = 0;
  std::unique_ptr<ResponseLog> log_;
  struct Http;
  std::unique_ptr<Http> http_;
};

}  // namespace vocalsim

#endif  // VOCALSIM_SERVICE_HPP_
