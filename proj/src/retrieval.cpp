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

#include "vocalsim/retrieval.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

namespace vocalsim {

void RetrievalIndex::add(std::string track_id, std::string model_id, const Vector& embedding) {
  const double n = embedding.norm();
  if (!(n > 0.0) || !std::isfinite(n))
    throw Error("retrieval", "build_index", "embedding of " + track_id + " has zero or non-finite norm");
  auto key = std::make_pair(model_id, track_id);
  if (lookup_.count(key))
    throw Error("retrieval", "build_index", "duplicate entry " + model_id + "/" + track_id);
  lookup_.emplace(std::move(key), entries_.size());
  entries_.push_back({std::move(track_id), std::move(model_id), embedding / n});
}

std::vector<std::string> RetrievalIndex::models() const {
  std::set<std::string> s;
  for (const auto& e : entries_) s.insert(e.model_id);
  return {s.begin(), s.end()};
}

std::vector<std::string> RetrievalIndex::tracks(const std::string& model_id) const {
  std::vector<std::string> out;
  for (const auto& e : entries_)
    if (e.model_id == model_id) out.push_back(e.track_id);
  std::sort(out.begin(), out.end());
  return out;
}

bool RetrievalIndex::contains(const std::string& model_id, const std::string& track_id) const {
  return lookup_.count({model_id, track_id}) > 0;
}

const IndexEntry& RetrievalIndex::entry(const std::string& model_id, const std::string& track_id) const {
  auto it = lookup_.find({model_id, track_id});
  if (it == lookup_.end()) throw Error("retrieval", "query", "no entry " + model_id + "/" + track_id);
  return entries_[it->second];
}

std::vector<std::pair<std::string, double>> RetrievalIndex::query_topk(const std::string& model_id,
                                                                       const std::string& query_track,
                                                                       std::size_t k) const {
  const Vector& q = entry(model_id, query_track).embedding;
  std::vector<std::pair<std::string, double>> out;
  for (const auto& e : entries_)
    if (e.model_id == model_id && e.track_id != query_track) out.emplace_back(e.track_id, q.dot(e.embedding));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

std::string RetrievalIndex::query_top1(const std::string& model_id, const std::string& query_track) const {
  auto top = query_topk(model_id, query_track, 1);
  if (top.empty()) throw Error("retrieval", "query_top1", "no candidates besides " + query_track);
  return top.front().first;
}

nlohmann::json RetrievalIndex::to_json() const {
  nlohmann::json es = nlohmann::json::array();
  for (const auto& e : entries_)
    es.push_back({{"track_id", e.track_id},
                  {"model_id", e.model_id},
                  {"embedding", std::vector<double>(e.embedding.data(), e.embedding.data() + e.embedding.size())}});
  return {{"input_mode", std::string(to_string(mode_))}, {"entries", es}};
}

RetrievalIndex RetrievalIndex::from_json(const nlohmann::json& j) {
  RetrievalIndex idx(parse_input_mode(j.at("input_mode").get<std::string>()));
  for (const auto& e : j.at("entries")) {
    const auto v = e.at("embedding").get<std::vector<double>>();
    idx.add(e.at("track_id").get<std::string>(), e.at("model_id").get<std::string>(),
            Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  return idx;
}

RetrievalIndex build_index(const Corpus& corpus, std::span<const std::size_t> indices,
                           std::span<const NamedModel> models, InputMode mode, std::vector<std::string>* diagnostics) {
  if (indices.empty()) throw Error("retrieval", "build_index", "no tracks to index");
  if (models.empty()) throw Error("retrieval", "build_index", "no models");
  RetrievalIndex idx(mode);
  for (const auto& m : models) {
    for (const auto& clip : embed_clips(corpus, indices, *m.model, mode, diagnostics))
      idx.add(clip.track_id, m.model_id, clip.mean_embedding);
  }
  return idx;
}

std::string_view to_string(Choice c) { return c == Choice::kA ? "A" : "B"; }

Choice parse_choice(std::string_view s) {
  if (s == "A" || s == "a") return Choice::kA;
  if (s == "B" || s == "b") return Choice::kB;
  throw Error("retrieval", "parse_choice", "choice must be A or B, got '" + std::string(s) + "'");
}

void to_json(nlohmann::json& j, const Trial& t) {
  j = {{"trial_id", t.trial_id},
       {"session", t.session},
       {"query_track", t.query_track},
       {"model_a", t.model_a},
       {"model_b", t.model_b},
       {"recommendation_a", t.recommendation_a},
       {"recommendation_b", t.recommendation_b},
       {"input_mode", std::string(to_string(t.input_mode))},
       {"control", t.control}};
}

void from_json(const nlohmann::json& j, Trial& t) {
  j.at("trial_id").get_to(t.trial_id);
  t.session = j.value("session", std::size_t{0});
  j.at("query_track").get_to(t.query_track);
  j.at("model_a").get_to(t.model_a);
  j.at("model_b").get_to(t.model_b);
  j.at("recommendation_a").get_to(t.recommendation_a);
  j.at("recommendation_b").get_to(t.recommendation_b);
  t.input_mode = parse_input_mode(j.at("input_mode").get<std::string>());
  t.control = j.value("control", false);
}

std::vector<Trial> generate_trials(const RetrievalIndex& mixture_index, const RetrievalIndex& vocals_index,
                                   std::span<const std::string> queries, std::span<const std::string> models,
                                   const TrialConfig& config, Rng& rng, std::vector<std::string>* warnings) {
  if (models.size() < 2) throw Error("retrieval", "generate_trials", "need at least two models");
  if (std::set<std::string>(models.begin(), models.end()).size() != models.size())
    throw Error("retrieval", "generate_trials", "model ids must be distinct");
  if (!(config.control_fraction >= 0.0 && config.control_fraction <= 1.0))
    throw Error("retrieval", "generate_trials", "control_fraction must lie in [0, 1]");
  for (const auto* index : {&mixture_index, &vocals_index})
    for (const auto& m : models)
      for (const auto& q : queries)
        if (!index->contains(m, q))
          throw Error("retrieval", "generate_trials", "query " + q + " not indexed for model " + m + " (" +
                                                          std::string(to_string(index->mode())) + ")");

  std::vector<Trial> out;
  std::size_t next_id = 0;
  for (std::size_t s = 0; s < config.sessions; ++s) {
    std::vector<Trial> session;
    const std::size_t n_vocals = config.n_per_respondent / 2;
    const std::size_t n_mixture = config.n_per_respondent - n_vocals;
    for (const auto& [index, quota] : {std::pair{&mixture_index, n_mixture}, std::pair{&vocals_index, n_vocals}}) {
      std::vector<std::string> order(queries.begin(), queries.end());
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
      std::size_t made = 0;
      for (const auto& q : order) {
        if (made == quota) break;
        std::size_t a = uniform_index(rng, models.size());
        std::size_t b = uniform_index(rng, models.size() - 1);
        if (b >= a) ++b;
        Trial t;
        t.session = s;
        t.query_track = q;
        t.model_a = models[a];
        t.model_b = models[b];
        t.recommendation_a = index->query_top1(t.model_a, q);
        t.recommendation_b = index->query_top1(t.model_b, q);
        t.input_mode = index->mode();
        if (t.recommendation_a == t.recommendation_b) {
          if (!(uniform_unit(rng) < config.control_fraction)) continue;
          t.control = true;
        }
        session.push_back(std::move(t));
        ++made;
      }
      if (made < quota && warnings)
        warnings->push_back("session " + std::to_string(s) + ": query pool exhausted with " + std::to_string(made) +
                            " of " + std::to_string(quota) + " " + std::string(to_string(index->mode())) + " trials");
    }
    for (std::size_t i = session.size(); i > 1; --i) std::swap(session[i - 1], session[uniform_index(rng, i)]);
    for (auto& t : session) {
      char id[32];
      std::snprintf(id, sizeof id, "trial-%05zu", next_id++);
      t.trial_id = id;
      out.push_back(std::move(t));
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const TrialResponse& r) {
  j = {{"trial_id", r.trial_id},
       {"respondent", r.respondent},
       {"overall_choice", std::string(to_string(r.overall_choice))},
       {"vocal_choice", std::string(to_string(r.vocal_choice))},
       {"timestamp", r.timestamp},
       {"trial", r.trial}};
}

void from_json(const nlohmann::json& j, TrialResponse& r) {
  j.at("trial_id").get_to(r.trial_id);
  j.at("respondent").get_to(r.respondent);
  r.overall_choice = parse_choice(j.at("overall_choice").get<std::string>());
  r.vocal_choice = parse_choice(j.at("vocal_choice").get<std::string>());
  r.timestamp = j.value("timestamp", std::string{});
  j.at("trial").get_to(r.trial);
}

Question parse_question(std::string_view s) {
  if (s == "overall") return Question::kOverall;
  if (s == "vocal") return Question::kVocal;
  throw Error("retrieval", "parse_question", "question must be overall or vocal, got '" + std::string(s) + "'");
}

nlohmann::json WinrateMatrix::to_json() const {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  nlohmann::json cells = nlohmann::json::array(), totals = nlohmann::json::array();
  for (std::size_t i = 0; i < models.size(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (double v : percent[i]) row.push_back(num(v));
    cells.push_back(row);
    totals.push_back({{"model", models[i]}, {"wins", total_wins[i]}, {"losses", total_losses[i]}, {"winrate", num(winrate[i])}});
  }
  return {{"models", models}, {"percent", cells}, {"wins", wins}, {"totals", totals}};
}

WinrateTally::WinrateTally(std::vector<std::string> models) : models_(std::move(models)) {
  for (std::size_t i = 0; i < models_.size(); ++i) index_[models_[i]] = i;
  wins_.assign(models_.size(), std::vector<std::size_t>(models_.size(), 0));
}

void WinrateTally::add(const TrialResponse& r, Question question) {
  if (r.trial.control) return;
  auto ia = index_.find(r.trial.model_a), ib = index_.find(r.trial.model_b);
  if (ia == index_.end() || ib == index_.end())
    throw Error("retrieval", "winrate_matrix", "response " + r.trial_id + " names an unknown model");
  const Choice c = question == Question::kOverall ? r.overall_choice : r.vocal_choice;
  if (c == Choice::kA) ++wins_[ia->second][ib->second];
  else ++wins_[ib->second][ia->second];
}

WinrateMatrix WinrateTally::matrix() const {
  const std::size_t n = models_.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  WinrateMatrix m{models_, wins_, std::vector<std::vector<double>>(n, std::vector<double>(n, nan)),
                  std::vector<std::size_t>(n, 0), std::vector<std::size_t>(n, 0), std::vector<double>(n, nan)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t cmp = wins_[i][j] + wins_[j][i];
      if (i != j && cmp > 0) m.percent[i][j] = 100.0 * static_cast<double>(wins_[i][j]) / static_cast<double>(cmp);
      m.total_wins[i] += wins_[i][j];
      m.total_losses[i] += wins_[j][i];
    }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = m.total_wins[i] + m.total_losses[i];
    if (t > 0) m.winrate[i] = 100.0 * static_cast<double>(m.total_wins[i]) / static_cast<double>(t);
  }
  return m;
}

WinrateMatrix winrate_matrix(std::span<const TrialResponse> responses, std::span<const std::string> models,
                             Question question) {
  WinrateTally tally({models.begin(), models.end()});
  for (const auto& r : responses) tally.add(r, question);
  return tally.matrix();
}

nlohmann::json AgreementMatrix::to_json() const {
  return {{"models", models}, {"percent", percent}, {"queries", queries}};
}

AgreementMatrix agreement_matrix(const RetrievalIndex& index, std::span<const std::string> models,
                                 std::span<const std::string> queries) {
  if (queries.empty()) throw Error("retrieval", "agreement_matrix", "no queries");
  const std::size_t n = models.size();
  std::vector<std::vector<std::string>> top(n);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& q : queries) top[i].push_back(index.query_top1(models[i], q));
  AgreementMatrix m{{models.begin(), models.end()}, std::vector<std::vector<double>>(n, std::vector<double>(n, 0.0)),
                    queries.size()};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t same = 0;
      for (std::size_t q = 0; q < queries.size(); ++q) same += top[i][q] == top[j][q];
      m.percent[i][j] = 100.0 * static_cast<double>(same) / static_cast<double>(queries.size());
    }
  return m;
}

ResponseLog::ResponseLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error("retrieval", "response_log", "cannot open " + path_.string() + ": " + std::strerror(errno));
}

ResponseLog::~ResponseLog() {
  if (fd_ >= 0) ::close(fd_);
}

void ResponseLog::append(const TrialResponse& response) {
  const std::string line = nlohmann::json(response).dump() + "\n";
  std::lock_guard lock(mu_);
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("retrieval", "response_log", "write failed: " + std::string(std::strerror(errno)));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) throw Error("retrieval", "response_log", "fsync failed: " + std::string(std::strerror(errno)));
}

std::vector<TrialResponse> ResponseLog::read(const std::filesystem::path& path) {
  std::vector<TrialResponse> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<TrialResponse>());
    } catch (const std::exception& e) {
      throw Error("retrieval", "response_log", path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace vocalsim
