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

#include "vocalsim/service.hpp"

#include <chrono>
#include <ctime>

#include "httplib.h"
#include "vocalsim/wav.hpp"

namespace vocalsim {

struct StudyService::Http {
  httplib::Server server;
};

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

std::string audio_url(const std::string& track, InputMode mode) {
  return "/audio/" + track + ".wav" + (mode == InputMode::kVocals ? "?mode=vocals" : "");
}

void send(httplib::Response& res, const StudyService::Reply& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

}  // namespace

StudyService::StudyService(StudyConfig config)
    : config_(std::move(config)), overall_(config_.models), vocal_(config_.models) {
  if (config_.trials.empty()) throw Error("service", "serve", "no trials");
  std::size_t n_sessions = 0;
  for (std::size_t i = 0; i < config_.trials.size(); ++i) {
    const auto& t = config_.trials[i];
    if (!trial_index_.emplace(t.trial_id, i).second) throw Error("service", "serve", "duplicate trial id " + t.trial_id);
    n_sessions = std::max(n_sessions, t.session + 1);
  }
  sessions_.resize(n_sessions);
  for (std::size_t i = 0; i < config_.trials.size(); ++i) sessions_[config_.trials[i].session].push_back(i);

  for (const auto& r : ResponseLog::read(config_.response_log)) {
    if (!trial_index_.count(r.trial_id))
      throw Error("service", "serve", "response log references unknown trial " + r.trial_id);
    record(r);
  }
  // Keep assigning fresh sessions after the ones already taken.
  next_session_ = session_of_.size();
  log_ = std::make_unique<ResponseLog>(config_.response_log);
}

StudyService::~StudyService() { stop(); }

StudyService::Reply StudyService::error(int status, const std::string& code, const std::string& message) {
  return {status, {{"error", {{"code", code}, {"message", message}}}}};
}

void StudyService::record(const TrialResponse& r) {
  answered_.insert({r.respondent, r.trial_id});
  session_of_.emplace(r.respondent, config_.trials[trial_index_.at(r.trial_id)].session);
  overall_.add(r, Question::kOverall);
  vocal_.add(r, Question::kVocal);
  ++count_;
}

StudyService::Reply StudyService::next_trial(const std::string& respondent) {
  if (respondent.empty()) return error(400, "missing_respondent", "query parameter 'respondent' is required");
  std::lock_guard lock(mu_);
  auto it = session_of_.find(respondent);
  if (it == session_of_.end()) it = session_of_.emplace(respondent, next_session_++ % sessions_.size()).first;
  const auto& session = sessions_[it->second];
  std::size_t answered = 0;
  const Trial* next = nullptr;
  for (auto i : session) {
    if (answered_.count({respondent, config_.trials[i].trial_id})) ++answered;
    else if (!next) next = &config_.trials[i];
  }
  nlohmann::json progress = {{"answered", answered}, {"total", session.size()}};
  if (!next) return {200, {{"done", true}, {"progress", progress}}};
  return {200,
          {{"done", false},
           {"trial_id", next->trial_id},
           {"mode", std::string(to_string(next->input_mode))},
           {"query_url", audio_url(next->query_track, next->input_mode)},
           {"candidate_a_url", audio_url(next->recommendation_a, next->input_mode)},
           {"candidate_b_url", audio_url(next->recommendation_b, next->input_mode)},
           {"progress", progress}}};
}

StudyService::Reply StudyService::submit(const std::string& trial_id, const std::string& body) {
  auto ti = trial_index_.find(trial_id);
  if (ti == trial_index_.end()) return error(404, "unknown_trial", "no trial " + trial_id);
  TrialResponse r;
  try {
    const auto j = nlohmann::json::parse(body);
    if (!j.is_object()) return error(400, "malformed", "body must be a JSON object");
    r.respondent = j.at("respondent").get<std::string>();
    r.overall_choice = parse_choice(j.at("overall_choice").get<std::string>());
    r.vocal_choice = parse_choice(j.at("vocal_choice").get<std::string>());
  } catch (const std::exception& e) {
    return error(400, "malformed", e.what());
  }
  if (r.respondent.empty()) return error(400, "malformed", "respondent must be non-empty");
  r.trial_id = trial_id;
  r.trial = config_.trials[ti->second];
  r.timestamp = utc_now();

  std::lock_guard lock(mu_);
  if (answered_.count({r.respondent, trial_id}))
    return error(409, "duplicate", "respondent " + r.respondent + " already answered " + trial_id);
  log_->append(r);  // durable before acknowledging
  record(r);
  return {201, {{"status", "recorded"}, {"trial_id", trial_id}}};
}

StudyService::Reply StudyService::winrate(const std::string& question) const {
  Question q;
  try {
    q = parse_question(question);
  } catch (const Error& e) {
    return error(400, "bad_question", e.what());
  }
  auto m = live_winrate(q).to_json();
  m["question"] = question;
  return {200, m};
}

StudyService::Reply StudyService::agreement() const { return {200, config_.agreement.to_json()}; }

std::optional<std::vector<std::uint8_t>> StudyService::audio(const std::string& track_id, const std::string& mode) const {
  if (!config_.corpus) return std::nullopt;
  if (!mode.empty() && mode != "mixture" && mode != "vocals")
    throw Error("service", "audio", "mode must be mixture or vocals");
  const auto idx = config_.corpus->find(track_id);
  if (!idx) return std::nullopt;
  const StemTrack& t = config_.corpus->tracks[*idx];
  AudioBuffer b = mode == "vocals" ? t.vocals : mixture(t);
  if (config_.query_window_seconds > 0.0)
    b = crop_samples(b, 0, std::min(b.size(), seconds_to_samples(config_.query_window_seconds)));
  return encode_wav(b, WavEncoding::kPcm16);
}

WinrateMatrix StudyService::live_winrate(Question q) const {
  std::lock_guard lock(mu_);
  return (q == Question::kOverall ? overall_ : vocal_).matrix();
}

std::size_t StudyService::responses() const {
  std::lock_guard lock(mu_);
  return count_;
}

int StudyService::bind(const std::string& host, int port) {
  http_ = std::make_unique<Http>();
  auto& s = http_->server;
  s.Get("/api/trials/next", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, next_trial(req.get_param_value("respondent")));
  });
  s.Post(R"(/api/trials/([^/]+)/response)", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, submit(req.matches[1], req.body));
  });
  s.Get("/api/results/winrate", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, winrate(req.has_param("question") ? req.get_param_value("question") : "overall"));
  });
  s.Get("/api/results/agreement", [this](const httplib::Request&, httplib::Response& res) { send(res, agreement()); });
  s.Get(R"(/audio/([^/]+)\.wav)", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto bytes = audio(req.matches[1], req.get_param_value("mode"));
      if (!bytes) return send(res, error(404, "unknown_track", "no track " + std::string(req.matches[1])));
      res.set_content(std::string(bytes->begin(), bytes->end()), "audio/wav");
    } catch (const Error& e) {
      send(res, error(400, "bad_mode", e.what()));
    }
  });
  if (!config_.static_dir.empty()) s.set_mount_point("/", config_.static_dir.string());
  s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.body.empty()) send(res, error(res.status, "http_error", "cannot serve " + req.method + " " + req.path));
  });
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send(res, error(500, "internal", what));
  });
  const int bound = port == 0 ? s.bind_to_any_port(host) : (s.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("service", "serve", "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void StudyService::run() {
  if (!http_) throw Error("service", "serve", "bind() first");
  http_->server.listen_after_bind();
}

void StudyService::stop() {
  if (http_) http_->server.stop();
}

}  // namespace vocalsim
