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

#include "vocalsim/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace vocalsim {
namespace {

constexpr char kMagic[8] = {'V', 'S', 'I', 'M', 'C', 'K', 'P', 'T'};

struct Entry {
  std::string name;
  std::vector<std::size_t> shape;
  const std::vector<double>* data;
};

void write_entries(std::ofstream& out, const nlohmann::json& header_base, const std::vector<Entry>& entries) {
  nlohmann::json header = header_base;
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& e : entries) {
    table.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", offset}, {"count", e.data->size()}});
    offset += e.data->size() * sizeof(double);
  }
  header["tensors"] = table;
  const std::string text = header.dump();
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t len = text.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : entries)
    out.write(reinterpret_cast<const char*>(e.data->data()), static_cast<std::streamsize>(e.data->size() * sizeof(double)));
}

void write_file(const std::filesystem::path& path, const nlohmann::json& header, const std::vector<Entry>& entries) {
  // Write-then-rename so readers never observe a partial checkpoint.
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("checkpoint", "save", "cannot open " + tmp);
    write_entries(out, header, entries);
    if (!out) throw Error("checkpoint", "save", "short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::vector<Entry> model_entries(const ModelState& model) {
  std::vector<Entry> entries;
  for (const auto& t : model.tensors) entries.push_back({t.name, t.shape, &t.data});
  return entries;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const TrainingState& st = ck.state;
  nlohmann::json header = {{"encoder", st.model.config},
                           {"step", st.step},
                           {"lr", st.lr},
                           {"finetune_stage", st.finetune_stage},
                           {"schedule", st.schedule.to_json()},
                           {"has_optimizer", ck.has_optimizer},
                           {"adam_t", st.adam.t},
                           {"metadata", ck.metadata}};
  std::vector<Entry> entries = model_entries(st.model);
  if (ck.has_optimizer) {
    if (st.adam.m.size() != st.model.tensors.size())
      throw Error("checkpoint", "save", "optimizer state does not match the model");
    for (std::size_t k = 0; k < st.model.tensors.size(); ++k) {
      entries.push_back({"adam.m." + st.model.tensors[k].name, st.model.tensors[k].shape, &st.adam.m[k]});
      entries.push_back({"adam.v." + st.model.tensors[k].name, st.model.tensors[k].shape, &st.adam.v[k]});
    }
  }
  write_file(path, header, entries);
}

void save_model(const std::filesystem::path& path, const ModelState& model, const nlohmann::json& metadata) {
  Checkpoint ck;
  ck.state.model = model;
  ck.has_optimizer = false;
  ck.metadata = metadata;
  save_checkpoint(path, ck);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint", "load", "cannot open " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto fail = [&](const std::string& why) -> Error { return Error("checkpoint", "load", path.string() + ": " + why); };

  constexpr std::size_t kPrefix = sizeof kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < kPrefix || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw fail("not a checkpoint");
  std::uint32_t version;
  std::uint64_t len;
  std::memcpy(&version, bytes.data() + 8, sizeof version);
  std::memcpy(&len, bytes.data() + 12, sizeof len);
  if (version != kCheckpointVersion) throw fail("unsupported version " + std::to_string(version));
  if (len > bytes.size() - kPrefix) throw fail("truncated header");
  const nlohmann::json header = nlohmann::json::parse(bytes.begin() + kPrefix, bytes.begin() + static_cast<std::ptrdiff_t>(kPrefix + len));
  const std::size_t payload = kPrefix + len;

  std::map<std::string, std::vector<double>> arrays;
  for (const auto& t : header.at("tensors")) {
    const auto offset = t.at("offset").get<std::uint64_t>();
    const auto count = t.at("count").get<std::uint64_t>();
    if (payload + offset + count * sizeof(double) > bytes.size()) throw fail("truncated payload");
    std::vector<double> data(count);
    std::memcpy(data.data(), bytes.data() + payload + offset, count * sizeof(double));
    arrays[t.at("name").get<std::string>()] = std::move(data);
  }

  Checkpoint ck;
  TrainingState& st = ck.state;
  st.model = ModelState::zeros(header.at("encoder").get<EncoderConfig>());
  for (auto& t : st.model.tensors) {
    auto it = arrays.find(t.name);
    if (it == arrays.end() || it->second.size() != t.data.size()) throw fail("missing or misshapen tensor " + t.name);
    t.data = std::move(it->second);
  }
  ck.has_optimizer = header.at("has_optimizer").get<bool>();
  st.step = header.at("step").get<std::size_t>();
  st.lr = header.at("lr").get<double>();
  st.finetune_stage = header.at("finetune_stage").get<bool>();
  st.schedule = PlateauSchedule::from_json(header.at("schedule"));
  st.adam = AdamState::zeros_like(st.model);
  st.adam.t = header.at("adam_t").get<std::uint64_t>();
  if (ck.has_optimizer) {
    for (std::size_t k = 0; k < st.model.tensors.size(); ++k) {
      const auto& name = st.model.tensors[k].name;
      auto m = arrays.find("adam.m." + name), v = arrays.find("adam.v." + name);
      if (m == arrays.end() || v == arrays.end()) throw fail("missing optimizer moments for " + name);
      st.adam.m[k] = std::move(m->second);
      st.adam.v[k] = std::move(v->second);
    }
  }
  ck.metadata = header.value("metadata", nlohmann::json::object());
  return ck;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint", "file_hash", "cannot open " + path.string());
  Fnv1a h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

}  // namespace vocalsim
