// Copyright 2026 The stilab Authors.
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

#include <cstdio>
#include <cstring>
#include <sstream>
#include <string>

#include "stilab/embedding_io.h"
#include "stilab/error.h"
#include "stilab/trainer.h"

namespace stilab::trainer {
namespace {

std::string Num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string ReadLine(const std::vector<char> &bytes, std::size_t &offset) {
  std::size_t end = offset;
  while (end < bytes.size() && bytes[end] != '\n') ++end;
  if (end >= bytes.size()) {
    throw Error(ErrorCode::kTruncated, "checkpoint header ends early");
  }
  std::string line(bytes.data() + offset, end - offset);
  offset = end + 1;
  return line;
}

// "<tag> <value>"
std::string Field(const std::string &line, const std::string &tag) {
  if (line.rfind(tag + " ", 0) != 0) {
    throw Error(ErrorCode::kParse,
                "expected '" + tag + "', got '" + line + "'");
  }
  return line.substr(tag.size() + 1);
}

std::uint64_t ParseUnsigned(const std::string &text, const std::string &what) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception &) {
    used = 0;
  }
  if (used == 0 || used != text.size() || text[0] == '-') {
    throw Error(ErrorCode::kParse, "bad " + what + " '" + text + "'");
  }
  return v;
}

double ParseDouble(const std::string &text, const std::string &what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception &) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw Error(ErrorCode::kParse, "bad " + what + " '" + text + "'");
  }
  return v;
}

std::string ConfigLine(const TrainConfig &c) {
  std::ostringstream s;
  s << "config lr=" << Num(c.learning_rate) << " wd=" << Num(c.weight_decay)
    << " epochs=" << c.epochs << " batch=" << c.batch_size
    << " seed=" << c.seed << " spatial=" << (c.toggles.spatial ? 1 : 0)
    << " temporal=" << (c.toggles.temporal ? 1 : 0)
    << " n_a=" << c.num_attributes << " tau_sal=" << Num(c.tau_saliency)
    << " beta1=" << Num(c.beta1) << " beta2=" << Num(c.beta2)
    << " eps=" << Num(c.epsilon);
  return s.str();
}

TrainConfig ParseConfig(const std::string &line) {
  std::istringstream in(Field(line, "config"));
  TrainConfig c;
  std::string kv;
  std::size_t seen = 0;
  while (in >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kParse, "bad config entry '" + kv + "'");
    }
    const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    ++seen;
    if (key == "lr") c.learning_rate = ParseDouble(val, key);
    else if (key == "wd") c.weight_decay = ParseDouble(val, key);
    else if (key == "epochs") c.epochs = ParseUnsigned(val, key);
    else if (key == "batch") c.batch_size = ParseUnsigned(val, key);
    else if (key == "seed") c.seed = ParseUnsigned(val, key);
    else if (key == "spatial") c.toggles.spatial = ParseUnsigned(val, key) != 0;
    else if (key == "temporal") c.toggles.temporal = ParseUnsigned(val, key) != 0;
    else if (key == "n_a") c.num_attributes = ParseUnsigned(val, key);
    else if (key == "tau_sal") c.tau_saliency = ParseDouble(val, key);
    else if (key == "beta1") c.beta1 = ParseDouble(val, key);
    else if (key == "beta2") c.beta2 = ParseDouble(val, key);
    else if (key == "eps") c.epsilon = ParseDouble(val, key);
    else throw Error(ErrorCode::kParse, "unknown config key '" + key + "'");
  }
  if (seen != 12) {
    throw Error(ErrorCode::kParse, "config line has " + std::to_string(seen) +
                                       " of 12 entries");
  }
  return c;
}

}  // namespace

void SaveCheckpoint(const std::filesystem::path &path, const TrainState &state) {
  const auto &params = state.model.params;
  std::ostringstream header;
  header << kCheckpointMagic << "version " << kCheckpointVersion << '\n'
         << ConfigLine(state.config) << '\n'
         << "epoch " << state.epoch << '\n'
         << "step " << state.optimizer.step << '\n'
         << "params " << params.size() << '\n';
  std::size_t count = 0;
  for (const auto &name : params.names()) {
    const Tensor &t = params.Get(name);
    header << "param " << name << ' ' << t.rank();
    for (std::size_t d : t.shape()) header << ' ' << d;
    header << '\n';
    count += 3 * t.size();
  }
  count += state.loss_history.size();
  header << "history " << state.loss_history.size() << '\n'
         << "payload " << count << '\n';

  const std::string h = header.str();
  std::vector<char> bytes(h.begin(), h.end());
  for (const auto &name : params.names()) {
    auto m = state.optimizer.first_moment.find(name);
    auto v = state.optimizer.second_moment.find(name);
    if (m == state.optimizer.first_moment.end() ||
        v == state.optimizer.second_moment.end()) {
      throw Error(ErrorCode::kNotFound, "optimizer state lacks '" + name + "'");
    }
    io::AppendDoubles(bytes, params.Get(name).data());
    io::AppendDoubles(bytes, m->second.data());
    io::AppendDoubles(bytes, v->second.data());
  }
  io::AppendDoubles(bytes, state.loss_history);
  io::WriteFileBytes(path, bytes);
}

TrainState LoadCheckpoint(const std::filesystem::path &path) {
  const std::vector<char> bytes = io::ReadFileBytes(path);
  const std::size_t magic_len = sizeof(kCheckpointMagic) - 1;
  if (bytes.size() < magic_len ||
      std::memcmp(bytes.data(), kCheckpointMagic, magic_len) != 0) {
    throw Error(ErrorCode::kBadMagic, path.string());
  }
  std::size_t offset = magic_len;
  const std::string version = Field(ReadLine(bytes, offset), "version");
  if (version != std::to_string(kCheckpointVersion)) {
    throw Error(ErrorCode::kVersionMismatch,
                "checkpoint version " + version + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  TrainState state;
  state.config = ParseConfig(ReadLine(bytes, offset));
  state.epoch = ParseUnsigned(Field(ReadLine(bytes, offset), "epoch"), "epoch");
  state.optimizer.step =
      ParseUnsigned(Field(ReadLine(bytes, offset), "step"), "step");
  const std::size_t n =
      ParseUnsigned(Field(ReadLine(bytes, offset), "params"), "params");

  std::vector<std::pair<std::string, Shape>> layout;
  std::size_t expected = 0;
  for (std::size_t p = 0; p < n; ++p) {
    std::istringstream in(Field(ReadLine(bytes, offset), "param"));
    std::string name;
    std::size_t rank = 0;
    if (!(in >> name >> rank) || rank > 8) {
      throw Error(ErrorCode::kParse, "bad parameter line " + std::to_string(p));
    }
    Shape shape(rank);
    for (auto &d : shape) {
      if (!(in >> d)) {
        throw Error(ErrorCode::kParse, "bad dims for '" + name + "'");
      }
    }
    expected += 3 * NumElements(shape);
    layout.emplace_back(std::move(name), std::move(shape));
  }
  const std::size_t history =
      ParseUnsigned(Field(ReadLine(bytes, offset), "history"), "history");
  expected += history;
  const std::size_t payload =
      ParseUnsigned(Field(ReadLine(bytes, offset), "payload"), "payload");
  if (payload != expected) {
    throw Error(ErrorCode::kParse, "payload declares " +
                                       std::to_string(payload) +
                                       " values, layout needs " +
                                       std::to_string(expected));
  }

  for (const auto &[name, shape] : layout) {
    const std::size_t k = NumElements(shape);
    state.model.params.Register(name,
                                Tensor(shape, io::ReadDoubles(bytes, offset, k)));
    state.optimizer.first_moment.emplace(
        name, Tensor(shape, io::ReadDoubles(bytes, offset, k)));
    state.optimizer.second_moment.emplace(
        name, Tensor(shape, io::ReadDoubles(bytes, offset, k)));
  }
  state.loss_history = io::ReadDoubles(bytes, offset, history);
  if (offset != bytes.size()) {
    throw Error(ErrorCode::kParse, std::to_string(bytes.size() - offset) +
                                       " trailing bytes after the payload");
  }
  state.model.sti = state.config.Sti();
  return state;
}

}  // namespace stilab::trainer
