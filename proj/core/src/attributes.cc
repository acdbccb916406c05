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

#include "stilab/attributes.h"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "stilab/encoders.h"
#include "stilab/error.h"

namespace stilab::internal {
extern const std::string_view kStopwordsText;
}  // namespace stilab::internal

namespace stilab::attributes {
namespace {

using json = nlohmann::json;

std::string Trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string Lowercase(std::string_view s) {
  std::string out(s);
  for (char &c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
  }
  return out;
}

std::string RequireString(const json &record, const char *key,
                          const std::string &where) {
  auto it = record.find(key);
  if (it == record.end() || !it->is_string()) {
    throw Error(ErrorCode::kParse,
                where + ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace

// ---------------------------------------------------------------------------
// Corpus

DescriptionCorpus ParseDescriptionCorpus(std::istream &in,
                                         std::string_view source_name) {
  DescriptionCorpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    const std::string where =
        std::string(source_name) + ":" + std::to_string(line_no);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error &e) {
      throw Error(ErrorCode::kParse, where + ": " + e.what());
    }
    if (!record.is_object()) {
      throw Error(ErrorCode::kParse, where + ": record is not an object");
    }
    ClassDescription d;
    d.class_name = RequireString(record, "class_name", where);
    d.description = RequireString(record, "description", where);
    if (record.contains("source_tag")) {
      d.source_tag = RequireString(record, "source_tag", where);
    }
    if (Trim(d.class_name).empty()) {
      throw Error(ErrorCode::kParse, where + ": empty class_name");
    }
    if (Trim(d.description).empty()) {
      throw Error(ErrorCode::kParse,
                  where + ": empty description for '" + d.class_name + "'");
    }
    if (corpus.count(d.class_name) > 0) {
      throw Error(ErrorCode::kDuplicate,
                  where + ": duplicate class '" + d.class_name + "'");
    }
    corpus.emplace(d.class_name, std::move(d));
  }
  return corpus;
}

DescriptionCorpus LoadDescriptionCorpus(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open corpus '" + path.string() + "'");
  }
  return ParseDescriptionCorpus(in, path.string());
}

void WriteDescriptionCorpus(const std::filesystem::path &path,
                            std::span<const ClassDescription> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  }
  for (const auto &r : records) {
    json record = {{"class_name", r.class_name},
                   {"description", r.description},
                   {"source_tag", r.source_tag}};
    out << record.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Stopwords

StopwordSet StopwordSet::Parse(std::string_view text) {
  StopwordSet set;
  std::istringstream in{std::string(text)};
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    const std::string t = Trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      if (first) set.version_ = Trim(std::string_view(t).substr(1));
      first = false;
      continue;
    }
    first = false;
    set.words_.insert(Lowercase(t));
  }
  return set;
}

StopwordSet StopwordSet::Load(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo,
                "cannot open stopword list '" + path.string() + "'");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return Parse(buffer.str());
}

const StopwordSet &StopwordSet::Default() {
  static const StopwordSet kDefault = Parse(internal::kStopwordsText);
  return kDefault;
}

bool StopwordSet::Contains(std::string_view word) const {
  return words_.find(word) != words_.end();
}

// ---------------------------------------------------------------------------
// Extraction

void ExtractionClientConfig::Validate() const {
  if (!(sampling_temperature >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "sampling_temperature must be >= 0");
  }
  if (max_output_tokens < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_output_tokens must be >= 1");
  }
  if (endpoint.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "extractor endpoint is empty");
  }
}

ExtractionClientConfig ApplyEnvironment(ExtractionClientConfig config) {
  const char *env = std::getenv(std::string(kEndpointEnvVar).c_str());
  if (env != nullptr && env[0] != '\0') config.endpoint = env;
  return config;
}

std::string RenderPrompt(std::string_view prompt_template,
                         std::string_view class_name,
                         std::string_view description) {
  std::string out(prompt_template);
  auto replace_all = [&out](std::string_view key, std::string_view value) {
    std::size_t pos = 0;
    while ((pos = out.find(key, pos)) != std::string::npos) {
      out.replace(pos, key.size(), value);
      pos += value.size();
    }
  };
  replace_all("{description}", description);
  replace_all("{action name}", class_name);
  return out;
}

std::vector<std::string> MockExtractKeywords(std::string_view description,
                                             const StopwordSet &stopwords) {
  struct Entry {
    std::string word;
    std::size_t count;
    std::size_t first;
  };
  std::vector<Entry> entries;
  std::unordered_map<std::string, std::size_t> slot;
  const auto tokens = encoders::Tokenize(description);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (stopwords.Contains(tokens[i])) continue;
    auto [it, inserted] = slot.emplace(tokens[i], entries.size());
    if (inserted) {
      entries.push_back({tokens[i], 1, i});
    } else {
      ++entries[it->second].count;
    }
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry &a, const Entry &b) {
                     if (a.count != b.count) return a.count > b.count;
                     return a.first < b.first;
                   });
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (auto &e : entries) out.push_back(std::move(e.word));
  return out;
}

std::vector<std::string> ParseCompletion(std::string_view completion) {
  std::vector<std::string> items;
  std::string current;
  auto flush = [&]() {
    std::string item = Trim(current);
    current.clear();
    // List markers: "-", "*", "1.", "2)".
    if (!item.empty() && (item[0] == '-' || item[0] == '*')) {
      item = Trim(std::string_view(item).substr(1));
    } else {
      std::size_t d = 0;
      while (d < item.size() && std::isdigit(static_cast<unsigned char>(item[d]))) ++d;
      if (d > 0 && d < item.size() && (item[d] == '.' || item[d] == ')')) {
        item = Trim(std::string_view(item).substr(d + 1));
      }
    }
    if (item.size() >= 2 && (item.front() == '"' || item.front() == '\'') &&
        item.back() == item.front()) {
      item = Trim(std::string_view(item).substr(1, item.size() - 2));
    }
    if (item.empty()) return;
    std::size_t words = 1;
    for (char c : item) {
      if (c == '.' || c == ';' || c == ':' || c == '?' || c == '!') {
        throw Error(ErrorCode::kParse,
                    "completion item is not a keyword: '" + item + "'");
      }
      if (c == ' ') ++words;
    }
    if (words > 4) {
      throw Error(ErrorCode::kParse,
                  "completion item is not a keyword: '" + item + "'");
    }
    items.push_back(std::move(item));
  };
  for (char c : completion) {
    if (c == '\n' || c == ',' || c == '\r') {
      flush();
    } else {
      current.push_back(c);
    }
  }
  flush();
  if (items.empty()) {
    throw Error(ErrorCode::kEmptyCompletion, "no keywords in completion");
  }
  return items;
}

// Defined in extraction_client.cc.
std::vector<std::string> ExtractViaEndpoint(std::string_view class_name,
                                            std::string_view description,
                                            const ExtractionClientConfig &config);

std::vector<std::string> ExtractKeywords(std::string_view class_name,
                                         std::string_view description,
                                         const ExtractionClientConfig &config,
                                         const StopwordSet &stopwords) {
  config.Validate();
  if (Trim(description).empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "empty description for '" + std::string(class_name) + "'");
  }
  if (config.is_mock()) return MockExtractKeywords(description, stopwords);
  return ExtractViaEndpoint(class_name, description, config);
}

// ---------------------------------------------------------------------------
// Filtering, selection, composition

KeywordCandidateList NormalizeAndFilter(std::span<const std::string> raw,
                                        const StopwordSet &stopwords) {
  KeywordCandidateList out;
  std::unordered_map<std::string, bool> seen;
  for (const auto &keyword : raw) {
    std::string k = Lowercase(Trim(keyword));
    if (k.empty() || stopwords.Contains(k)) continue;
    if (!seen.emplace(k, true).second) continue;
    out.push_back({std::move(k), out.size() + 1});
  }
  return out;
}

DescriptiveAttributeSet SelectDescriptiveAttributes(
    std::string_view class_name, const KeywordCandidateList &candidates,
    std::size_t num_attributes) {
  DescriptiveAttributeSet out;
  out.class_name = std::string(class_name);
  out.requested = num_attributes;
  const std::size_t take = std::min(num_attributes, candidates.size());
  out.keywords.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.keywords.push_back(candidates[i].keyword);
  }
  out.shortfall = candidates.size() < num_attributes;
  return out;
}

std::string ComposeAttributeSentence(const DescriptiveAttributeSet &attrs) {
  if (Trim(attrs.class_name).empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty class name");
  }
  std::string s = "This is a video about " + attrs.class_name;
  for (const auto &k : attrs.keywords) s += " " + k;
  return s + ".";
}

AttributeRecord BuildAttributeRecord(const ClassDescription &description,
                                     std::size_t num_attributes,
                                     const ExtractionClientConfig &config,
                                     const StopwordSet &stopwords) {
  try {
    const auto raw = ExtractKeywords(description.class_name,
                                     description.description, config,
                                     stopwords);
    const auto candidates = NormalizeAndFilter(raw, stopwords);
    const auto attrs = SelectDescriptiveAttributes(
        description.class_name, candidates, num_attributes);
    AttributeRecord record;
    record.class_name = description.class_name;
    record.keywords = attrs.keywords;
    record.extractor = config.is_mock() ? "mock" : "endpoint";
    record.prompt_sentence = ComposeAttributeSentence(attrs);
    record.shortfall = attrs.shortfall;
    return record;
  } catch (const Error &e) {
    throw Error(e.code(),
                "class '" + description.class_name + "': " + e.detail());
  }
}

std::string SerializeAttributeRecord(const AttributeRecord &record) {
  json j = {{"class", record.class_name},
            {"keywords", record.keywords},
            {"extractor", record.extractor},
            {"prompt_sentence", record.prompt_sentence},
            {"shortfall", record.shortfall}};
  return j.dump();
}

AttributeRecord ParseAttributeRecord(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error &e) {
    throw Error(ErrorCode::kParse, e.what());
  }
  try {
    AttributeRecord r;
    r.class_name = j.at("class").get<std::string>();
    r.keywords = j.at("keywords").get<std::vector<std::string>>();
    r.extractor = j.at("extractor").get<std::string>();
    r.prompt_sentence = j.at("prompt_sentence").get<std::string>();
    r.shortfall = j.at("shortfall").get<bool>();
    return r;
  } catch (const json::exception &e) {
    throw Error(ErrorCode::kParse, e.what());
  }
}

void WriteAttributeRecords(const std::filesystem::path &path,
                           std::span<const AttributeRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  for (const auto &r : records) out << SerializeAttributeRecord(r) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

std::vector<AttributeRecord> ReadAttributeRecords(
    const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::vector<AttributeRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    try {
      out.push_back(ParseAttributeRecord(line));
    } catch (const Error &e) {
      throw Error(e.code(),
                  path.string() + ":" + std::to_string(line_no) + ": " + e.detail());
    }
  }
  return out;
}

}  // namespace stilab::attributes
