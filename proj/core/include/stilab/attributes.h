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

// Descriptive attributes: ranked keywords pulled from a class description
// and folded into a prompt sentence of the form
//   "This is a video about <class> <kw1> <kw2> ... ."

#ifndef STILAB_ATTRIBUTES_H_
#define STILAB_ATTRIBUTES_H_

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stilab::attributes {

struct ClassDescription {
  std::string class_name;
  std::string description;
  std::string source_tag;
};

// Keyed by class name.
using DescriptionCorpus = std::map<std::string, ClassDescription>;

// Reads a JSON Lines file of {"class_name", "description", "source_tag"}
// records. Blank lines are skipped. Errors name the 1-based line.
DescriptionCorpus LoadDescriptionCorpus(const std::filesystem::path &path);
DescriptionCorpus ParseDescriptionCorpus(std::istream &in,
                                         std::string_view source_name);
void WriteDescriptionCorpus(const std::filesystem::path &path,
                            std::span<const ClassDescription> records);

class StopwordSet {
 public:
  StopwordSet() = default;

  // The list compiled from core/data/stopwords.txt.
  static const StopwordSet &Default();
  static StopwordSet Parse(std::string_view text);
  static StopwordSet Load(const std::filesystem::path &path);

  bool Contains(std::string_view word) const;
  std::size_t size() const { return words_.size(); }
  // Text of the leading "# stilab stopwords vN" line, if present.
  const std::string &version() const { return version_; }

 private:
  std::set<std::string, std::less<>> words_;
  std::string version_;
};

inline constexpr std::string_view kMockEndpoint = "mock";
inline constexpr std::string_view kEndpointEnvVar = "STILAB_EXTRACTOR_ENDPOINT";
inline constexpr std::string_view kDefaultPromptTemplate =
    "Extract 5-10 essential keywords from {description} that best describe "
    "the action {action name} in the paragraph. Focus on objects, motions, "
    "and contexts related to the action.";

struct ExtractionClientConfig {
  std::string endpoint = std::string(kMockEndpoint);
  double sampling_temperature = 0.7;
  int max_output_tokens = 256;
  std::string prompt_template = std::string(kDefaultPromptTemplate);
  double timeout_seconds = 5.0;

  bool is_mock() const { return endpoint == kMockEndpoint; }
  void Validate() const;
};

// Returns `config` with the endpoint replaced by $STILAB_EXTRACTOR_ENDPOINT
// when that variable is set and non-empty.
ExtractionClientConfig ApplyEnvironment(ExtractionClientConfig config);

std::string RenderPrompt(std::string_view prompt_template,
                         std::string_view class_name,
                         std::string_view description);

// Raw keyword list from the configured client, before filtering.
std::vector<std::string> ExtractKeywords(
    std::string_view class_name, std::string_view description,
    const ExtractionClientConfig &config,
    const StopwordSet &stopwords = StopwordSet::Default());

// Content words of `description` by descending frequency, ties broken by
// first occurrence.
std::vector<std::string> MockExtractKeywords(std::string_view description,
                                             const StopwordSet &stopwords);

// Splits a completion on newlines and commas, stripping list markers and
// quotes. Throws on empty or sentence-like output.
std::vector<std::string> ParseCompletion(std::string_view completion);

struct KeywordCandidate {
  std::string keyword;
  std::size_t rank = 0;  // 1-based

  bool operator==(const KeywordCandidate &) const = default;
};
using KeywordCandidateList = std::vector<KeywordCandidate>;

KeywordCandidateList NormalizeAndFilter(std::span<const std::string> raw,
                                        const StopwordSet &stopwords);

struct DescriptiveAttributeSet {
  std::string class_name;
  std::vector<std::string> keywords;
  std::size_t requested = 0;
  // Fewer candidates than requested.
  bool shortfall = false;
};

DescriptiveAttributeSet SelectDescriptiveAttributes(
    std::string_view class_name, const KeywordCandidateList &candidates,
    std::size_t num_attributes);

std::string ComposeAttributeSentence(const DescriptiveAttributeSet &attrs);

struct AttributeRecord {
  std::string class_name;
  std::vector<std::string> keywords;
  std::string extractor;  // "mock" or "endpoint"
  std::string prompt_sentence;
  bool shortfall = false;

  bool operator==(const AttributeRecord &) const = default;
};

// Runs extraction, filtering, selection and composition for one class.
AttributeRecord BuildAttributeRecord(const ClassDescription &description,
                                     std::size_t num_attributes,
                                     const ExtractionClientConfig &config,
                                     const StopwordSet &stopwords);

std::string SerializeAttributeRecord(const AttributeRecord &record);
AttributeRecord ParseAttributeRecord(std::string_view line);
void WriteAttributeRecords(const std::filesystem::path &path,
                           std::span<const AttributeRecord> records);
std::vector<AttributeRecord> ReadAttributeRecords(
    const std::filesystem::path &path);

}  // namespace stilab::attributes

#endif  // STILAB_ATTRIBUTES_H_
