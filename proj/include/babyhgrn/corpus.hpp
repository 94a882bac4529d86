#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace babyhgrn {

struct Document {
  std::string text;
  std::string domain;
};

// Line-delimited JSON, one {"text": ..., "domain": ...} object per line.
// Blank lines are skipped.
std::vector<Document> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<Document>& docs);

// Whitespace-delimited word count.
std::size_t count_words(std::string_view text);

struct DomainSpec {
  std::string name;
  double ratio = 0;     // fraction of total words, in (0, 1]
  std::string source;   // JSONL path; records are filtered by domain name
};

struct SamplingPlan {
  std::vector<DomainSpec> domains;

  // Throws ErrorKind::plan unless non-empty, every ratio is in (0, 1] and the
  // ratios sum to 1 within 1e-6.
  void validate() const;

  // Per-domain word budgets summing exactly to total_words (largest remainder).
  std::vector<std::size_t> target_words(std::size_t total_words) const;

  static SamplingPlan from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  // Domains with ratio = count / sum(counts).
  static SamplingPlan from_counts(const std::vector<std::pair<std::string, std::size_t>>& counts);
};

// Domain word counts of the 10M-word (and 100M-word) training mixtures.
const std::vector<std::pair<std::string, std::size_t>>& mixture_10m_counts();
const std::vector<std::pair<std::string, std::size_t>>& mixture_100m_counts();

struct DomainManifest {
  std::string name;
  double requested_ratio = 0;
  std::size_t target_words = 0;
  std::size_t sampled_words = 0;
  std::size_t sampled_documents = 0;
  std::size_t available_documents = 0;
  bool exhausted = false;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::size_t requested_words = 0;
  std::vector<DomainManifest> domains;

  std::size_t sampled_words() const;
  // Fraction of sampled words drawn from domain i.
  double actual_ratio(std::size_t i) const;
  nlohmann::json to_json() const;
  // Count / Ratio (%) table.
  std::string table() const;
};

struct SampledCorpus {
  std::vector<Document> documents;
  Manifest manifest;
};

// Documents keyed by domain name.
using DomainPools = std::map<std::string, std::vector<Document>>;

// Reads every domain's source file and keeps records whose domain matches
// (records without a domain are accepted).
DomainPools load_domain_pools(const SamplingPlan& plan);

// Draws whole documents uniformly without replacement from each domain until
// its word budget is met; the last document may overshoot. Domains running
// out first are flagged exhausted.
SampledCorpus sample_corpus(const SamplingPlan& plan, const DomainPools& pools,
                            std::size_t total_words, std::uint64_t seed);
SampledCorpus sample_corpus(const SamplingPlan& plan, std::size_t total_words, std::uint64_t seed);

}  // namespace babyhgrn
