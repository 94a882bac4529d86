#include "babyhgrn/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "babyhgrn/errors.hpp"
#include "babyhgrn/random.hpp"

namespace babyhgrn {

std::vector<Document> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::ingestion, "cannot read corpus " + path.string());
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      docs.push_back({j.at("text").get<std::string>(), j.value("domain", std::string())});
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::ingestion,
           path.string() + ":" + std::to_string(line_no) + ": bad record: " + e.what());
    }
  }
  return docs;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Document>& docs) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::ingestion, "cannot write " + path.string());
  for (const auto& d : docs) {
    out << nlohmann::json{{"text", d.text}, {"domain", d.domain}}.dump() << '\n';
  }
}

std::size_t count_words(std::string_view text) {
  std::size_t words = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return words;
}

void SamplingPlan::validate() const {
  require(!domains.empty(), ErrorKind::plan, "sampling plan has no domains");
  double total = 0;
  for (const auto& d : domains) {
    require(d.ratio > 0.0 && d.ratio <= 1.0, ErrorKind::plan,
            "domain '" + d.name + "' ratio must lie in (0, 1]");
    total += d.ratio;
  }
  require(std::abs(total - 1.0) <= 1e-6, ErrorKind::plan,
          "domain ratios sum to " + std::to_string(total) + ", expected 1");
}

std::vector<std::size_t> SamplingPlan::target_words(std::size_t total_words) const {
  validate();
  std::vector<std::size_t> targets(domains.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < domains.size(); ++i) {
    const double exact = domains[i].ratio * double(total_words);
    targets[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += targets[i];
    remainders.emplace_back(exact - double(targets[i]), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < total_words && r < remainders.size(); ++r, ++assigned) {
    ++targets[remainders[r].second];
  }
  return targets;
}

SamplingPlan SamplingPlan::from_json(const nlohmann::json& j) {
  SamplingPlan plan;
  try {
    for (const auto& d : j.at("domains")) {
      plan.domains.push_back({d.at("name").get<std::string>(), d.at("ratio").get<double>(),
                              d.value("source", std::string())});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::plan, std::string("malformed sampling plan: ") + e.what());
  }
  plan.validate();
  return plan;
}

nlohmann::json SamplingPlan::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& d : domains) out.push_back({{"name", d.name}, {"ratio", d.ratio}, {"source", d.source}});
  return {{"domains", out}};
}

SamplingPlan SamplingPlan::from_counts(const std::vector<std::pair<std::string, std::size_t>>& counts) {
  double total = 0;
  for (const auto& [name, n] : counts) total += double(n);
  SamplingPlan plan;
  for (const auto& [name, n] : counts) plan.domains.push_back({name, double(n) / total, {}});
  return plan;
}

const std::vector<std::pair<std::string, std::size_t>>& mixture_10m_counts() {
  static const std::vector<std::pair<std::string, std::size_t>> counts = {
      {"Pile-CC", 4900155},          {"OpenWebText2", 3078791},   {"FreeLaw", 946382},
      {"USPTO Backgrounds", 261159}, {"Wikipedia (en)", 187094},  {"PubMed Central", 142698},
      {"PubMed Abstracts", 118427},  {"Others", 365188},
  };
  return counts;
}

const std::vector<std::pair<std::string, std::size_t>>& mixture_100m_counts() {
  static const std::vector<std::pair<std::string, std::size_t>> counts = {
      {"Pile-CC", 49214555},          {"OpenWebText2", 30344790},   {"FreeLaw", 9471436},
      {"USPTO Backgrounds", 2519390}, {"Wikipedia (en)", 1855709},  {"PubMed Central", 1449273},
      {"PubMed Abstracts", 1175838},  {"Others", 3968870},
  };
  return counts;
}

std::size_t Manifest::sampled_words() const {
  std::size_t n = 0;
  for (const auto& d : domains) n += d.sampled_words;
  return n;
}

double Manifest::actual_ratio(std::size_t i) const {
  const auto total = sampled_words();
  return total ? double(domains.at(i).sampled_words) / double(total) : 0.0;
}

nlohmann::json Manifest::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < domains.size(); ++i) {
    const auto& d = domains[i];
    rows.push_back({{"domain", d.name},
                    {"requested_ratio", d.requested_ratio},
                    {"target_words", d.target_words},
                    {"sampled_words", d.sampled_words},
                    {"sampled_documents", d.sampled_documents},
                    {"available_documents", d.available_documents},
                    {"actual_ratio", actual_ratio(i)},
                    {"exhausted", d.exhausted}});
  }
  return {{"seed", seed},
          {"requested_words", requested_words},
          {"sampled_words", sampled_words()},
          {"domains", rows}};
}

std::string Manifest::table() const {
  std::ostringstream out;
  std::size_t width = 7;
  for (const auto& d : domains) width = std::max(width, d.name.size());
  out << std::left << std::setw(int(width)) << "Dataset" << "  " << std::right << std::setw(12)
      << "Count" << "  " << std::setw(9) << "Ratio (%)" << '\n';
  for (std::size_t i = 0; i < domains.size(); ++i) {
    out << std::left << std::setw(int(width)) << domains[i].name << "  " << std::right
        << std::setw(12) << domains[i].sampled_words << "  " << std::setw(9) << std::fixed
        << std::setprecision(2) << 100.0 * actual_ratio(i);
    if (domains[i].exhausted) out << "  (exhausted)";
    out << '\n';
  }
  out << std::left << std::setw(int(width)) << "Total" << "  " << std::right << std::setw(12)
      << sampled_words() << '\n';
  return out.str();
}

DomainPools load_domain_pools(const SamplingPlan& plan) {
  DomainPools pools;
  std::map<std::string, std::vector<Document>> files;
  for (const auto& d : plan.domains) {
    require(!d.source.empty(), ErrorKind::plan, "domain '" + d.name + "' has no source path");
    auto it = files.find(d.source);
    if (it == files.end()) it = files.emplace(d.source, read_jsonl(d.source)).first;
    auto& pool = pools[d.name];
    for (const auto& doc : it->second) {
      if (doc.domain.empty() || doc.domain == d.name) pool.push_back(doc);
    }
  }
  return pools;
}

SampledCorpus sample_corpus(const SamplingPlan& plan, const DomainPools& pools,
                            std::size_t total_words, std::uint64_t seed) {
  plan.validate();
  require(total_words > 0, ErrorKind::plan, "total word budget must be positive");
  const auto targets = plan.target_words(total_words);

  SampledCorpus out;
  out.manifest.seed = seed;
  out.manifest.requested_words = total_words;
  Rng root(seed);
  for (std::size_t i = 0; i < plan.domains.size(); ++i) {
    const auto& spec = plan.domains[i];
    auto it = pools.find(spec.name);
    std::vector<std::size_t> candidates;
    if (it != pools.end()) {
      for (std::size_t n = 0; n < it->second.size(); ++n) {
        if (count_words(it->second[n].text) > 0) candidates.push_back(n);
      }
    }
    require(!candidates.empty(), ErrorKind::plan,
            "domain '" + spec.name + "' has no non-empty documents");

    Rng rng = root.fork(i);
    rng.shuffle(std::span<std::size_t>(candidates));
    DomainManifest m{spec.name, spec.ratio, targets[i], 0, 0, candidates.size(), false};
    std::size_t next = 0;
    while (m.sampled_words < m.target_words && next < candidates.size()) {
      const auto& doc = it->second[candidates[next++]];
      m.sampled_words += count_words(doc.text);
      ++m.sampled_documents;
      out.documents.push_back({doc.text, spec.name});
    }
    m.exhausted = m.sampled_words < m.target_words;
    out.manifest.domains.push_back(m);
  }
  return out;
}

SampledCorpus sample_corpus(const SamplingPlan& plan, std::size_t total_words, std::uint64_t seed) {
  plan.validate();
  return sample_corpus(plan, load_domain_pools(plan), total_words, seed);
}

}  // namespace babyhgrn
