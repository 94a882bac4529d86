#include "babyhgrn/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "babyhgrn/synthetic.hpp"

namespace babyhgrn {

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

std::uint64_t pair_key(TokenId a, TokenId b) {
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

struct PairIndex {
  std::unordered_map<std::uint64_t, long long> counts;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where;

  void add_word(const std::vector<TokenId>& word, long long freq, std::uint32_t index) {
    for (std::size_t i = 0; i + 1 < word.size(); ++i) {
      const auto key = pair_key(word[i], word[i + 1]);
      counts[key] += freq;
      where[key].push_back(index);
    }
  }

  void remove_word(const std::vector<TokenId>& word, long long freq) {
    for (std::size_t i = 0; i + 1 < word.size(); ++i) {
      auto it = counts.find(pair_key(word[i], word[i + 1]));
      it->second -= freq;
      if (it->second == 0) counts.erase(it);
    }
  }
};

void apply_merge(std::vector<TokenId>& word, TokenId a, TokenId b, TokenId merged) {
  std::size_t out = 0;
  for (std::size_t i = 0; i < word.size();) {
    if (i + 1 < word.size() && word[i] == a && word[i + 1] == b) {
      word[out++] = merged;
      i += 2;
    } else {
      word[out++] = word[i++];
    }
  }
  word.resize(out);
}

std::vector<std::string> base_tokens() {
  std::vector<std::string> tokens(kSpecialCount);
  for (int b = 0; b < 256; ++b) tokens.emplace_back(1, static_cast<char>(b));
  return tokens;
}

}  // namespace

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> pieces;
  std::size_t start = 0, i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    while (i < text.size() && !is_space(static_cast<unsigned char>(text[i]))) ++i;
    pieces.push_back(text.substr(start, i - start));
    start = i;
  }
  return pieces;
}

BpeVocabulary BpeVocabulary::train(std::span<const std::string> documents, std::size_t vocab_size) {
  require(vocab_size > kBaseSymbols, ErrorKind::config,
          "BPE vocab_size must exceed the " + std::to_string(kBaseSymbols) + " base symbols");

  std::map<std::string_view, long long> piece_counts;
  for (const auto& doc : documents) {
    for (auto piece : pretokenize(doc)) ++piece_counts[piece];
  }
  std::vector<std::vector<TokenId>> words;
  std::vector<long long> freq;
  words.reserve(piece_counts.size());
  for (const auto& [piece, count] : piece_counts) {
    std::vector<TokenId> w;
    w.reserve(piece.size());
    for (unsigned char c : piece) w.push_back(byte_id(c));
    words.push_back(std::move(w));
    freq.push_back(count);
  }

  PairIndex index;
  for (std::uint32_t i = 0; i < words.size(); ++i) index.add_word(words[i], freq[i], i);

  std::vector<Merge> merges;
  TokenId next_id = static_cast<TokenId>(kBaseSymbols);
  while (static_cast<std::size_t>(next_id) < vocab_size) {
    // Most frequent pair; ties go to the smallest (left, right) ids.
    std::uint64_t best = 0;
    long long best_count = 0;
    for (const auto& [key, count] : index.counts) {
      if (count > best_count || (count == best_count && key < best)) {
        best = key;
        best_count = count;
      }
    }
    if (best_count < 2) break;

    const TokenId a = static_cast<TokenId>(best >> 32);
    const TokenId b = static_cast<TokenId>(best & 0xFFFFFFFFu);
    merges.emplace_back(a, b);

    auto affected = std::move(index.where[best]);
    index.where.erase(best);
    std::sort(affected.begin(), affected.end());
    affected.erase(std::unique(affected.begin(), affected.end()), affected.end());
    for (auto w : affected) {
      auto& word = words[w];
      bool present = false;
      for (std::size_t i = 0; i + 1 < word.size() && !present; ++i) {
        present = word[i] == a && word[i + 1] == b;
      }
      if (!present) continue;
      index.remove_word(word, freq[w]);
      apply_merge(word, a, b, next_id);
      index.add_word(word, freq[w], w);
    }
    ++next_id;
  }
  return BpeVocabulary(std::move(merges), vocab_size);
}

BpeVocabulary::BpeVocabulary(std::vector<Merge> merges, std::size_t requested_size)
    : merges_(std::move(merges)), tokens_(base_tokens()) {
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    const auto [a, b] = merges_[r];
    const auto limit = static_cast<TokenId>(tokens_.size());
    if (a < static_cast<TokenId>(kSpecialCount) || b < static_cast<TokenId>(kSpecialCount) ||
        a >= limit || b >= limit) {
      fail(ErrorKind::data, "merge " + std::to_string(r) + " references an unknown token");
    }
    rank_.emplace(pair_key(a, b), r);
    tokens_.push_back(tokens_[a] + tokens_[b]);
  }
  requested_size_ = requested_size ? requested_size : tokens_.size();
}

const std::string& BpeVocabulary::token_bytes(TokenId id) const {
  require(id >= 0 && static_cast<std::size_t>(id) < tokens_.size(), ErrorKind::data,
          "token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[id];
}

void BpeVocabulary::encode_piece(std::string_view piece, std::vector<TokenId>& out) const {
  std::vector<TokenId> symbols;
  symbols.reserve(piece.size());
  for (unsigned char c : piece) symbols.push_back(byte_id(c));
  while (symbols.size() > 1) {
    std::size_t best_rank = SIZE_MAX;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = rank_.find(pair_key(symbols[i], symbols[i + 1]));
      if (it != rank_.end() && it->second < best_rank) best_rank = it->second;
    }
    if (best_rank == SIZE_MAX) break;
    const auto [a, b] = merges_[best_rank];
    apply_merge(symbols, a, b, static_cast<TokenId>(kBaseSymbols + best_rank));
  }
  out.insert(out.end(), symbols.begin(), symbols.end());
}

std::vector<TokenId> BpeVocabulary::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (auto piece : pretokenize(text)) encode_piece(piece, ids);
  return ids;
}

std::string BpeVocabulary::decode(std::span<const TokenId> ids) const {
  std::string text;
  for (TokenId id : ids) {
    if (id >= 0 && static_cast<std::size_t>(id) < kSpecialCount) continue;
    text += token_bytes(id);
  }
  return text;
}

nlohmann::json BpeVocabulary::to_json() const {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& [a, b] : merges_) merges.push_back({a, b});
  const SpecialIds s;
  return {{"type", "bpe"},
          {"version", 1},
          {"vocab_size", size()},
          {"requested_size", requested_size_},
          {"specials", {{"pad", s.pad}, {"bos", s.bos}, {"eos", s.eos}, {"unk", s.unk}}},
          {"merges", merges}};
}

BpeVocabulary BpeVocabulary::from_json(const nlohmann::json& j) {
  try {
    require(j.value("type", std::string("bpe")) == "bpe", ErrorKind::data,
            "vocabulary file is not a BPE vocabulary");
    std::vector<Merge> merges;
    for (const auto& m : j.at("merges")) merges.emplace_back(m.at(0).get<TokenId>(), m.at(1).get<TokenId>());
    const auto requested = j.value("requested_size", std::size_t{0});
    BpeVocabulary vocab(std::move(merges), requested);
    if (j.contains("vocab_size")) {
      require(j.at("vocab_size").get<std::size_t>() == vocab.size(), ErrorKind::data,
              "vocab_size field disagrees with the merge list");
    }
    return vocab;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("malformed vocabulary file: ") + e.what());
  }
}

void BpeVocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::ingestion, "cannot write " + path.string());
  out << to_json().dump(1) << '\n';
}

std::unique_ptr<TextEncoder> load_encoder(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::ingestion, "cannot open vocabulary " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, path.string() + " is not valid JSON: " + e.what());
  }
  const auto type = j.value("type", std::string("bpe"));
  if (type == "bpe") return std::make_unique<BpeVocabulary>(BpeVocabulary::from_json(j));
  if (type == "word") return std::make_unique<WordVocabulary>(WordVocabulary::from_json(j));
  fail(ErrorKind::data, "unknown vocabulary type '" + type + "'");
}

}  // namespace babyhgrn
