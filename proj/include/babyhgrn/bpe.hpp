#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "babyhgrn/text_encoder.hpp"

namespace babyhgrn {

// Splits text into merge-isolated pieces: a run of whitespace followed by a
// run of non-whitespace ("a b" -> "a", " b"). Concatenating the pieces
// reproduces the input.
std::vector<std::string_view> pretokenize(std::string_view text);

// Byte-level BPE. Ids: 4 specials, then the 256 byte values, then one id per
// merge in rank order. Every byte string is encodable, so decode(encode(s))
// == s for arbitrary input.
class BpeVocabulary : public TextEncoder {
 public:
  static constexpr std::size_t kBaseSymbols = kSpecialCount + 256;
  using Merge = std::pair<TokenId, TokenId>;

  // Learns merges until `vocab_size` ids exist or no pair occurs twice; in
  // the latter case size() < requested_size().
  static BpeVocabulary train(std::span<const std::string> documents, std::size_t vocab_size);

  explicit BpeVocabulary(std::vector<Merge> merges, std::size_t requested_size = 0);

  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;
  std::size_t vocab_size() const override { return tokens_.size(); }

  std::size_t size() const { return tokens_.size(); }
  std::size_t requested_size() const { return requested_size_; }
  bool reached_requested_size() const { return size() >= requested_size_; }
  const std::vector<Merge>& merges() const { return merges_; }
  const std::string& token_bytes(TokenId id) const;
  static TokenId byte_id(unsigned char byte) { return static_cast<TokenId>(kSpecialCount + byte); }

  nlohmann::json to_json() const;
  static BpeVocabulary from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;

 private:
  void encode_piece(std::string_view piece, std::vector<TokenId>& out) const;

  std::vector<Merge> merges_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::uint64_t, std::size_t> rank_;
  std::size_t requested_size_ = 0;
};

}  // namespace babyhgrn
