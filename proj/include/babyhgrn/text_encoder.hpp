#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "babyhgrn/model.hpp"

namespace babyhgrn {

// Reserved ids shared by every vocabulary.
struct SpecialIds {
  TokenId pad = 0;
  TokenId bos = 1;
  TokenId eos = 2;
  TokenId unk = 3;
};

inline constexpr std::size_t kSpecialCount = 4;

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::vector<TokenId> encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const TokenId> ids) const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual SpecialIds specials() const { return {}; }
};

// Reads a vocabulary file written by either BpeVocabulary or WordVocabulary.
std::unique_ptr<TextEncoder> load_encoder(const std::filesystem::path& path);

}  // namespace babyhgrn
