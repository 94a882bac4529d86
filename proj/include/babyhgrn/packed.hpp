#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "babyhgrn/text_encoder.hpp"

namespace babyhgrn {

// Tokenized corpus cut into equal chunks. On disk, little-endian:
//   "BHPK" | u32 version | u32 vocab_size | u32 chunk_len | u64 chunk_count
//   | u32 id * chunk_count * chunk_len
struct PackedDataset {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t vocab_size = 0;
  std::uint32_t chunk_len = 0;
  std::vector<std::uint32_t> tokens;  // chunk_count * chunk_len
  std::size_t dropped_tokens = 0;     // tail shorter than one chunk, not stored

  std::size_t chunk_count() const { return chunk_len ? tokens.size() / chunk_len : 0; }
  std::span<const std::uint32_t> chunk(std::size_t i) const;
};

// Documents joined by a single eos id between neighbours.
std::vector<TokenId> concatenate_documents(const std::vector<std::vector<TokenId>>& documents,
                                           TokenId eos);

// Splits a token stream into floor(n / chunk_len) chunks, dropping the tail.
PackedDataset pack_tokens(std::span<const TokenId> stream, std::size_t vocab_size,
                          std::size_t chunk_len);

PackedDataset pack(std::span<const std::string> documents, const TextEncoder& encoder,
                   std::size_t chunk_len = 512);

void write_packed(std::ostream& out, const PackedDataset& data);
PackedDataset read_packed(std::istream& in);
void save_packed(const std::filesystem::path& path, const PackedDataset& data);
PackedDataset load_packed(const std::filesystem::path& path);
std::string packed_bytes(const PackedDataset& data);

}  // namespace babyhgrn
