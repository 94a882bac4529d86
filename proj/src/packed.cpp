#include "babyhgrn/packed.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"

namespace babyhgrn {

namespace {
constexpr char kMagic[4] = {'B', 'H', 'P', 'K'};
}

std::span<const std::uint32_t> PackedDataset::chunk(std::size_t i) const {
  require(i < chunk_count(), ErrorKind::usage, "chunk index out of range");
  return std::span<const std::uint32_t>(tokens).subspan(i * chunk_len, chunk_len);
}

std::vector<TokenId> concatenate_documents(const std::vector<std::vector<TokenId>>& documents,
                                           TokenId eos) {
  std::vector<TokenId> stream;
  for (std::size_t d = 0; d < documents.size(); ++d) {
    if (d > 0) stream.push_back(eos);
    stream.insert(stream.end(), documents[d].begin(), documents[d].end());
  }
  return stream;
}

PackedDataset pack_tokens(std::span<const TokenId> stream, std::size_t vocab_size,
                          std::size_t chunk_len) {
  require(chunk_len >= 2, ErrorKind::config, "chunk_len must be at least 2");
  require(!stream.empty(), ErrorKind::plan, "cannot pack an empty corpus");
  require(vocab_size > 0 && vocab_size <= UINT32_MAX, ErrorKind::config, "invalid vocab_size");
  const std::size_t chunks = stream.size() / chunk_len;
  require(chunks > 0, ErrorKind::plan,
          "corpus of " + std::to_string(stream.size()) + " tokens is shorter than one chunk of " +
              std::to_string(chunk_len));
  PackedDataset out;
  out.vocab_size = static_cast<std::uint32_t>(vocab_size);
  out.chunk_len = static_cast<std::uint32_t>(chunk_len);
  out.tokens.reserve(chunks * chunk_len);
  for (std::size_t i = 0; i < chunks * chunk_len; ++i) {
    const TokenId id = stream[i];
    require(id >= 0 && static_cast<std::size_t>(id) < vocab_size, ErrorKind::data,
            "token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab_size));
    out.tokens.push_back(static_cast<std::uint32_t>(id));
  }
  out.dropped_tokens = stream.size() - chunks * chunk_len;
  return out;
}

PackedDataset pack(std::span<const std::string> documents, const TextEncoder& encoder,
                   std::size_t chunk_len) {
  require(!documents.empty(), ErrorKind::plan, "cannot pack an empty corpus");
  std::vector<std::vector<TokenId>> encoded;
  encoded.reserve(documents.size());
  for (const auto& doc : documents) encoded.push_back(encoder.encode(doc));
  const auto stream = concatenate_documents(encoded, encoder.specials().eos);
  return pack_tokens(stream, encoder.vocab_size(), chunk_len);
}

void write_packed(std::ostream& out, const PackedDataset& data) {
  out.write(kMagic, 4);
  io::put_le<std::uint32_t>(out, PackedDataset::kVersion);
  io::put_le<std::uint32_t>(out, data.vocab_size);
  io::put_le<std::uint32_t>(out, data.chunk_len);
  io::put_le<std::uint64_t>(out, data.chunk_count());
  for (auto id : data.tokens) io::put_le<std::uint32_t>(out, id);
}

PackedDataset read_packed(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
    fail(ErrorKind::data, "not a packed dataset (bad magic)");
  }
  const auto version = io::get_le<std::uint32_t>(in, "packed version");
  require(version == PackedDataset::kVersion, ErrorKind::data,
          "unsupported packed dataset version " + std::to_string(version));
  PackedDataset data;
  data.vocab_size = io::get_le<std::uint32_t>(in, "vocab_size");
  data.chunk_len = io::get_le<std::uint32_t>(in, "chunk_len");
  const auto chunks = io::get_le<std::uint64_t>(in, "chunk_count");
  require(data.chunk_len >= 2, ErrorKind::data, "packed dataset has chunk_len < 2");
  data.tokens.resize(chunks * data.chunk_len);
  for (auto& id : data.tokens) {
    id = io::get_le<std::uint32_t>(in, "token ids");
    require(id < data.vocab_size, ErrorKind::data, "packed token id outside vocabulary");
  }
  return data;
}

void save_packed(const std::filesystem::path& path, const PackedDataset& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::ingestion, "cannot write " + path.string());
  write_packed(out, data);
}

PackedDataset load_packed(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::ingestion, "cannot open packed dataset " + path.string());
  return read_packed(in);
}

std::string packed_bytes(const PackedDataset& data) {
  std::ostringstream out(std::ios::binary);
  write_packed(out, data);
  return out.str();
}

}  // namespace babyhgrn
