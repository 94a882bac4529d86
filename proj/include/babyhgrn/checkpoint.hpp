#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "babyhgrn/model.hpp"

namespace babyhgrn {

// Self-describing model container, little-endian throughout:
//   "BHCK" | u32 version | u32 entry count
//   per entry: u32 name length | UTF-8 name | u32 rank | u64 extent * rank | f32 * numel
//   u64 config length | ModelConfig as JSON
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const LanguageModel& model);
LanguageModel read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const LanguageModel& model);
LanguageModel load_checkpoint(const std::filesystem::path& path);

std::string checkpoint_bytes(const LanguageModel& model);

}  // namespace babyhgrn
