#include "babyhgrn/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "binary_io.hpp"

namespace babyhgrn {

namespace {
constexpr char kMagic[4] = {'B', 'H', 'C', 'K'};
}

void write_checkpoint(std::ostream& out, const LanguageModel& model) {
  out.write(kMagic, 4);
  io::put_le<std::uint32_t>(out, kCheckpointVersion);
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& [name, t] : model.parameters()) {
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto extent : t.shape()) io::put_le<std::uint64_t>(out, extent);
    for (real x : t.data()) io::put_f32(out, static_cast<float>(x));
  }
  const std::string config = to_json(model.config()).dump();
  io::put_le<std::uint64_t>(out, config.size());
  out.write(config.data(), static_cast<std::streamsize>(config.size()));
}

LanguageModel read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
    fail(ErrorKind::data, "not a checkpoint file (bad magic)");
  }
  const auto version = io::get_le<std::uint32_t>(in, "checkpoint version");
  require(version == kCheckpointVersion, ErrorKind::data,
          "unsupported checkpoint version " + std::to_string(version));
  const auto count = io::get_le<std::uint32_t>(in, "entry count");
  ParameterStore params;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = io::get_le<std::uint32_t>(in, "entry name length");
    require(name_len < (1u << 16), ErrorKind::data, "implausible parameter name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) fail(ErrorKind::data, "truncated parameter name");
    const auto rank = io::get_le<std::uint32_t>(in, "entry rank");
    require(rank <= 8, ErrorKind::data, "implausible tensor rank in checkpoint");
    Shape shape(rank);
    for (auto& extent : shape) extent = io::get_le<std::uint64_t>(in, "entry extent");
    std::vector<real> values(numel(shape));
    for (auto& x : values) x = static_cast<real>(io::get_f32(in, "entry payload"));
    params.add(std::move(name), Tensor::from(std::move(shape), std::move(values), true));
  }
  const auto config_len = io::get_le<std::uint64_t>(in, "config length");
  require(config_len < (1u << 24), ErrorKind::data, "implausible config trailer length");
  std::string config(config_len, '\0');
  if (!in.read(config.data(), static_cast<std::streamsize>(config_len))) {
    fail(ErrorKind::data, "truncated config trailer");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(config);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("checkpoint config is not JSON: ") + e.what());
  }
  return LanguageModel(model_config_from_json(j), std::move(params));
}

void save_checkpoint(const std::filesystem::path& path, const LanguageModel& model) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::ingestion, "cannot write " + path.string());
  write_checkpoint(out, model);
  require(static_cast<bool>(out), ErrorKind::ingestion, "write failed for " + path.string());
}

LanguageModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::ingestion, "cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

std::string checkpoint_bytes(const LanguageModel& model) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, model);
  return out.str();
}

}  // namespace babyhgrn
