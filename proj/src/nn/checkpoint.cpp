#include "dsae/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace dsae::nn {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr char kMagic[5] = {'D', 'S', 'A', 'E', '1'};

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"input_channels", c.input_channels},
          {"latent_maps", c.latent_maps},
          {"input_size", c.input_size},
          {"upsample", to_string(c.upsample)},
          {"width_divisor", c.width_divisor},
          {"bn_momentum", c.bn_momentum},
          {"bn_epsilon", c.bn_epsilon},
          {"seed", c.seed},
          {"normalization", to_string(c.normalization)},
          {"net", c.net}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_channels = j.at("input_channels").get<int>();
  c.latent_maps = j.at("latent_maps").get<int>();
  c.input_size = j.at("input_size").get<int>();
  c.upsample = parse_upsampling(j.at("upsample").get<std::string>());
  c.width_divisor = j.at("width_divisor").get<int>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.bn_epsilon = j.at("bn_epsilon").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.normalization = parse_normalization(j.value("normalization", std::string("per_channel")));
  c.net = j.value("net", std::string{});
  return c;
}

}  // namespace

std::string serialize_checkpoint(const ModelParams& p) {
  nlohmann::json header;
  header["format"] = "DSAE1";
  header["config"] = config_to_json(p.config);
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : p.tensors) header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof(len));
  out += text;
  for (const auto& t : p.tensors)
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
  return out;
}

ModelParams parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw Error(ErrorKind::Parse, "not a DSAE1 checkpoint (magic mismatch)", 0);
  std::size_t pos = sizeof(kMagic);
  if (bytes.size() < pos + 8) throw Error(ErrorKind::Parse, "truncated checkpoint header length", pos);
  std::uint64_t len;
  std::memcpy(&len, bytes.data() + pos, 8);
  pos += 8;
  if (bytes.size() - pos < len) throw Error(ErrorKind::Parse, "truncated checkpoint header", pos);

  ModelParams p;
  try {
    const auto header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                              bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
    p.config = config_from_json(header.at("config"));
    for (const auto& t : header.at("tensors")) {
      NamedTensor nt;
      nt.name = t.at("name").get<std::string>();
      nt.shape = t.at("shape").get<std::vector<int>>();
      p.tensors.push_back(std::move(nt));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("bad checkpoint header: ") + e.what(), pos);
  } catch (const Error& e) {
    throw Error(ErrorKind::Parse, e.what(), pos);
  }
  pos += len;

  for (auto& t : p.tensors) {
    std::size_t count = 1;
    for (int d : t.shape) {
      if (d <= 0) throw Error(ErrorKind::Parse, "non-positive tensor dimension in '" + t.name + "'", pos);
      count *= static_cast<std::size_t>(d);
    }
    if (bytes.size() - pos < count * sizeof(float))
      throw Error(ErrorKind::Parse, "checkpoint data shorter than header shapes ('" + t.name + "')", pos);
    t.data.resize(count);
    std::memcpy(t.data.data(), bytes.data() + pos, count * sizeof(float));
    pos += count * sizeof(float);
  }
  if (pos != bytes.size()) throw Error(ErrorKind::Parse, "trailing bytes after checkpoint tensors", pos);
  return p;
}

void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  const std::string bytes = serialize_checkpoint(p);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace dsae::nn
