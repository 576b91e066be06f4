#include "zwocr/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "zwocr/error.hpp"

namespace zwocr {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::string encode_model_bin(const ModelParams& params) {
  const auto& values = params.values();
  std::string out(kModelMagic, sizeof kModelMagic);
  put_u32(out, kModelFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(values.size()));
  out.reserve(kModelHeaderBytes + 8 * values.size());
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
  return out;
}

ModelParams decode_model_bin(const std::string& bytes, const ArchDims& dims) {
  if (bytes.size() < kModelHeaderBytes || std::memcmp(bytes.data(), kModelMagic, 8) != 0) {
    throw IoError("model.bin: bad magic");
  }
  if (get_u32(bytes, 8) != kModelFormatVersion) {
    throw IoError("model.bin: unsupported format version " + std::to_string(get_u32(bytes, 8)));
  }
  ModelParams params(dims);
  auto& values = params.values();
  const std::uint32_t count = get_u32(bytes, 12);
  if (count != values.size() || bytes.size() != kModelHeaderBytes + 8 * values.size()) {
    throw IoError("model.bin: holds " + std::to_string(count) + " values, architecture needs " +
                  std::to_string(values.size()));
  }
  for (std::size_t k = 0; k < values.size(); ++k) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[kModelHeaderBytes + 8 * k + i]))
              << (8 * i);
    }
    values[k] = std::bit_cast<double>(bits);
  }
  return params;
}

nlohmann::json model_sidecar(const ModelParams& params, const TrainConfig& config) {
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& slot : params.layout()) {
    layout.push_back({{"name", slot.name}, {"rows", slot.rows}, {"cols", slot.cols}, {"offset", slot.offset}});
  }
  const auto& d = params.dims();
  return {{"format", "zwocr-model"},
          {"version", kModelFormatVersion},
          {"dims", {{"conv1", d.conv1}, {"conv2", d.conv2}, {"hidden", d.hidden}, {"classes", d.classes}}},
          {"alphabet",
           {{"visible", std::string(Alphabet::kVisible)},
            {"zero_width", "U+200D"},
            {"zero_width_index", Alphabet::kZeroWidthIndex},
            {"blank_index", Alphabet::kBlankIndex},
            {"classes", Alphabet::kClassCount}}},
          {"param_count", params.values().size()},
          {"layout", layout},
          {"train_config", to_json(config)}};
}

void save_model(const std::filesystem::path& dir, const ModelParams& params,
                const TrainConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "model.bin", encode_model_bin(params));
  write_file(dir / "model.json", model_sidecar(params, config).dump(2) + "\n");
}

LoadedModel load_model(const std::filesystem::path& dir) {
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(read_file(dir / "model.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("model.json: " + std::string(e.what()));
  }
  if (side.value("format", "") != "zwocr-model") throw IoError("model.json: not a zwocr model");
  if (side.at("alphabet").at("visible").get<std::string>() != Alphabet::kVisible) {
    throw IoError("model.json: alphabet differs from this build");
  }
  LoadedModel m;
  m.config = train_config_from_json(side.at("train_config"));
  ArchDims dims;
  const auto& d = side.at("dims");
  dims.conv1 = d.at("conv1");
  dims.conv2 = d.at("conv2");
  dims.hidden = d.at("hidden");
  dims.classes = d.at("classes");
  m.params = decode_model_bin(read_file(dir / "model.bin"), dims);
  return m;
}

}  // namespace zwocr
