#include "rdcm/checkpoint.hpp"

#include "rdcm/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace rdcm {

namespace {

using nlohmann::json;

void put_le(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffU);
  out.write(bytes, 8);
}

double get_le(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

json config_json(const ModelConfig& c) {
  return {{"text_mode", to_string(c.text_mode)},
          {"text_dim", c.text_dim},
          {"seq_len", c.seq_len},
          {"vis_dim", c.vis_dim},
          {"d", c.d},
          {"embedding_dim", c.textcnn.embedding_dim},
          {"kernel_widths", c.textcnn.kernel_widths},
          {"filters", c.textcnn.filters},
          {"hidden_activation", c.hidden_activation == Activation::Relu ? "relu" : "identity"}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.text_mode = parse_text_mode(j.at("text_mode").get<std::string>());
  c.text_dim = j.at("text_dim").get<std::size_t>();
  c.seq_len = j.at("seq_len").get<std::size_t>();
  c.vis_dim = j.at("vis_dim").get<std::size_t>();
  c.d = j.at("d").get<std::size_t>();
  c.textcnn.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.textcnn.kernel_widths = j.at("kernel_widths").get<std::vector<std::size_t>>();
  c.textcnn.filters = j.at("filters").get<std::size_t>();
  const auto act = j.at("hidden_activation").get<std::string>();
  if (act != "relu" && act != "identity") throw LoadError("params.json: unknown activation " + act);
  c.hidden_activation = act == "relu" ? Activation::Relu : Activation::Identity;
  return c;
}

}  // namespace

void save_model(const RdcmModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json index = json::array();
  std::size_t offset = 0;
  std::ofstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw LoadError("cannot write " + (dir / "params.bin").string());
  for (const auto& e : model.params.entries()) {
    index.push_back({{"name", e.name}, {"shape", e.value.shape()}, {"offset", offset}});
    for (double v : e.value.values()) put_le(bin, v);
    offset += e.value.size();
  }
  json doc = {{"format", "float64-le"}, {"count", offset}, {"config", config_json(model.config)}, {"params", index}};
  std::ofstream meta(dir / "params.json");
  if (!meta) throw LoadError("cannot write " + (dir / "params.json").string());
  meta << doc.dump(2) << '\n';
}

RdcmModel load_model(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "params.json");
  if (!meta) throw LoadError("cannot open " + (dir / "params.json").string());
  json doc;
  try {
    doc = json::parse(meta);
  } catch (const json::exception& e) {
    throw LoadError("params.json: " + std::string(e.what()));
  }
  RdcmModel model;
  try {
    model = RdcmModel::create(config_from_json(doc.at("config")), 0);
  } catch (const json::exception& e) {
    throw LoadError("params.json: " + std::string(e.what()));
  }

  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw LoadError("cannot open " + (dir / "params.bin").string());
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (raw.size() != 8 * model.params.scalar_count()) {
    throw LoadError("params.bin: expected " + std::to_string(8 * model.params.scalar_count()) + " bytes, found " +
                    std::to_string(raw.size()));
  }
  const json& index = doc.at("params");
  if (!index.is_array() || index.size() != model.params.size()) throw LoadError("params.json: parameter count mismatch");
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    ParamEntry& e = model.params.at(i);
    const json& item = index[i];
    if (item.at("name").get<std::string>() != e.name || item.at("shape").get<std::vector<std::size_t>>() != e.value.shape()) {
      throw LoadError("params.json: entry " + std::to_string(i) + " does not match " + e.name + " " +
                      e.value.shape_string());
    }
    const auto offset = item.at("offset").get<std::size_t>();
    std::span<double> dst = e.value.values();
    if (offset + dst.size() > raw.size() / 8) throw LoadError("params.json: offset out of range for " + e.name);
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = get_le(raw.data() + 8 * (offset + k));
  }
  return model;
}

}  // namespace rdcm
