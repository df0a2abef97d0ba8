#include "vsgno/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "vsgno/errors.hpp"

namespace vsgno {
namespace {

constexpr char kMagic[8] = {'V', 'S', 'G', 'N', 'O', 'C', 'K', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(const std::string& in, std::size_t offset) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  return v;
}

const char* gradient_name(SpikeGradient g) { return g == SpikeGradient::surrogate ? "surrogate" : "none"; }

}  // namespace

nlohmann::json config_to_json(const ModelConfig& c) {
  return {
      {"layers", c.layers},
      {"width", c.width},
      {"modes", c.modes},
      {"spike_steps", c.spike_steps},
      {"mode", to_string(c.mode)},
      {"spiking", to_string(c.spiking)},
      {"knn_k", c.knn_k},
      {"embed_dim", c.embed_dim},
      {"input_dim", c.input_dim},
      {"output_channels", c.output_channels},
      {"coord_dim", c.coord_dim},
      {"activation", to_string(c.activation)},
      {"embed_activation", to_string(c.embed_activation)},
      {"surrogate_slope", c.surrogate_slope},
      {"theta_init", c.theta_init},
      {"beta_init", c.beta_init},
      {"spike_gradient", gradient_name(c.spike_gradient)},
  };
}

ModelConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "layers") c.layers = value.get<std::size_t>();
      else if (key == "width") c.width = value.get<std::size_t>();
      else if (key == "modes") c.modes = value.get<std::size_t>();
      else if (key == "spike_steps") c.spike_steps = value.get<std::size_t>();
      else if (key == "mode") c.mode = parse_operator_mode(value.get<std::string>());
      else if (key == "spiking") c.spiking = parse_spiking_mode(value.get<std::string>());
      else if (key == "knn_k") c.knn_k = value.get<std::size_t>();
      else if (key == "embed_dim") c.embed_dim = value.get<std::size_t>();
      else if (key == "input_dim") c.input_dim = value.get<std::size_t>();
      else if (key == "output_channels") c.output_channels = value.get<std::size_t>();
      else if (key == "coord_dim") c.coord_dim = value.get<std::size_t>();
      else if (key == "activation") c.activation = parse_activation(value.get<std::string>());
      else if (key == "embed_activation") c.embed_activation = parse_activation(value.get<std::string>());
      else if (key == "surrogate_slope") c.surrogate_slope = value.get<double>();
      else if (key == "theta_init") c.theta_init = value.get<double>();
      else if (key == "beta_init") c.beta_init = value.get<double>();
      else if (key == "spike_gradient") {
        const auto s = value.get<std::string>();
        if (s == "surrogate") c.spike_gradient = SpikeGradient::surrogate;
        else if (s == "none") c.spike_gradient = SpikeGradient::none;
        else throw ConfigError("unknown spike_gradient '" + s + "'");
      } else {
        throw ConfigError("unknown model config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const VsGnoModel& model, const nlohmann::json& metadata,
                      bool echo_truth) {
  nlohmann::json header;
  header["format"] = "vsgno-checkpoint";
  header["version"] = 1;
  header["config"] = config_to_json(model.config());
  header["edge_count"] = model.edge_count();
  header["echo_truth"] = echo_truth;
  header["metadata"] = metadata;
  header["parameters"] = nlohmann::json::array();
  const auto params = model.named_parameters();
  for (const auto& [name, tensor] : params) {
    header["parameters"].push_back({{"name", name}, {"shape", tensor.shape()}});
  }
  const std::string header_text = header.dump();

  std::string bytes(kMagic, sizeof(kMagic));
  put_u64(bytes, header_text.size());
  bytes += header_text;
  for (const auto& [name, tensor] : params) {
    for (double v : tensor.values()) put_u64(bytes, std::bit_cast<std::uint64_t>(v));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(path.string() + ": not a checkpoint container");
  }
  const std::uint64_t header_len = get_u64(bytes, 8);
  if (header_len > bytes.size() - 16) throw FormatError(path.string() + ": header length exceeds file size");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": header is not valid JSON (" + e.what() + ")");
  }
  if (header.value("format", "") != "vsgno-checkpoint" || header.value("version", 0) != 1) {
    throw FormatError(path.string() + ": unsupported checkpoint format/version");
  }

  Checkpoint ck;
  try {
    const ModelConfig config = config_from_json(header.at("config"));
    ck.model = VsGnoModel::create(config, header.at("edge_count").get<std::size_t>(), 0);
    ck.metadata = header.value("metadata", nlohmann::json::object());
    ck.echo_truth = header.value("echo_truth", false);
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }

  auto params = ck.model.named_parameters();
  const auto& listed = header.at("parameters");
  if (listed.size() != params.size()) {
    throw FormatError(path.string() + ": header lists " + std::to_string(listed.size()) + " parameters, config implies " +
                      std::to_string(params.size()));
  }
  std::size_t offset = 16 + header_len;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, tensor] = params[i];
    if (listed[i].at("name").get<std::string>() != name ||
        listed[i].at("shape").get<ad::Shape>() != tensor.shape()) {
      throw FormatError(path.string() + ": parameter " + std::to_string(i) + " (" + name + ") does not match config");
    }
    auto values = tensor.mutable_values();
    if (offset + 8 * values.size() > bytes.size()) throw FormatError(path.string() + ": truncated at parameter " + name);
    for (double& v : values) {
      v = std::bit_cast<double>(get_u64(bytes, offset));
      offset += 8;
    }
  }
  if (offset != bytes.size()) throw FormatError(path.string() + ": trailing bytes after parameters");
  return ck;
}

}  // namespace vsgno
