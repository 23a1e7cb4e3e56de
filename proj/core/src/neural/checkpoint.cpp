#include "specmon/neural/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "specmon/errors.hpp"

namespace specmon::nn {

namespace {

constexpr const char* kMagic = "specmon-checkpoint 1";

template <typename T>
void write_le(std::ostream& os, T v) {
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) throw ConfigError("checkpoint: truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

}  // namespace

std::string config_to_json(const NetworkConfig& c) {
  nlohmann::json j = {
      {"topology", to_string(c.topology)},
      {"n_bands", c.n_bands},
      {"n_classes", c.n_classes},
      {"conv_channels", c.conv_channels},
      {"conv_kernel", c.conv_kernel},
      {"hidden", c.hidden},
      {"lstm_kernel", c.lstm_kernel},
      {"dense_units", c.dense_units},
      {"dense_hidden", c.dense_hidden},
      {"q_head", c.q_head},
      {"p_head", c.p_head},
      {"dueling", c.dueling},
      {"init_seed", c.init_seed},
  };
  return j.dump();
}

NetworkConfig config_from_json(const std::string& text) {
  NetworkConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.topology = parse_topology(j.value("topology", std::string("conv")));
    c.n_bands = j.value("n_bands", c.n_bands);
    c.n_classes = j.value("n_classes", c.n_classes);
    c.conv_channels = j.value("conv_channels", c.conv_channels);
    c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
    c.hidden = j.value("hidden", c.hidden);
    c.lstm_kernel = j.value("lstm_kernel", c.lstm_kernel);
    c.dense_units = j.value("dense_units", c.dense_units);
    c.dense_hidden = j.value("dense_hidden", c.dense_hidden);
    c.q_head = j.value("q_head", c.q_head);
    c.p_head = j.value("p_head", c.p_head);
    c.dueling = j.value("dueling", c.dueling);
    c.init_seed = j.value("init_seed", c.init_seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network config: ") + e.what());
  }
  return c;
}

void save_checkpoint(std::ostream& os, const DanNet<float>& net) {
  os << kMagic << "\n" << config_to_json(net.config()) << "\n";
  const auto values = net.params().values();
  write_le<std::uint64_t>(os, values.size());
  for (float v : values) write_le<float>(os, v);
}

void save_checkpoint(const std::string& path, const DanNet<float>& net) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write checkpoint '" + path + "'");
  save_checkpoint(f, net);
}

DanNet<float> load_checkpoint(std::istream& is) {
  std::string magic, config;
  if (!std::getline(is, magic) || magic != kMagic) throw ConfigError("checkpoint: bad magic line");
  if (!std::getline(is, config)) throw ConfigError("checkpoint: missing config line");
  DanNet<float> net(config_from_json(config));
  const auto count = read_le<std::uint64_t>(is);
  if (count != net.parameter_count()) {
    throw ConfigError("checkpoint: parameter count " + std::to_string(count) + " does not match config (" +
                      std::to_string(net.parameter_count()) + ")");
  }
  auto values = net.params().values();
  for (auto& v : values) v = read_le<float>(is);
  return net;
}

DanNet<float> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(f);
}

}  // namespace specmon::nn
