#include "fan/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fan {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end || value.empty() || value[0] == '-') {
    throw ConfigError("config: invalid value '" + value + "' for " + key);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {"patch_size",    "batch_size",      "steps",
                                             "learning_rate", "seed",            "epsilon_aug",
                                             "latent_channels", "extractor_weights", "data_dir",
                                             "out_dir",       "patches_per_image"};
  return k;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "patch_size") patch_size = parse_number<std::size_t>(key, value);
  else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, value);
  else if (key == "steps") steps = parse_number<std::size_t>(key, value);
  else if (key == "learning_rate") learning_rate = parse_number<double>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "epsilon_aug") epsilon_aug = parse_number<double>(key, value);
  else if (key == "latent_channels") latent_channels = parse_number<std::size_t>(key, value);
  else if (key == "extractor_weights") extractor_weights = value;
  else if (key == "data_dir") data_dir = value;
  else if (key == "out_dir") out_dir = value;
  else if (key == "patches_per_image") patches_per_image = parse_number<std::size_t>(key, value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "patch_size=" << patch_size << "\n"
     << "batch_size=" << batch_size << "\n"
     << "steps=" << steps << "\n"
     << "learning_rate=" << format_double(learning_rate) << "\n"
     << "seed=" << seed << "\n"
     << "epsilon_aug=" << format_double(epsilon_aug) << "\n"
     << "latent_channels=" << latent_channels << "\n"
     << "extractor_weights=" << extractor_weights << "\n"
     << "data_dir=" << data_dir << "\n"
     << "out_dir=" << out_dir << "\n"
     << "patches_per_image=" << patches_per_image << "\n";
  return os.str();
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace fan
