#include "intent/dataset.hpp"

#include <fstream>
#include <set>

#include "intent/errors.hpp"
#include "intent/pgm.hpp"

namespace intent {

namespace fs = std::filesystem;

void DatasetConfig::validate() const {
  if (height <= 0 || width <= 0 || height % 8 || width % 8) {
    throw ConfigError("dataset: height and width must be positive multiples of 8");
  }
  if (domains.empty()) throw ConfigError("dataset: no domains");
  std::set<std::string> names;
  for (const DomainEntry& d : domains) {
    d.spec.validate();
    if (d.spec.name.find_first_of("/\\") != std::string::npos || d.spec.name == "." || d.spec.name == "..") {
      throw ConfigError("dataset: invalid domain name '" + d.spec.name + "'");
    }
    if (!names.insert(d.spec.name).second) throw ConfigError("dataset: duplicate domain '" + d.spec.name + "'");
    if (d.count <= 0) throw ConfigError("dataset: domain '" + d.spec.name + "' needs count > 0");
    if (d.first_index < 0) throw ConfigError("dataset: first_index must be >= 0");
  }
}

const DomainEntry& DatasetConfig::domain(const std::string& name) const {
  for (const DomainEntry& d : domains) {
    if (d.spec.name == name) return d;
  }
  throw ConfigError("dataset has no domain '" + name + "'");
}

DatasetConfig default_dataset_config() {
  DatasetConfig cfg;
  cfg.root = "data";
  cfg.seed = 20240601;
  DomainSpec source;
  source.name = "source";
  source.noise_sigma = 0.02;
  DomainSpec strong;
  strong.name = "bright_contrast";
  strong.intensity_bias = 0.25;
  strong.contrast = 1.8;
  strong.noise_sigma = 0.02;
  DomainSpec dark;
  dark.name = "dark_gamma_blur";
  dark.intensity_bias = -0.15;
  dark.contrast = 0.7;
  dark.gamma = 1.4;
  dark.blur_radius = 1;
  dark.noise_sigma = 0.04;
  cfg.domains = {{source, 200, 0}, {strong, 60, 100000}, {dark, 60, 100000}};
  return cfg;
}

nlohmann::ordered_json to_json(const DomainSpec& s) {
  return {{"name", s.name},         {"intensity_bias", s.intensity_bias}, {"contrast", s.contrast},
          {"gamma", s.gamma},       {"noise_sigma", s.noise_sigma},       {"blur_radius", s.blur_radius},
          {"texture_freq", s.texture_freq}};
}

DomainSpec domain_spec_from_json(const nlohmann::json& j) {
  DomainSpec s;
  try {
    s.name = j.at("name").get<std::string>();
    s.intensity_bias = j.value("intensity_bias", s.intensity_bias);
    s.contrast = j.value("contrast", s.contrast);
    s.gamma = j.value("gamma", s.gamma);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.blur_radius = j.value("blur_radius", s.blur_radius);
    s.texture_freq = j.value("texture_freq", s.texture_freq);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad domain spec: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::ordered_json to_json(const DatasetConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["height"] = cfg.height;
  j["width"] = cfg.width;
  j["domains"] = nlohmann::ordered_json::array();
  for (const DomainEntry& d : cfg.domains) {
    auto e = to_json(d.spec);
    e["count"] = d.count;
    e["first_index"] = d.first_index;
    j["domains"].push_back(std::move(e));
  }
  return j;
}

DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
  DatasetConfig cfg;
  try {
    cfg.seed = j.value("seed", cfg.seed);
    cfg.height = j.value("height", cfg.height);
    cfg.width = j.value("width", cfg.width);
    for (const auto& d : j.at("domains")) {
      DomainEntry e;
      e.spec = domain_spec_from_json(d);
      e.count = d.at("count").get<int>();
      e.first_index = d.value("first_index", 0);
      cfg.domains.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad dataset config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::vector<Sample> generate_domain(const DatasetConfig& cfg, const DomainEntry& entry) {
  return generate(entry.spec, entry.count, cfg.height, cfg.width, cfg.seed, entry.first_index);
}

namespace {

fs::path image_path(const fs::path& root, const std::string& domain, int index) {
  return root / domain / ("img_" + std::to_string(index) + ".pgm");
}
fs::path mask_path(const fs::path& root, const std::string& domain, int index) {
  return root / domain / ("msk_" + std::to_string(index) + ".pgm");
}

}  // namespace

void write_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.root);
  for (const DomainEntry& d : cfg.domains) {
    fs::create_directories(cfg.root / d.spec.name);
    for (const Sample& s : generate_domain(cfg, d)) {
      write_pgm_image(image_path(cfg.root, d.spec.name, s.index), s.height, s.width, s.image);
      write_pgm_mask(mask_path(cfg.root, d.spec.name, s.index), s.height, s.width, s.mask);
    }
  }
  std::ofstream out(cfg.root / "domains.json", std::ios::binary | std::ios::trunc);
  if (!out) throw PathError("cannot write " + (cfg.root / "domains.json").string());
  out << to_json(cfg).dump(2) << "\n";
}

DatasetConfig read_dataset_index(const fs::path& root) {
  const fs::path index = root / "domains.json";
  std::ifstream in(index);
  if (!in) throw PathError("dataset index not found: " + index.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(index.string() + ": " + e.what());
  }
  DatasetConfig cfg = dataset_config_from_json(j);
  cfg.root = root;
  return cfg;
}

std::vector<Sample> load_domain(const DatasetConfig& cfg, const std::string& name) {
  const DomainEntry& d = cfg.domain(name);
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(d.count));
  for (int i = 0; i < d.count; ++i) {
    Sample s;
    s.index = d.first_index + i;
    s.domain = name;
    s.image = read_pgm_image(image_path(cfg.root, name, s.index), &s.height, &s.width);
    int mh = 0, mw = 0;
    s.mask = read_pgm_mask(mask_path(cfg.root, name, s.index), &mh, &mw);
    if (s.height != cfg.height || s.width != cfg.width || mh != s.height || mw != s.width) {
      throw FormatError("sample " + std::to_string(s.index) + " of domain '" + name + "' has unexpected size");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace intent
