#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "intent/synthdata.hpp"

namespace intent {

struct DomainEntry {
  DomainSpec spec;
  int count = 0;
  int first_index = 0;
};

// On disk: <root>/<domain>/img_<index>.pgm, <root>/<domain>/msk_<index>.pgm and
// <root>/domains.json with every DomainEntry plus the global seed and image size.
struct DatasetConfig {
  std::filesystem::path root;
  std::uint64_t seed = 0;
  int height = 64;
  int width = 64;
  std::vector<DomainEntry> domains;

  void validate() const;
  const DomainEntry& domain(const std::string& name) const;
};

// Default layout: 200 source images and two shifted target domains of 60 images each,
// indexed disjointly from the source.
DatasetConfig default_dataset_config();

nlohmann::ordered_json to_json(const DomainSpec& spec);
DomainSpec domain_spec_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const DatasetConfig& cfg);
// `root` is not part of domains.json; callers set it.
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

std::vector<Sample> generate_domain(const DatasetConfig& cfg, const DomainEntry& entry);

void write_dataset(const DatasetConfig& cfg);
DatasetConfig read_dataset_index(const std::filesystem::path& root);
// Reads every image/mask pair of a domain listed in domains.json.
std::vector<Sample> load_domain(const DatasetConfig& cfg, const std::string& name);

}  // namespace intent
