#include "intent/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>

#include "intent/errors.hpp"

namespace intent {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct TensorSlot {
  std::string name;
  Shape shape;
};

std::vector<TensorSlot> conv_slots(const ConvLayer& c) {
  return {{"weight", c.weight.shape()}, {"bias", c.bias.shape()}};
}

std::vector<TensorSlot> bn_slots(const BnLayer& b) {
  const int c = static_cast<int>(b.gamma.size());
  return {{"gamma", {c}}, {"beta", {c}}, {"running_mean", {c}}, {"running_var", {c}}};
}

ojson slots_json(const std::vector<TensorSlot>& slots) {
  ojson arr = ojson::array();
  for (const TensorSlot& s : slots) arr.push_back(ojson{{"name", s.name}, {"shape", s.shape}});
  return arr;
}

void put_floats(std::string& blob, std::span<const float> values) {
  for (float v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) blob.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
  }
}

std::vector<float> take_floats(const std::string& blob, std::size_t& offset, std::size_t count) {
  if (offset + 4 * count > blob.size()) throw CheckpointError("weights.bin is shorter than the manifest declares");
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[offset + 4 * i + b])) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  offset += 4 * count;
  return out;
}

ojson manifest_json(const Network& net) {
  ojson m;
  m["version"] = kCheckpointVersion;
  m["config"] = ojson{{"in_channels", net.config.in_channels},
                      {"base_width", net.config.base_width},
                      {"depth", net.config.depth},
                      {"kernel", net.config.kernel}};
  ojson layers = ojson::array();
  for (const LayerRef& ref : net.order) {
    if (ref.kind == LayerKind::Conv) {
      const ConvLayer& c = net.convs[static_cast<std::size_t>(ref.index)];
      layers.push_back(ojson{{"type", "conv2d"},
                             {"name", c.name},
                             {"in_channels", c.weight.dim(1)},
                             {"out_channels", c.weight.dim(0)},
                             {"kernel", c.weight.dim(2)},
                             {"stride", c.stride},
                             {"padding", c.padding},
                             {"tensors", slots_json(conv_slots(c))}});
    } else {
      const BnLayer& b = net.bns[static_cast<std::size_t>(ref.index)];
      layers.push_back(ojson{{"type", "batchnorm"},
                             {"name", b.name},
                             {"channels", b.gamma.size()},
                             {"eps", kBnEps},
                             {"tensors", slots_json(bn_slots(b))}});
    }
  }
  m["layers"] = std::move(layers);
  return m;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw PathError("cannot open " + p.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::size_t numel(const ojson& shape) {
  std::size_t n = 1;
  for (const auto& d : shape) {
    const long v = d.get<long>();
    if (v <= 0) throw CheckpointError("non-positive dimension in manifest");
    n *= static_cast<std::size_t>(v);
  }
  return n;
}

}  // namespace

std::string checkpoint_manifest(const Network& net) { return manifest_json(net).dump(2) + "\n"; }

void save_checkpoint(const Network& net, const fs::path& dir) {
  fs::create_directories(dir);
  std::string blob;
  for (const LayerRef& ref : net.order) {
    if (ref.kind == LayerKind::Conv) {
      const ConvLayer& c = net.convs[static_cast<std::size_t>(ref.index)];
      put_floats(blob, c.weight.values());
      put_floats(blob, c.bias.values());
    } else {
      const BnLayer& b = net.bns[static_cast<std::size_t>(ref.index)];
      put_floats(blob, b.gamma.values());
      put_floats(blob, b.beta.values());
      put_floats(blob, b.tracked.mean);
      put_floats(blob, b.tracked.var);
    }
  }
  {
    std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw PathError("cannot write " + (dir / "manifest.json").string());
    out << checkpoint_manifest(net);
  }
  std::ofstream out(dir / "weights.bin", std::ios::binary | std::ios::trunc);
  if (!out) throw PathError("cannot write " + (dir / "weights.bin").string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

Network load_checkpoint(const fs::path& dir) {
  const std::string manifest_text = read_file(dir / "manifest.json");
  const std::string blob = read_file(dir / "weights.bin");
  ojson m;
  try {
    m = ojson::parse(manifest_text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("manifest.json is not valid JSON: ") + e.what());
  }
  try {
    if (m.at("version").get<std::string>() != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + m.at("version").dump());
    }
    const ojson& c = m.at("config");
    NetConfig cfg{c.at("in_channels").get<int>(), c.at("base_width").get<int>(), c.at("depth").get<int>(),
                  c.at("kernel").get<int>()};
    try {
      cfg.validate();
    } catch (const ConfigError& e) {
      throw CheckpointError(std::string("invalid config in manifest: ") + e.what());
    }
    Network net = build(cfg, 0);
    const ojson& layers = m.at("layers");

    std::size_t declared = 0;
    for (const ojson& layer : layers) {
      const std::string type = layer.at("type").get<std::string>();
      if (type != "conv2d" && type != "batchnorm") throw CheckpointError("unknown layer type '" + type + "'");
      for (const ojson& t : layer.at("tensors")) declared += numel(t.at("shape"));
    }
    if (declared * 4 != blob.size()) {
      throw CheckpointError("weights.bin holds " + std::to_string(blob.size()) + " bytes, manifest declares " +
                            std::to_string(declared * 4));
    }
    if (layers.size() != net.order.size()) throw CheckpointError("manifest layer count does not match config");

    std::size_t offset = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const ojson& layer = layers[i];
      const LayerRef ref = net.order[i];
      const std::string type = layer.at("type").get<std::string>();
      const std::vector<TensorSlot> slots =
          ref.kind == LayerKind::Conv ? conv_slots(net.convs[static_cast<std::size_t>(ref.index)])
                                      : bn_slots(net.bns[static_cast<std::size_t>(ref.index)]);
      if ((ref.kind == LayerKind::Conv) != (type == "conv2d")) {
        throw CheckpointError("layer " + std::to_string(i) + " type does not match the topology");
      }
      const ojson& tensors = layer.at("tensors");
      if (tensors.size() != slots.size()) throw CheckpointError("layer " + std::to_string(i) + " tensor count mismatch");
      std::vector<std::vector<float>> data;
      for (std::size_t s = 0; s < slots.size(); ++s) {
        if (tensors[s].at("name").get<std::string>() != slots[s].name ||
            tensors[s].at("shape").get<Shape>() != slots[s].shape) {
          throw CheckpointError("layer " + layer.at("name").get<std::string>() + " tensor '" + slots[s].name +
                                "' does not match the topology");
        }
        data.push_back(take_floats(blob, offset, shape_numel(slots[s].shape)));
      }
      if (ref.kind == LayerKind::Conv) {
        ConvLayer& cl = net.convs[static_cast<std::size_t>(ref.index)];
        cl.name = layer.at("name").get<std::string>();
        cl.weight = Tensor(cl.weight.shape(), std::move(data[0]));
        cl.bias = Tensor(cl.bias.shape(), std::move(data[1]));
      } else {
        BnLayer& bl = net.bns[static_cast<std::size_t>(ref.index)];
        bl.name = layer.at("name").get<std::string>();
        bl.gamma = Tensor(bl.gamma.shape(), std::move(data[0]));
        bl.beta = Tensor(bl.beta.shape(), std::move(data[1]));
        bl.tracked.mean = std::move(data[2]);
        bl.tracked.var = std::move(data[3]);
        try {
          bl.tracked.validate();
        } catch (const ShapeError& e) {
          throw CheckpointError("layer " + bl.name + ": " + e.what());
        }
      }
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed manifest: ") + e.what());
  }
}

}  // namespace intent
