#include "intent/network.hpp"

#include <cmath>
#include <cstring>

#include "intent/errors.hpp"
#include "intent/ops.hpp"
#include "intent/rng.hpp"

namespace intent {

void NetConfig::validate() const {
  if (in_channels < 1) throw ConfigError("NetConfig: in_channels must be >= 1");
  if (base_width < 2) throw ConfigError("NetConfig: base_width must be >= 2");
  if (depth < 1 || depth > 8) throw ConfigError("NetConfig: depth must be in [1, 8]");
  if (kernel != 3) throw ConfigError("NetConfig: only kernel 3 is supported");
}

void StatMode::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("StatMode: lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
}

AffineParams Network::affine() const {
  AffineParams a;
  a.reserve(bns.size());
  for (const BnLayer& bn : bns) a.push_back({bn.gamma, bn.beta});
  return a;
}

void Network::set_affine(const AffineParams& a) {
  if (a.size() != bns.size()) throw ShapeError("set_affine: layer count mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    require_same_shape(a[i].gamma, bns[i].gamma, "set_affine gamma");
    require_same_shape(a[i].beta, bns[i].beta, "set_affine beta");
    bns[i].gamma = a[i].gamma;
    bns[i].beta = a[i].beta;
  }
}

std::size_t Network::affine_size() const {
  std::size_t n = 0;
  for (const BnLayer& bn : bns) n += bn.gamma.size() + bn.beta.size();
  return n;
}

namespace {

class Builder {
 public:
  Builder(Network& net, std::uint64_t seed) : net_(net), seed_(seed) {}

  void conv(const std::string& name, int cin, int cout, int k) {
    ConvLayer layer{name, Tensor({cout, cin, k, k}), Tensor({cout}), 1, (k - 1) / 2};
    Rng rng(seed_, net_.convs.size());
    const double stddev = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
    for (float& w : layer.weight.values()) w = static_cast<float>(stddev * rng.normal());
    net_.order.push_back({LayerKind::Conv, static_cast<int>(net_.convs.size())});
    net_.convs.push_back(std::move(layer));
  }

  void bn(const std::string& name, int c) {
    BnLayer layer{name, Tensor({c}, 1.0f), Tensor({c}, 0.0f),
                  BnStats{std::vector<float>(c, 0.0f), std::vector<float>(c, 1.0f)}};
    net_.order.push_back({LayerKind::BatchNorm, static_cast<int>(net_.bns.size())});
    net_.bns.push_back(std::move(layer));
  }

  void conv_bn(const std::string& prefix, int cin, int cout) {
    conv(prefix + ".conv", cin, cout, 3);
    bn(prefix + ".bn", cout);
  }

 private:
  Network& net_;
  std::uint64_t seed_;
};

int level_width(const NetConfig& c, int level) { return c.base_width << level; }

}  // namespace

Network build(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  Network net;
  net.config = config;
  Builder b(net, seed);
  int cin = config.in_channels;
  for (int l = 0; l < config.depth; ++l) {
    const int w = level_width(config, l);
    b.conv_bn("enc" + std::to_string(l) + ".block1", cin, w);
    b.conv_bn("enc" + std::to_string(l) + ".block2", w, w);
    cin = w;
  }
  const int mid = level_width(config, config.depth);
  b.conv_bn("mid.block1", cin, mid);
  b.conv_bn("mid.block2", mid, mid);
  cin = mid;
  for (int l = config.depth - 1; l >= 0; --l) {
    const int w = level_width(config, l);
    b.conv_bn("dec" + std::to_string(l) + ".up", cin, w);
    b.conv_bn("dec" + std::to_string(l) + ".block1", 2 * w, w);
    b.conv_bn("dec" + std::to_string(l) + ".block2", w, w);
    cin = w;
  }
  b.conv("head.conv", cin, 1, 1);
  return net;
}

namespace {

class Runner {
 public:
  Runner(const Network& net, const ForwardOptions& opt, ForwardResult& res, GradTape& tape)
      : net_(net), opt_(opt), res_(res), tape_(tape) {
    const bool all = opt.grads == GradScope::All;
    const bool affine = opt.grads != GradScope::None;
    for (const ConvLayer& c : net.convs) {
      res.conv_weight.push_back(tape.leaf(c.weight, all));
      res.conv_bias.push_back(tape.leaf(c.bias, all));
    }
    const AffineParams* ov = opt.affine_override;
    if (ov && ov->size() != net.bns.size()) throw ShapeError("forward: affine override layer count mismatch");
    for (std::size_t i = 0; i < net.bns.size(); ++i) {
      const Tensor& g = ov ? (*ov)[i].gamma : net.bns[i].gamma;
      const Tensor& b = ov ? (*ov)[i].beta : net.bns[i].beta;
      require_same_shape(g, net.bns[i].gamma, "forward: affine override gamma");
      require_same_shape(b, net.bns[i].beta, "forward: affine override beta");
      res.bn_gamma.push_back(tape.leaf(g, affine));
      res.bn_beta.push_back(tape.leaf(b, affine));
    }
    res.instant.resize(net.bns.size());
  }

  GradTape::NodeId conv(GradTape::NodeId x) {
    const int i = next_conv_++;
    const ConvLayer& c = net_.convs.at(static_cast<std::size_t>(i));
    return ops::conv2d(tape_, x, res_.conv_weight[i], res_.conv_bias[i], c.stride, c.padding);
  }

  GradTape::NodeId conv_bn_relu(GradTape::NodeId x) {
    x = conv(x);
    const int i = next_bn_++;
    x = ops::batchnorm(tape_, x, res_.bn_gamma[i], res_.bn_beta[i], net_.bns.at(static_cast<std::size_t>(i)).tracked,
                       opt_.mode.lambda, kBnEps, &res_.instant[i]);
    return ops::relu(tape_, x);
  }

 private:
  const Network& net_;
  const ForwardOptions& opt_;
  ForwardResult& res_;
  GradTape& tape_;
  int next_conv_ = 0;
  int next_bn_ = 0;
};

}  // namespace

ForwardResult forward(const Network& net, const Tensor& x, const ForwardOptions& options) {
  options.mode.validate();
  const NetConfig& cfg = net.config;
  require_rank(x, 4, "forward input");
  if (x.dim(1) != cfg.in_channels) {
    throw ShapeError("forward: input has " + std::to_string(x.dim(1)) + " channels, network expects " +
                     std::to_string(cfg.in_channels));
  }
  const int mult = cfg.spatial_multiple();
  if (x.dim(2) % mult != 0 || x.dim(3) % mult != 0) {
    throw ShapeError("forward: spatial size " + shape_str(x.shape()) + " not divisible by " + std::to_string(mult));
  }
  net.forward_counter().bump();

  ForwardResult res;
  auto tape = std::make_unique<GradTape>();
  Runner run(net, options, res, *tape);

  GradTape::NodeId h = tape->leaf(x, false);
  std::vector<GradTape::NodeId> skips;
  for (int l = 0; l < cfg.depth; ++l) {
    h = run.conv_bn_relu(h);
    h = run.conv_bn_relu(h);
    skips.push_back(h);
    h = ops::maxpool2(*tape, h);
  }
  h = run.conv_bn_relu(h);
  h = run.conv_bn_relu(h);
  for (int l = cfg.depth - 1; l >= 0; --l) {
    h = ops::upsample2(*tape, h);
    h = run.conv_bn_relu(h);
    h = ops::concat_channels(*tape, skips[static_cast<std::size_t>(l)], h);
    h = run.conv_bn_relu(h);
    h = run.conv_bn_relu(h);
  }
  h = run.conv(h);
  res.output = ops::sigmoid(*tape, h);
  res.probs = tape->value(res.output);
  if (options.grads != GradScope::None) res.tape = std::move(tape);
  return res;
}

AffineParams grad_entropy_wrt_affine(ForwardResult& record) {
  if (!record.tape) throw ContractError("grad_entropy_wrt_affine: forward was not recorded");
  GradTape& tape = *record.tape;
  tape.backward();
  AffineParams grads;
  grads.reserve(record.bn_gamma.size());
  for (std::size_t i = 0; i < record.bn_gamma.size(); ++i) {
    const Tensor& g = tape.grad(record.bn_gamma[i]);
    const Tensor& b = tape.grad(record.bn_beta[i]);
    grads.push_back({g.empty() ? Tensor(tape.value(record.bn_gamma[i]).shape()) : g,
                     b.empty() ? Tensor(tape.value(record.bn_beta[i]).shape()) : b});
  }
  return grads;
}

ProbMap predict(const Network& net, const Tensor& x, StatMode mode, const AffineParams* affine_override) {
  if (x.rank() != 4 || x.dim(0) != 1) throw ShapeError("predict: expected a single [1, C, H, W] image");
  ForwardOptions opt;
  opt.mode = mode;
  opt.affine_override = affine_override;
  return ProbMap::from_tensor(forward(net, x, opt).probs);
}

Tensor image_tensor(int height, int width, std::span<const float> pixels) {
  return Tensor({1, 1, height, width}, std::vector<float>(pixels.begin(), pixels.end()));
}

bool parameters_bit_equal(const Network& a, const Network& b) {
  if (!(a.config == b.config) || a.convs.size() != b.convs.size() || a.bns.size() != b.bns.size()) return false;
  auto vec_eq = [](const std::vector<float>& x, const std::vector<float>& y) {
    return x.size() == y.size() && (x.empty() || std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) == 0);
  };
  for (std::size_t i = 0; i < a.convs.size(); ++i) {
    if (!bit_equal(a.convs[i].weight, b.convs[i].weight) || !bit_equal(a.convs[i].bias, b.convs[i].bias)) return false;
  }
  for (std::size_t i = 0; i < a.bns.size(); ++i) {
    if (!bit_equal(a.bns[i].gamma, b.bns[i].gamma) || !bit_equal(a.bns[i].beta, b.bns[i].beta) ||
        !vec_eq(a.bns[i].tracked.mean, b.bns[i].tracked.mean) || !vec_eq(a.bns[i].tracked.var, b.bns[i].tracked.var)) {
      return false;
    }
  }
  return true;
}

}  // namespace intent
