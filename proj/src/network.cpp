#include "coactseg/network.hpp"

#include "coactseg/binary_io.hpp"
#include "coactseg/conv.hpp"
#include "coactseg/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace coact {

void SegNetConfig::validate() const {
  if (levels < 2) throw std::invalid_argument("network levels must be >= 2");
  if (levels > 8) throw std::invalid_argument("network levels must be <= 8");
  if (base_channels < 2) throw std::invalid_argument("base_channels must be >= 2");
  if (head_channels < 1) throw std::invalid_argument("head_channels must be >= 1");
  if (!std::isfinite(prelu_slope_init)) throw std::invalid_argument("prelu_slope_init must be finite");
}

namespace {

std::string level_name(const char* prefix, std::size_t i) { return prefix + std::to_string(i); }

constexpr Triple k3{3, 3, 3};
constexpr Triple k2{2, 2, 2};
constexpr Triple k1{1, 1, 1};
constexpr Triple unit{1, 1, 1};
constexpr Triple none{0, 0, 0};

}  // namespace

Tensor& SegNet::add_param(const std::string& name, Shape shape) {
  params_.push_back({name, Tensor::zeros(std::move(shape), true)});
  return params_.back().tensor;
}

SegNet::SegNet(const SegNetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.param_seed);
  const std::size_t C0 = cfg_.base_channels, H = cfg_.head_channels;
  auto channels = [&](std::size_t level) { return C0 << level; };

  // Uniform(-b, b) with b = 1/sqrt(fan_in) for weights and biases alike.
  auto conv = [&](const std::string& name, std::size_t out, std::size_t in, Triple k, bool transposed = false) {
    const double fan_in = static_cast<double>(in * k[0] * k[1] * k[2]);
    const double bound = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor& w = transposed ? add_param(name + ".weight", {in, out, k[0], k[1], k[2]})
                           : add_param(name + ".weight", {out, in, k[0], k[1], k[2]});
    for (auto& v : w.mutable_values()) v = u(rng);
    Tensor& b = add_param(name + ".bias", {out});
    for (auto& v : b.mutable_values()) v = u(rng);
  };
  auto act = [&](const std::string& name, std::size_t ch) {
    add_param(name + ".slope", {ch}).mutable_values().setConstant(cfg_.prelu_slope_init);
  };
  auto block = [&](const std::string& name, std::size_t in, std::size_t out) {
    conv(name + ".conv1", out, in, k3);
    act(name + ".act1", out);
    conv(name + ".conv2", out, out, k3);
    act(name + ".act2", out);
  };

  conv("input.conv", C0, 3, k3);
  act("input.act", C0);
  block("enc0", C0, C0);
  for (std::size_t i = 1; i < cfg_.levels; ++i) {
    conv(level_name("down", i) + ".conv", channels(i), channels(i - 1), k2);
    act(level_name("down", i) + ".act", channels(i));
    block(level_name("enc", i), channels(i), channels(i));
  }
  for (std::size_t i = cfg_.levels - 1; i >= 1; --i) {
    conv(level_name("up", i) + ".conv", channels(i - 1), channels(i), k2, true);
    act(level_name("up", i) + ".act", channels(i - 1));
    block(level_name("dec", i - 1), 2 * channels(i - 1), channels(i - 1));
  }
  for (const char* head : {"head1", "head2"}) {
    conv(std::string(head) + ".conv", H, C0, k3);
    act(std::string(head) + ".act", H);
    conv(std::string(head) + ".out", 1, H, k1);
  }
  conv("head3.conv", H, C0 + 2 * H, k3);
  act("head3.act", H);
  conv("head3.out", 1, H, k1);
}

SegNet::SegNet(const SegNet& other) : cfg_(other.cfg_) {
  params_.reserve(other.params_.size());
  for (const auto& [name, t] : other.params_) {
    params_.push_back({name, Tensor::from(t.shape(), t.values(), t.requires_grad())});
  }
}

SegNet& SegNet::operator=(const SegNet& other) {
  if (this != &other) *this = SegNet(other);
  return *this;
}

const Tensor& SegNet::parameter(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.tensor;
  throw std::out_of_range("no parameter named " + name);
}

std::vector<Tensor> SegNet::parameter_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.tensor);
  return out;
}

std::size_t SegNet::parameter_count() const { return parameter_count(""); }

std::size_t SegNet::parameter_count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.name.rfind(prefix, 0) == 0) n += p.tensor.numel();
  return n;
}

void SegNet::set_requires_grad(bool on) {
  for (auto& p : params_) p.tensor.set_requires_grad(on);
}

void SegNet::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Tensor SegNet::conv_block(const std::string& name, const Tensor& x, const Tensor& residual) const {
  Tensor h = conv3d(x, p(name + ".conv1.weight"), p(name + ".conv1.bias"), unit, unit);
  h = prelu(h, p(name + ".act1.slope"));
  h = conv3d(h, p(name + ".conv2.weight"), p(name + ".conv2.bias"), unit, unit);
  return prelu(add(h, residual), p(name + ".act2.slope"));
}

PredictionTriple SegNet::forward(const Tensor& input, const ForwardOptions& opts) const {
  if (input.rank() != 5 || input.dim(1) != 3)
    throw ShapeError("network input must be [N, 3, D, H, W], got " + to_string(input.shape()));
  const std::size_t m = cfg_.extent_multiple();
  for (std::size_t a = 2; a < 5; ++a)
    if (input.dim(a) % m != 0)
      throw ShapeError("spatial extent " + std::to_string(input.dim(a)) + " is not divisible by " +
                       std::to_string(m) + " (required by " + std::to_string(cfg_.levels) + " levels)");

  auto conv = [&](const std::string& name, const Tensor& x, Triple stride, Triple pad) {
    return conv3d(x, p(name + ".weight"), p(name + ".bias"), stride, pad);
  };

  Tensor x = prelu(conv("input.conv", input, unit, unit), p("input.act.slope"));
  std::vector<Tensor> skips;
  x = conv_block("enc0", x, x);
  skips.push_back(x);
  for (std::size_t i = 1; i < cfg_.levels; ++i) {
    x = prelu(conv(level_name("down", i) + ".conv", x, k2, none), p(level_name("down", i) + ".act.slope"));
    x = conv_block(level_name("enc", i), x, x);
    skips.push_back(x);
  }
  for (std::size_t i = cfg_.levels - 1; i >= 1; --i) {
    const std::string up = level_name("up", i);
    Tensor u = conv3d_transposed(x, p(up + ".conv.weight"), p(up + ".conv.bias"), k2, none);
    u = prelu(u, p(up + ".act.slope"));
    x = conv_block(level_name("dec", i - 1), concat({u, skips[i - 1]}, 1), u);
  }

  auto head_features = [&](const std::string& head, const Tensor& features) {
    return prelu(conv(head + ".conv", features, unit, unit), p(head + ".act.slope"));
  };
  auto head_out = [&](const std::string& head, const Tensor& hidden) {
    return sigmoid(conv(head + ".out", hidden, unit, none));
  };

  const Tensor h1 = head_features("head1", x);
  const Tensor h2 = head_features("head2", x);
  Tensor cross1 = h1, cross2 = h2;
  if (opts.sever_cross_head) {
    cross1 = Tensor::zeros(h1.shape());
    cross2 = Tensor::zeros(h2.shape());
  }
  const Tensor h3 = head_features("head3", concat({x, cross1, cross2}, 1));
  return {head_out("head1", h1), head_out("head2", h2), head_out("head3", h3)};
}

PredictionTriple SegNet::forward(const Tensor& baseline, const Tensor& follow_up, const Tensor& difference,
                                 const ForwardOptions& opts) const {
  if (baseline.shape() != follow_up.shape() || baseline.shape() != difference.shape())
    throw ShapeError("network inputs must share one shape");
  if (baseline.rank() != 5 || baseline.dim(1) != 1)
    throw ShapeError("each network input must be [N, 1, D, H, W], got " + to_string(baseline.shape()));
  return forward(concat({baseline, follow_up, difference}, 1), opts);
}

SegNet init_params(const SegNetConfig& cfg) { return SegNet(cfg); }

// ---------------------------------------------------------------------------

namespace {
constexpr char kCheckpointMagic[] = "COACTCKP";
}

void save_checkpoint(const std::filesystem::path& path, const SegNet& net, const CheckpointMeta& meta) {
  const auto& cfg = net.config();
  ByteWriter w;
  w.text(std::string_view(kCheckpointMagic, 8));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(cfg.levels));
  w.u32(static_cast<std::uint32_t>(cfg.base_channels));
  w.u32(static_cast<std::uint32_t>(cfg.head_channels));
  w.f64(cfg.prelu_slope_init);
  w.u64(cfg.param_seed);
  w.u64(meta.root_seed);
  w.u64(meta.iteration);
  w.u32(static_cast<std::uint32_t>(net.parameters().size()));
  for (const auto& [name, t] : net.parameters()) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.text(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u64(d);
    w.f64s(std::span<const double>(t.values().data(), t.numel()));
  }
  w.save(path);
}

SegNet load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  ByteReader r = ByteReader::open(path);
  if (r.remaining() < 8 || r.text(8) != std::string_view(kCheckpointMagic, 8))
    r.fail("bad magic (not a COACTCKP checkpoint)");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    r.fail("checkpoint version " + std::to_string(version) + " is not supported (expected " +
           std::to_string(kCheckpointVersion) + ")");
  SegNetConfig cfg;
  cfg.levels = r.u32();
  cfg.base_channels = r.u32();
  cfg.head_channels = r.u32();
  cfg.prelu_slope_init = r.f64();
  cfg.param_seed = r.u64();
  CheckpointMeta m;
  m.root_seed = r.u64();
  m.iteration = r.u64();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  SegNet net(cfg);
  const auto count = r.u32();
  if (count != net.parameters().size())
    r.fail("checkpoint holds " + std::to_string(count) + " tensors, architecture expects " +
           std::to_string(net.parameters().size()));
  for (auto& [name, t] : net.parameters()) {
    const auto len = r.u32();
    const std::string stored = r.text(len);
    if (stored != name) r.fail("expected tensor '" + name + "', found '" + stored + "'");
    const auto rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    if (shape != t.shape())
      r.fail("tensor '" + name + "' has shape " + to_string(shape) + ", expected " + to_string(t.shape()));
    r.f64s(std::span<double>(t.mutable_values().data(), t.numel()));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after the parameter table");
  if (meta) *meta = m;
  return net;
}

}  // namespace coact
