#include "gw/model/unet.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <sstream>

#include "gw/core/error.hpp"

namespace gw::model {

using nn::ActivationKind;
using nn::Shape4;
using nn::Tensor4;

std::string variant_name(Variant v) {
  return v == Variant::unet ? "unet" : "attention_unet";
}

Variant parse_variant(const std::string& s) {
  if (s == "unet") return Variant::unet;
  if (s == "attention_unet" || s == "attention-unet") return Variant::attention_unet;
  throw ConfigError("unknown model variant '" + s + "'");
}

int ModelConfig::inter_channels(int gate) const {
  if (!attention_inter_channels.empty()) return attention_inter_channels.at(gate);
  return encoder_widths[levels() - 2 - gate];
}

void ModelConfig::validate() const {
  if (in_channels < 1 || out_channels < 1) throw ConfigError("channel counts must be >= 1");
  if (levels() < 2) throw ConfigError("need at least two encoder levels");
  for (std::size_t i = 0; i < encoder_widths.size(); ++i) {
    const int w = encoder_widths[i];
    if (w < 1 || (w & (w - 1)) != 0) throw ConfigError("encoder widths must be powers of two");
    if (i > 0 && w <= encoder_widths[i - 1]) throw ConfigError("encoder widths must ascend");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1)");
  }
  if (!attention_inter_channels.empty()) {
    if (static_cast<int>(attention_inter_channels.size()) != levels() - 1) {
      throw ConfigError("attention_inter_channels needs one entry per gate");
    }
    for (int f : attention_inter_channels) {
      if (f < 1) throw ConfigError("attention widths must be >= 1");
    }
  }
}

void ModelConfig::validate_grid(const GridSpec& grid) const {
  const int d = divisor();
  if (grid.height < d || grid.width < d || grid.height % d != 0 || grid.width % d != 0) {
    throw ConfigError("grid " + std::to_string(grid.height) + "x" + std::to_string(grid.width) +
                      " not divisible by " + std::to_string(d));
  }
}

ModelConfig ModelConfig::with_widths_divided_by(int divisor) const {
  ModelConfig c = *this;
  for (int& w : c.encoder_widths) w = std::max(1, w / divisor);
  for (int& f : c.attention_inter_channels) f = std::max(1, f / divisor);
  return c;
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "variant=" << variant_name(variant) << "\n";
  os << "in_channels=" << in_channels << "\n";
  os << "out_channels=" << out_channels << "\n";
  os << "encoder_widths=";
  for (std::size_t i = 0; i < encoder_widths.size(); ++i) {
    os << (i ? "," : "") << encoder_widths[i];
  }
  os << "\n";
  os << "dropout_rate=" << dropout_rate << "\n";
  os << "leaky_slope=" << leaky_slope << "\n";
  os << "attention_inter_channels=";
  for (std::size_t i = 0; i < attention_inter_channels.size(); ++i) {
    os << (i ? "," : "") << attention_inter_channels[i];
  }
  os << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  auto ints = [](const std::string& v) {
    std::vector<int> out;
    std::istringstream is(v);
    std::string item;
    while (std::getline(is, item, ',')) {
      if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
  };
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  try {
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq);
      const std::string val = line.substr(eq + 1);
      if (key == "variant") c.variant = parse_variant(val);
      else if (key == "in_channels") c.in_channels = std::stoi(val);
      else if (key == "out_channels") c.out_channels = std::stoi(val);
      else if (key == "encoder_widths") c.encoder_widths = ints(val);
      else if (key == "dropout_rate") c.dropout_rate = std::stod(val);
      else if (key == "leaky_slope") c.leaky_slope = std::stod(val);
      else if (key == "attention_inter_channels") c.attention_inter_channels = ints(val);
    }
  } catch (const std::logic_error&) {
    throw ConfigError("malformed model config line '" + line + "'");
  }
  c.validate();
  return c;
}

const BlockParameters& ParameterTable::row(const std::string& block) const {
  for (const auto& r : rows) {
    if (r.block == block) return r;
  }
  throw ConfigError("no parameter block named '" + block + "'");
}

std::string ParameterTable::to_text() const {
  std::ostringstream os;
  os << std::left << std::setw(10) << "block" << std::right << std::setw(12) << "params"
     << std::setw(12) << "trainable" << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(10) << r.block << std::right << std::setw(12) << r.total
       << std::setw(12) << r.trainable << "\n";
  }
  os << "total=" << total << " trainable=" << trainable << " non_trainable=" << non_trainable
     << "\n";
  return os.str();
}

template <typename T>
UNet<T>::UNet(const ModelConfig& config, const GridSpec& grid, std::uint64_t seed)
    : config_(config), grid_(grid) {
  config_.validate();
  config_.validate_grid(grid_);
  const int levels = config_.levels();
  const auto& widths = config_.encoder_widths;
  std::mt19937_64 rng(seed);
  constexpr int k = 4, s = 2, p = 1;

  int cin = config_.in_channels;
  for (int i = 0; i < levels; ++i) {
    const std::string name = "down" + std::to_string(i + 1);
    DownBlock b;
    b.conv = nn::Conv2d<T>(name + ".conv", cin, widths[i], k, s, p, false);
    b.use_bn = i > 0;
    b.use_dropout = i > 0 && config_.dropout_rate > 0.0;
    if (b.use_bn) b.bn = nn::BatchNorm2d<T>(name + ".bn", widths[i]);
    b.dropout = nn::Dropout<T>(b.use_dropout ? config_.dropout_rate : 0.0);
    b.act = nn::Activation<T>(ActivationKind::leaky_relu, config_.leaky_slope);
    nn::he_uniform(b.conv.weight, cin * k * k, rng);
    down_.push_back(std::move(b));
    cin = widths[i];
  }

  // Decoder level i consumes `cur` (channels cur_c) and joins skip level
  // levels - 2 - i.
  int cur_c = widths[levels - 1];
  for (int i = 0; i < levels - 1; ++i) {
    const int skip_c = widths[levels - 2 - i];
    const int up_c = skip_c;
    const std::string idx = std::to_string(i + 1);
    if (config_.variant == Variant::attention_unet) {
      nn::AttentionGate<T> gate("gate" + idx, cur_c, skip_c, config_.inter_channels(i));
      nn::he_uniform(gate.w_x.weight, skip_c, rng);
      nn::he_uniform(gate.w_g.weight, cur_c, rng);
      nn::he_uniform(gate.psi.weight, gate.inter_channels, rng);
      gates_.push_back(std::move(gate));
    }
    UpBlock b;
    b.conv = nn::UpsampleConv2d<T>("up" + idx + ".conv", cur_c, up_c, 4, k, s, p);
    b.bn = nn::BatchNorm2d<T>("up" + idx + ".bn", up_c);
    b.use_dropout = i == 0 && config_.dropout_rate > 0.0;
    b.dropout = nn::Dropout<T>(b.use_dropout ? config_.dropout_rate : 0.0);
    b.act = nn::Activation<T>(ActivationKind::relu);
    nn::he_uniform(b.conv.weight(), cur_c * k * k, rng);
    up_.push_back(std::move(b));
    skip_channels_.push_back(skip_c);
    cur_c = skip_c + up_c;
  }
  head_ = nn::ConvTranspose2d<T>("head.tconv", cur_c, config_.out_channels, k, s, p, true);
  nn::he_uniform(head_.weight, cur_c * k * k, rng);
}

template <typename T>
ForwardResult<T> UNet<T>::forward(const Tensor4<T>& x, nn::RunMode mode, std::mt19937_64* rng,
                                  bool capture_attention) {
  if (x.c() != config_.in_channels) {
    throw ShapeError("input: expected " + std::to_string(config_.in_channels) +
                     " channels, got " + x.shape().str());
  }
  const int d = config_.divisor();
  if (x.h() % d != 0 || x.w() % d != 0) {
    throw ShapeError("input: spatial dims of " + x.shape().str() + " not divisible by " +
                     std::to_string(d));
  }
  trace_.clear();
  trace_.push_back({"input", {x.shape()}, x.shape()});
  ForwardResult<T> result;
  const int levels = config_.levels();
  std::vector<Tensor4<T>> skips(levels);
  Tensor4<T> cur = x;
  for (int i = 0; i < levels; ++i) {
    DownBlock& b = down_[i];
    const Shape4 in = cur.shape();
    cur = b.conv.forward(cur);
    if (b.use_bn) cur = b.bn.forward(cur, mode.batch_stats);
    if (b.use_dropout) cur = b.dropout.forward(cur, mode.dropout, rng);
    cur = b.act.forward(cur);
    trace_.push_back({"down" + std::to_string(i + 1), {in}, cur.shape()});
    skips[i] = cur;
  }
  for (int i = 0; i < levels - 1; ++i) {
    const std::string idx = std::to_string(i + 1);
    Tensor4<T> skip = skips[levels - 2 - i];
    if (!gates_.empty()) {
      auto gated = gates_[i].forward(cur, skip);
      trace_.push_back({"gate" + idx, {cur.shape(), skip.shape()}, gated.gated.shape()});
      skip = std::move(gated.gated);
      if (capture_attention) result.attention.push_back(std::move(gated.alpha));
    }
    UpBlock& b = up_[i];
    const Shape4 in = cur.shape();
    cur = b.conv.forward(cur);
    cur = b.bn.forward(cur, mode.batch_stats);
    if (b.use_dropout) cur = b.dropout.forward(cur, mode.dropout, rng);
    cur = b.act.forward(cur);
    trace_.push_back({"up" + idx, {in}, cur.shape()});
    const Shape4 up_shape = cur.shape();
    cur = nn::concat_channels(skip, cur);
    trace_.push_back({"concat" + idx, {skip.shape(), up_shape}, cur.shape()});
  }
  const Shape4 in = cur.shape();
  result.output = out_act_.forward(head_.forward(cur));
  trace_.push_back({"head", {in}, result.output.shape()});
  if (capture_attention && gates_.empty()) result.attention_unavailable = true;
  return result;
}

template <typename T>
Tensor4<T> UNet<T>::backward(const Tensor4<T>& d_output, bool need_input_grad) {
  const int levels = config_.levels();
  std::vector<Tensor4<T>> d_skips(levels);
  Tensor4<T> d_cur = head_.backward(out_act_.backward(d_output));
  for (int i = levels - 2; i >= 0; --i) {
    auto [d_skip, d_up] = nn::split_channels(d_cur, skip_channels_[i]);
    UpBlock& b = up_[i];
    d_up = b.act.backward(d_up);
    if (b.use_dropout) d_up = b.dropout.backward(d_up);
    d_up = b.bn.backward(d_up);
    d_cur = b.conv.backward(d_up);
    const int level = levels - 2 - i;
    if (!gates_.empty()) {
      auto [d_gate, d_x] = gates_[i].backward(d_skip);
      d_cur += d_gate;
      d_skip = std::move(d_x);
    }
    d_skips[level] = std::move(d_skip);
  }
  // d_cur now holds dL/d(bottleneck) from the decoder path.
  for (int i = levels - 1; i >= 0; --i) {
    if (i < levels - 1) d_cur += d_skips[i];
    DownBlock& b = down_[i];
    Tensor4<T> g = b.act.backward(d_cur);
    if (b.use_dropout) g = b.dropout.backward(g);
    if (b.use_bn) g = b.bn.backward(g);
    const bool want = i > 0 || need_input_grad;
    d_cur = b.conv.backward(g, want);
  }
  return need_input_grad ? d_cur : Tensor4<T>{};
}

template <typename T>
std::vector<nn::Param<T>*> UNet<T>::parameters() {
  std::vector<nn::Param<T>*> out;
  auto add = [&](auto&& ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  for (auto& b : down_) {
    add(b.conv.params());
    if (b.use_bn) add(b.bn.params());
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    if (!gates_.empty()) add(gates_[i].params());
    add(up_[i].conv.params());
    add(up_[i].bn.params());
  }
  add(head_.params());
  return out;
}

template <typename T>
std::vector<const nn::Param<T>*> UNet<T>::parameters() const {
  auto mut = const_cast<UNet<T>*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <typename T>
nn::Param<T>* UNet<T>::find_parameter(const std::string& name) {
  for (auto* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

template <typename T>
void UNet<T>::zero_grad() {
  for (auto* p : parameters()) p->grad.fill(T(0));
}

template <typename T>
ParameterTable UNet<T>::count_parameters() const {
  ParameterTable table;
  for (const auto* p : parameters()) {
    const std::string block = p->name.substr(0, p->name.find('.'));
    if (table.rows.empty() || table.rows.back().block != block) table.rows.push_back({block, 0, 0});
    table.rows.back().total += p->value.size();
    if (p->trainable) table.rows.back().trainable += p->value.size();
  }
  for (const auto& r : table.rows) {
    table.total += r.total;
    table.trainable += r.trainable;
  }
  table.non_trainable = table.total - table.trainable;
  return table;
}

template <typename T>
void UNet<T>::set_folded_upsampling(bool folded) {
  for (auto& b : up_) b.conv.set_folded(folded);
}

template class UNet<float>;
template class UNet<double>;

}  // namespace gw::model
