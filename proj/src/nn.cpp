#include "mstitch/nn.hpp"

#include <cmath>

namespace mstitch::nn {

Var ParamStore::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(name, parameter(std::move(init)));
  return entries_.back().second;
}

const Var& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return entries_[it->second].second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : entries_) n += v.value().size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, v] : entries_) v.zero_grad();
}

Tensor fan_in_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng, Real gain) {
  Tensor t({fan_in, fan_out});
  const double bound = static_cast<double>(gain) / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.values()) v = static_cast<Real>(rng.uniform(-bound, bound));
  return t;
}

Linear Linear::create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                      Real gain) {
  Linear l;
  l.weight = store.add(name + ".weight", fan_in_uniform(in, out, rng, gain));
  l.bias = store.add(name + ".bias", Tensor({1, out}));
  return l;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, std::size_t width) {
  LayerNorm n;
  n.gain = store.add(name + ".gain", Tensor({1, width}, Real(1)));
  n.bias = store.add(name + ".bias", Tensor({1, width}));
  return n;
}

EncoderLayer EncoderLayer::create(ParamStore& store, const std::string& name, std::size_t width, std::size_t ff,
                                  std::size_t heads, Real dropout, Real out_gain, Rng& rng) {
  EncoderLayer e;
  e.norm_attn = LayerNorm::create(store, name + ".norm_attn", width);
  e.qkv = Linear::create(store, name + ".qkv", width, 3 * width, rng);
  e.attn_out = Linear::create(store, name + ".attn_out", width, width, rng, out_gain);
  e.norm_ff = LayerNorm::create(store, name + ".norm_ff", width);
  e.ff_in = Linear::create(store, name + ".ff_in", width, ff, rng);
  e.ff_out = Linear::create(store, name + ".ff_out", ff, width, rng, out_gain);
  e.heads = heads;
  e.dropout = dropout;
  return e;
}

Var EncoderLayer::operator()(const Var& x, const ForwardMode& mode) const {
  const std::size_t width = x.cols();
  const Var packed = qkv(norm_attn(x));
  const Var attended = attention(slice_cols(packed, 0, width), slice_cols(packed, width, 2 * width),
                                 slice_cols(packed, 2 * width, 3 * width), heads);
  const Var h = add(x, mstitch::dropout(attn_out(attended), this->dropout, mode));
  const Var inner = mstitch::dropout(relu(ff_in(norm_ff(h))), this->dropout, mode);
  return add(h, mstitch::dropout(ff_out(inner), this->dropout, mode));
}

std::size_t EncoderLayer::param_count(std::size_t width, std::size_t ff) {
  return 2 * LayerNorm::param_count(width) + Linear::param_count(width, 3 * width) +
         Linear::param_count(width, width) + Linear::param_count(width, ff) + Linear::param_count(ff, width);
}

std::vector<Real> sinusoidal(double position, std::size_t width) {
  std::vector<Real> out(width);
  const std::size_t half = width / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[2 * i] = static_cast<Real>(std::sin(position * freq));
    out[2 * i + 1] = static_cast<Real>(std::cos(position * freq));
  }
  return out;
}

}  // namespace mstitch::nn
