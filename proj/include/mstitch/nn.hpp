#pragma once

#include <map>
#include <string>
#include <vector>

#include "mstitch/tensor.hpp"

namespace mstitch::nn {

/// Ordered, named collection of trainable leaves. Names are stable and are
/// what checkpoint files key their blobs by.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init);
  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Var>>& entries() { return entries_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Var>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Uniform(−bound, bound) with bound = gain / sqrt(fan_in).
Tensor fan_in_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng, Real gain = 1);

struct Linear {
  Var weight;  // in × out
  Var bias;    // 1 × out

  static Linear create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       Real gain = 1);
  Var operator()(const Var& x) const { return add_row(matmul(x, weight), bias); }
  static std::size_t param_count(std::size_t in, std::size_t out) { return in * out + out; }
};

struct LayerNorm {
  Var gain;
  Var bias;

  static LayerNorm create(ParamStore& store, const std::string& name, std::size_t width);
  Var operator()(const Var& x) const { return layer_norm(x, gain, bias); }
  static std::size_t param_count(std::size_t width) { return 2 * width; }
};

/// Pre-norm transformer encoder block with full (unmasked) self-attention.
struct EncoderLayer {
  LayerNorm norm_attn;
  Linear qkv;       // width → 3·width
  Linear attn_out;  // width → width
  LayerNorm norm_ff;
  Linear ff_in;   // width → ff
  Linear ff_out;  // ff → width
  std::size_t heads = 1;
  Real dropout = 0;

  static EncoderLayer create(ParamStore& store, const std::string& name, std::size_t width, std::size_t ff,
                             std::size_t heads, Real dropout, Real out_gain, Rng& rng);
  Var operator()(const Var& x, const ForwardMode& mode) const;
  static std::size_t param_count(std::size_t width, std::size_t ff);
};

/// Fixed sinusoidal embedding of a scalar position into `width` channels.
std::vector<Real> sinusoidal(double position, std::size_t width);

}  // namespace mstitch::nn
