#pragma once

// Chebyshev spectral graph-convolution network mapping Fourier-encoded
// element features to blueprint densities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "autodiff.hpp"
#include "graph.hpp"

namespace ntopo {

enum class Activation { relu, sigmoid, none };

/// Weights of one Chebyshev layer: theta[k] is in_dim x out_dim, bias is
/// 1 x out_dim.
struct ChebLayerParams {
  int K_order = 1;
  std::vector<Eigen::MatrixXd> theta;
  Eigen::MatrixXd bias;

  int in_dim() const { return theta.empty() ? 0 : static_cast<int>(theta.front().rows()); }
  int out_dim() const { return static_cast<int>(bias.cols()); }
};

struct NetworkConfig {
  /// Input width first (2m), output width (1) last.
  std::vector<int> layer_widths;
  int cheb_order = 1;
  /// Output bias starts at logit(target_volume_fraction).
  double target_volume_fraction = 0.5;

  void validate() const {
    if (layer_widths.size() < 2)
      throw InvalidArgument("NetworkConfig: need at least input and output widths");
    for (int w : layer_widths)
      if (w < 1)
        throw InvalidArgument("NetworkConfig: widths must be positive");
    if (layer_widths.back() != 1)
      throw InvalidArgument("NetworkConfig: output width must be 1");
    if (cheb_order < 0)
      throw InvalidArgument("NetworkConfig: Chebyshev order must be >= 0");
    if (!(target_volume_fraction > 0.0 && target_volume_fraction < 1.0))
      throw InvalidArgument("NetworkConfig: target volume fraction must be in (0, 1)");
  }
};

struct NetworkParameters {
  std::vector<ChebLayerParams> layers;

  /// Flat list of every trainable array, in checkpoint order.
  std::vector<Eigen::MatrixXd *> tensors() {
    std::vector<Eigen::MatrixXd *> out;
    for (auto &l : layers) {
      for (auto &t : l.theta)
        out.push_back(&t);
      out.push_back(&l.bias);
    }
    return out;
  }
  std::vector<const Eigen::MatrixXd *> tensors() const {
    std::vector<const Eigen::MatrixXd *> out;
    for (const auto &l : layers) {
      for (const auto &t : l.theta)
        out.push_back(&t);
      out.push_back(&l.bias);
    }
    return out;
  }
  std::vector<std::string> tensor_names() const {
    std::vector<std::string> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      for (std::size_t k = 0; k < layers[l].theta.size(); ++k)
        out.push_back("layer" + std::to_string(l) + ".theta" + std::to_string(k));
      out.push_back("layer" + std::to_string(l) + ".bias");
    }
    return out;
  }
  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto *t : tensors())
      n += static_cast<std::size_t>(t->size());
    return n;
  }
};

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Uniform weights in +-r with r = 1/sqrt((K + 1) in), capped at
/// sqrt(6 / (in + out)); zero hidden biases and an output bias of
/// logit(target volume fraction).
inline NetworkParameters init_parameters(const NetworkConfig &config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  NetworkParameters params;
  const std::size_t nlayers = config.layer_widths.size() - 1;
  for (std::size_t l = 0; l < nlayers; ++l) {
    const int in = config.layer_widths[l];
    const int out = config.layer_widths[l + 1];
    const double r = std::min(1.0 / std::sqrt(double(config.cheb_order + 1) * in),
                              std::sqrt(6.0 / double(in + out)));
    std::uniform_real_distribution<double> dist(-r, r);
    ChebLayerParams layer;
    layer.K_order = config.cheb_order;
    for (int k = 0; k <= config.cheb_order; ++k) {
      Eigen::MatrixXd th(in, out);
      for (Eigen::Index c = 0; c < th.cols(); ++c)
        for (Eigen::Index rr = 0; rr < th.rows(); ++rr)
          th(rr, c) = dist(rng);
      layer.theta.push_back(std::move(th));
    }
    layer.bias = Eigen::MatrixXd::Zero(1, out);
    if (l + 1 == nlayers)
      layer.bias.setConstant(logit(config.target_volume_fraction));
    params.layers.push_back(std::move(layer));
  }
  return params;
}

/// Layer weights placed on a tape.
struct ChebLayerVars {
  std::vector<ad::Var> theta;
  ad::Var bias;
};

inline std::vector<ChebLayerVars> bind_parameters(ad::Tape &tape,
                                                  const NetworkParameters &params,
                                                  bool trainable = true) {
  std::vector<ChebLayerVars> out;
  for (const auto &l : params.layers) {
    ChebLayerVars v;
    for (const auto &t : l.theta)
      v.theta.push_back(trainable ? tape.variable(t) : tape.constant(t));
    v.bias = trainable ? tape.variable(l.bias) : tape.constant(l.bias);
    out.push_back(std::move(v));
  }
  return out;
}

/// sum_k T_k(L~) h theta_k + bias, then the activation. T_k h is built by the
/// three-term recursion on vectors; T_k(L~) is never formed.
inline ad::Var cheb_layer_forward(const ad::Var &h,
                                  const std::shared_ptr<const SparseMatrix> &scaled_laplacian,
                                  const ChebLayerVars &layer, Activation activation) {
  if (layer.theta.empty())
    throw InvalidArgument("cheb_layer_forward: layer has no weights");
  if (scaled_laplacian->rows() != h.rows() || scaled_laplacian->cols() != h.rows())
    throw InvalidArgument("cheb_layer_forward: Laplacian does not match node count");
  for (const auto &th : layer.theta)
    if (th.rows() != h.cols() || th.cols() != layer.bias.cols())
      throw InvalidArgument("cheb_layer_forward: weight shape mismatch");

  ad::Var acc = ad::matmul(h, layer.theta[0]);
  ad::Var t_prev = h;
  ad::Var t_curr;
  for (std::size_t k = 1; k < layer.theta.size(); ++k) {
    ad::Var t_next;
    if (k == 1)
      t_next = ad::spmm(scaled_laplacian, h);
    else
      t_next = ad::sub(ad::scale(ad::spmm(scaled_laplacian, t_curr), 2.0), t_prev);
    if (k >= 2)
      t_prev = t_curr;
    t_curr = t_next;
    acc = ad::add(acc, ad::matmul(t_curr, layer.theta[k]));
  }
  acc = ad::add_row_broadcast(acc, layer.bias);
  switch (activation) {
  case Activation::relu:
    return ad::relu(acc);
  case Activation::sigmoid:
    return ad::sigmoid(acc);
  case Activation::none:
    break;
  }
  return acc;
}

inline ad::Var cheb_layer_forward(const ad::Var &h, const ElementGraph &graph,
                                  const ChebLayerVars &layer, Activation activation) {
  return cheb_layer_forward(h, std::make_shared<const SparseMatrix>(graph.laplacian_scaled),
                            layer, activation);
}

/// ReLU hidden layers, sigmoid output; returns an N x 1 column in (0, 1).
inline ad::Var predict_blueprint(const ad::Var &features, const ElementGraph &graph,
                                 const std::vector<ChebLayerVars> &layers) {
  if (layers.empty())
    throw InvalidArgument("predict_blueprint: empty network");
  auto L = std::make_shared<const SparseMatrix>(graph.laplacian_scaled);
  ad::Var h = features;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const bool last = l + 1 == layers.size();
    h = cheb_layer_forward(h, L, layers[l], last ? Activation::sigmoid : Activation::relu);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Checkpoint files
//
// Layout (all integers uint32, all values float64, little-endian):
//   "NTOPOCKP" | version = 1 | array count
//   per array: name length | name bytes | rows | cols | rows*cols values, row-major

namespace detail {

inline bool host_little_endian() {
  const std::uint16_t probe = 1;
  unsigned char first = 0;
  std::memcpy(&first, &probe, 1);
  return first == 1;
}

template <class T> void write_le(std::ostream &os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if (!host_little_endian())
    std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char *>(bytes), sizeof(T));
}

template <class T> T read_le(std::istream &is) {
  unsigned char bytes[sizeof(T)];
  is.read(reinterpret_cast<char *>(bytes), sizeof(T));
  if (!is)
    throw InvalidArgument("checkpoint: truncated file");
  if (!host_little_endian())
    std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

} // namespace detail

inline void save_checkpoint(const std::string &path, const NetworkParameters &params) {
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os.write("NTOPOCKP", 8);
  const auto tensors = params.tensors();
  const auto names = params.tensor_names();
  detail::write_le<std::uint32_t>(os, 1);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(names[k].size()));
    os.write(names[k].data(), static_cast<std::streamsize>(names[k].size()));
    const Eigen::MatrixXd &t = *tensors[k];
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rows()));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c)
        detail::write_le<double>(os, t(r, c));
  }
  if (!os)
    throw std::runtime_error("checkpoint: write failed for " + path);
}

/// Reads a checkpoint written by save_checkpoint. Arrays are grouped into
/// layers by their "layer<l>." prefix.
inline NetworkParameters load_checkpoint(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != "NTOPOCKP")
    throw InvalidArgument("checkpoint: bad magic in " + path);
  if (detail::read_le<std::uint32_t>(is) != 1)
    throw InvalidArgument("checkpoint: unsupported version");
  const auto count = detail::read_le<std::uint32_t>(is);
  NetworkParameters params;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = detail::read_le<std::uint32_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto rows = detail::read_le<std::uint32_t>(is);
    const auto cols = detail::read_le<std::uint32_t>(is);
    Eigen::MatrixXd t(rows, cols);
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c)
        t(r, c) = detail::read_le<double>(is);

    const auto dot = name.find('.');
    if (name.rfind("layer", 0) != 0 || dot == std::string::npos)
      throw InvalidArgument("checkpoint: unexpected array name '" + name + "'");
    const std::size_t layer = std::stoul(name.substr(5, dot - 5));
    if (layer > params.layers.size())
      throw InvalidArgument("checkpoint: layers out of order");
    if (layer == params.layers.size())
      params.layers.emplace_back();
    auto &l = params.layers[layer];
    const std::string field = name.substr(dot + 1);
    if (field == "bias")
      l.bias = std::move(t);
    else if (field.rfind("theta", 0) == 0)
      l.theta.push_back(std::move(t));
    else
      throw InvalidArgument("checkpoint: unexpected array name '" + name + "'");
  }
  for (auto &l : params.layers)
    l.K_order = static_cast<int>(l.theta.size()) - 1;
  return params;
}

} // namespace ntopo
