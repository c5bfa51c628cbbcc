#pragma once

// Regularizer checkpoints as JSON. Layout (version 1):
//
//   {
//     "format": "deqbl-checkpoint", "version": 1,
//     "layer": "dense" | "conv",
//     "A": {"shape": [...], "data": [...]},   // dense: [s, n] row-major
//     "C": {"shape": [...], "data": [...]},   // conv: [channels, kh, kw, rows, cols],
//                                             //   kernels row-major per channel
//     "b": [...],                             // empty for conv
//     "gamma": g, "xi": x, "tied": bool,
//     "activation": {"kind": "relu", "eps": 0.0},
//     "seed": 0
//   }
//
// Doubles are written with round-trip precision, so a reload is bit-exact.

#include "deqbl/proxmap.hpp"
#include "deqbl/regnet.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <variant>

namespace deqbl {

using json = nlohmann::json;

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::variant<DenseParams, ConvParams> params;
  Activation sigma;
  std::uint64_t seed = 0;
};

namespace detail {

inline json layer_to_json(const DenseLayer& l) {
  json data = json::array();
  for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
    for (Eigen::Index j = 0; j < l.weight.cols(); ++j) data.push_back(l.weight(i, j));
  return {{"shape", {l.weight.rows(), l.weight.cols()}}, {"data", data}};
}

inline json layer_to_json(const ConvLayer& l) {
  json data = json::array();
  for (int c = 0; c < l.bank.channels; ++c)
    for (int i = 0; i < l.bank.kh; ++i)
      for (int j = 0; j < l.bank.kw; ++j) data.push_back(l.bank.at(c, i - l.bank.kh / 2, j - l.bank.kw / 2));
  return {{"shape", {l.bank.channels, l.bank.kh, l.bank.kw, l.rows, l.cols}}, {"data", data}};
}

inline DenseLayer dense_from_json(const json& j) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (shape.size() != 2 || static_cast<Eigen::Index>(data.size()) != shape[0] * shape[1])
    throw std::runtime_error("checkpoint: dense layer shape does not match data");
  Matrix w(shape[0], shape[1]);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < shape[0]; ++i)
    for (Eigen::Index c = 0; c < shape[1]; ++c) w(i, c) = data[k++];
  return DenseLayer(w);
}

inline ConvLayer conv_from_json(const json& j) {
  const auto shape = j.at("shape").get<std::vector<int>>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (shape.size() != 5) throw std::runtime_error("checkpoint: conv layer shape needs 5 entries");
  ConvKernelBank bank(shape[0], shape[1], shape[2]);
  if (data.size() != static_cast<std::size_t>(bank.weights.size()))
    throw std::runtime_error("checkpoint: conv layer shape does not match data");
  std::size_t k = 0;
  for (int c = 0; c < bank.channels; ++c)
    for (int i = 0; i < bank.kh; ++i)
      for (int jj = 0; jj < bank.kw; ++jj) bank.at(c, i - bank.kh / 2, jj - bank.kw / 2) = data[k++];
  return ConvLayer(bank, shape[3], shape[4]);
}

}  // namespace detail

template <class Layer>
json checkpoint_to_json(const RegularizerParams<Layer>& p, const Activation& sigma, std::uint64_t seed) {
  json j;
  j["format"] = "deqbl-checkpoint";
  j["version"] = kCheckpointVersion;
  j["layer"] = std::is_same_v<Layer, DenseLayer> ? "dense" : "conv";
  j["A"] = detail::layer_to_json(p.A);
  j["C"] = detail::layer_to_json(p.C);
  j["b"] = std::vector<double>(p.b.data(), p.b.data() + p.b.size());
  j["gamma"] = p.gamma;
  j["xi"] = p.xi;
  j["tied"] = p.tied;
  j["activation"] = {{"kind", std::string(to_string(sigma.kind))}, {"eps", sigma.eps}};
  j["seed"] = seed;
  return j;
}

inline Checkpoint checkpoint_from_json(const json& j) {
  if (j.value("format", "") != "deqbl-checkpoint") throw std::runtime_error("checkpoint: unrecognized format tag");
  if (j.value("version", 0) != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version");
  Checkpoint ck;
  const auto b = j.at("b").get<std::vector<double>>();
  const Vector bias = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
  const double gamma = j.at("gamma").get<double>();
  const double xi = j.at("xi").get<double>();
  const bool tied = j.at("tied").get<bool>();
  const std::string layer = j.at("layer").get<std::string>();
  if (layer == "dense") {
    DenseParams p{detail::dense_from_json(j.at("A")), detail::dense_from_json(j.at("C")), bias, gamma, xi, tied};
    p.validate();
    ck.params = std::move(p);
  } else if (layer == "conv") {
    ConvParams p{detail::conv_from_json(j.at("A")), detail::conv_from_json(j.at("C")), bias, gamma, xi, tied};
    p.validate();
    ck.params = std::move(p);
  } else {
    throw std::runtime_error("checkpoint: unknown layer kind '" + layer + "'");
  }
  ck.sigma = ProxMap{map_kind_from_string(j.at("activation").at("kind").get<std::string>()),
                     j.at("activation").at("eps").get<double>()};
  ck.sigma.validate();
  ck.seed = j.at("seed").get<std::uint64_t>();
  return ck;
}

template <class Layer>
void save_checkpoint(const std::filesystem::path& path, const RegularizerParams<Layer>& p, const Activation& sigma,
                     std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(p, sigma, seed).dump(1) << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return checkpoint_from_json(json::parse(in));
}

}  // namespace deqbl
