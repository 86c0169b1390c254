#pragma once

#include "core/autodiff.hpp"
#include "core/config.hpp"

#include <map>
#include <string>

namespace octcast {

/// Named parameter tensors with deterministic (sorted) iteration order.
class ParamStore {
 public:
  Eigen::MatrixXd& at(const std::string& name);
  const Eigen::MatrixXd& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  void set(const std::string& name, Eigen::MatrixXd value);
  const std::map<std::string, Eigen::MatrixXd>& all() const { return params_; }
  std::map<std::string, Eigen::MatrixXd>& all() { return params_; }
  size_t count_scalars() const;

 private:
  std::map<std::string, Eigen::MatrixXd> params_;
};

/// One forward pass over a parameter store: materializes each referenced
/// tensor as a tape leaf exactly once and hands gradients back by name.
class ParamTape {
 public:
  explicit ParamTape(const ParamStore& store) : store_(&store) {}

  ad::Tape& tape() { return tape_; }
  /// Leaf var for a named tensor (cached per tape).
  ad::Var p(const std::string& name);
  /// Gradients of every referenced tensor after backward (zero if untouched).
  std::map<std::string, Eigen::MatrixXd> grads() const;

 private:
  const ParamStore* store_;
  ad::Tape tape_;
  std::map<std::string, ad::Var> leaves_;
};

/// Fresh weights for the full model: token maps, encoder/decoder blocks,
/// C-VAE heads and the optional anticipation head. Weight entries are
/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases start at zero.
ParamStore init_model_weights(const ModelConfig& cfg, uint64_t seed);

/// The `OCTW1` container: magic, u64 LE manifest length, JSON manifest
/// [{name, shape, offset}], then contiguous little-endian f32 data. Model
/// configuration rides along as reserved `cfg.*` scalar tensors.
void save_weights(const std::string& path, const ParamStore& store, const ModelConfig& cfg);
std::pair<ParamStore, ModelConfig> load_weights(const std::string& path);

}  // namespace octcast
