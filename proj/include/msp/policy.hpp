#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "msp/tensor.hpp"

namespace msp {

struct PolicyConfig {
  int num_classes = 10;  // model output classes (includes the end class when used)
  int grid_size = 16;
  std::string encoder = "conv";  // conv (grid inputs) or mlp (flat-vector fallback)
  std::string encoder_tail = "flatten";  // flatten (pool + affine) or avg (spatial mean)
  int conv_channels1 = 8;
  int conv_channels2 = 16;
  int mlp_hidden = 64;
  int feature_dim = 64;  // d
  int embed_dim = 16;    // e
  int hidden_dim = 64;   // h
};

/// Hidden and cell activations of the gated recurrent cell.
struct RecurrentState {
  Tensor h;  // [1, hidden_dim]
  Tensor c;  // [1, hidden_dim]
};

/// The parametrized policy: encoder -> gated recurrent cell conditioned on
/// the previous label -> class / termination / size heads. The information
/// flow is encoder features concatenated with emb(prev_label) into an
/// LSTM-style cell, with softmax class logits and a sigmoid stop logit on
/// the hidden state.
class PolicyModel {
 public:
  static PolicyModel init(const PolicyConfig& config, std::uint64_t seed);

  const PolicyConfig& config() const { return cfg_; }
  int start_token() const { return cfg_.num_classes; }

  /// Shared handles to every parameter, in a fixed order.
  std::vector<std::pair<std::string, Tensor>> parameters();
  std::vector<std::pair<std::string, Tensor>> parameters() const;
  long parameter_count() const;

  /// Input grid -> feature row [1, d]. Deterministic.
  Tensor encode(const RowMat& grid) const;

  RecurrentState initial_state() const;

  struct StepResult {
    Tensor probs;      // [1, num_classes], softmax normalized
    Tensor stop_prob;  // [1, 1], sigmoid
    RecurrentState state;
  };

  /// One decision step. prev_label in [0, num_classes]; num_classes is the
  /// start token.
  StepResult step(const RecurrentState& state, const Tensor& features, int prev_label) const;

  /// Raw multiset-size regression from the recurrent state (one-step loss).
  Tensor predict_size(const RecurrentState& state) const;

 private:
  PolicyConfig cfg_;
  // conv encoder
  Tensor enc_k1_, enc_b1_, enc_k2_, enc_b2_, enc_wf_, enc_bf_;
  // mlp encoder
  Tensor mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
  Tensor emb_;                          // [(num_classes+1), e]; last row = start token
  Tensor cell_wx_, cell_wh_, cell_b_;   // gates packed as [i f o g]
  Tensor cls_w_, cls_b_;
  Tensor stop_w_, stop_b_;
  Tensor size_w_, size_b_;
};

/// Checkpoints are JSON maps {name -> shape, row-major data} plus the config.
void save_checkpoint(const PolicyModel& model, const std::string& path);
PolicyModel load_checkpoint(const std::string& path);

}  // namespace msp
