#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "stabilex/corpus.hpp"
#include "stabilex/rng.hpp"

// One-block attention classifier with hand-written forward and backward
// passes. Everything is double precision.
namespace stabilex::tinyformer {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 32;
  int n_heads = 2;
  int d_ff = 64;
  int max_len = 16;
  double dropout_rate = 0.1;

  int head_dim() const { return d_model / n_heads; }
  // Throws Error(kInvalidConfig).
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// The three training randomness sources (head init, data order, dropout)
// all come from model_seed. base_seed only fixes the shared body.
struct SeedPlan {
  std::uint64_t base_seed = 0;
  std::uint64_t model_seed = 0;

  friend bool operator==(const SeedPlan&, const SeedPlan&) = default;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 16;
  int epochs = 2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // Keeps the positional table at its initial value (used with a zeroed
  // table for bag-of-words models).
  bool freeze_positional = false;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Biases are stored as 1 x k row matrices so every tensor has one type.
struct Weights {
  Mat E;   // vocab_size x d_model
  Mat P;   // max_len x d_model
  Mat Wq;  // d_model x d_model, head h owns columns [h*dk, (h+1)*dk)
  Mat Wk;
  Mat Wv;
  Mat Wo;  // d_model x d_model
  Mat W1;  // d_model x d_ff
  Mat b1;  // 1 x d_ff
  Mat W2;  // d_ff x d_model
  Mat b2;  // 1 x d_model
  Mat Wc;  // d_model x 2
  Mat bc;  // 1 x 2

  static constexpr std::size_t kCount = 12;
  static constexpr std::array<std::string_view, kCount> kNames = {
      "E", "P", "Wq", "Wk", "Wv", "Wo", "W1", "b1", "W2", "b2", "Wc", "bc"};

  std::array<Mat*, kCount> tensors();
  std::array<const Mat*, kCount> tensors() const;

  // Same shapes, all zeros.
  Weights zeros_like() const;
  bool all_finite() const;

  friend bool operator==(const Weights& a, const Weights& b);
};

struct Classifier {
  ModelConfig config;
  SeedPlan plan;
  Weights w;
};

// Intermediate activations of one forward pass.
struct ForwardCache {
  std::vector<int> tokens;
  Mat X0;                // embeddings + positions
  Mat Q, K, V;           // n x d_model, heads side by side
  std::vector<Mat> A;    // per head, n x n row-stochastic
  Mat Z;                 // concat_h(A_h V_h)
  Mat U;                 // Z Wo
  Mat mask1;             // inverted-dropout multipliers (empty when off)
  Mat X1;                // X0 + drop(U)
  Mat Hpre, Hact;        // X1 W1 + b1, relu
  Mat F;                 // Hact W2 + b2
  Mat mask2;
  Mat X2;                // X1 + drop(F)
  Mat pooled;            // 1 x d_model
  Eigen::Vector2d logits;
};

Classifier init(const ModelConfig& config, const SeedPlan& plan);

// dropout may be null when training is false or the rate is zero.
ForwardCache forward(const Classifier& model, std::span<const int> tokens, bool training = false,
                     Stream* dropout = nullptr);

// Softmax cross-entropy of the cached logits.
double loss(const ForwardCache& cache, int target_label);

// Gradient of loss(cache, target) w.r.t. every tensor.
Weights backward(const Classifier& model, const ForwardCache& cache, int target_label);
// Accumulates scale * gradient into grads.
void backward_into(const Classifier& model, const ForwardCache& cache, int target_label,
                   double scale, Weights& grads);

// Ties go to class 0.
int argmax(const Eigen::Vector2d& logits);
int predict(const Classifier& model, std::span<const int> tokens);

double accuracy(const Classifier& model, std::span<const corpus::LabeledText> texts,
                const corpus::Vocab& vocab);

struct TrainMetrics {
  std::vector<double> epoch_loss;
  std::optional<double> test_accuracy;  // empty when the test split is empty
};

struct TrainResult {
  Classifier model;
  TrainMetrics metrics;
};

// mconfig.vocab_size is taken from corpus.vocab when left at 0.
TrainResult train(const corpus::SyntheticCorpus& corpus, ModelConfig mconfig,
                  const TrainConfig& tconfig, const SeedPlan& plan);

// Binary container: magic, version, config, seed plan, then each tensor as
// little-endian float64 in row-major order.
void save_checkpoint(const Classifier& model, std::ostream& out);
void save_checkpoint(const Classifier& model, const std::filesystem::path& path);
Classifier load_checkpoint(std::istream& in);
Classifier load_checkpoint(const std::filesystem::path& path);

}  // namespace stabilex::tinyformer
