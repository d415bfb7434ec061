#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stabilex/stability.hpp"
#include "stabilex/tinyformer.hpp"

// Layer-wise relevance propagation for the one-block classifier.
//
// Relevance starts as the target-class logit and flows back with the
// epsilon rule through the head, mean pooling, both residual additions, the
// feed-forward block, the output projection and the value path of each
// head. Attention weights are held constant, so queries and keys receive no
// relevance. Token relevance is the sum over embedding dimensions of the
// relevance of X0 = E[token] + P[position].
namespace stabilex::relprop {

// Sign-matched stabilizer. At 1e-6 the leak through near-zero
// pre-activations breaks 1e-3 conservation on a few percent of inputs to
// untrained models; 1e-9 keeps it below that.
inline constexpr double kEpsilon = 1e-9;

struct Explanation {
  std::int64_t text_id = 0;
  std::string model_id;
  int target_class = 0;
  std::vector<double> relevances;
  std::vector<std::string> tokens;
};

// Explains the predicted class unless target_class is given. Throws
// Error(kNumericalFailure) naming the layer where relevance became
// non-finite.
Explanation explain(const tinyformer::Classifier& model, std::span<const int> token_ids,
                    std::optional<int> target_class = std::nullopt);

struct NamedModel {
  std::string id;
  const tinyformer::Classifier* model = nullptr;
};

// All models must predict the same class for the text (a compatible text);
// otherwise Error(kNotCompatible) lists the dissenting model ids. The
// matrix label is that shared prediction.
stability::ExplanationMatrix explain_matrix(std::span<const NamedModel> models,
                                            std::span<const int> token_ids,
                                            std::span<const std::string> tokens,
                                            std::int64_t text_id);

}  // namespace stabilex::relprop
