#include "stabilex/relprop.hpp"

#include <cmath>

#include "stabilex/error.hpp"

namespace stabilex::relprop {
namespace {

using tinyformer::Mat;

// z + eps * sign(z), with sign(0) = +1.
Mat stabilize(const Mat& z) {
  return z.unaryExpr([](double v) { return v + (v >= 0.0 ? kEpsilon : -kEpsilon); });
}

// Epsilon rule for y = x W + b where z is the full pre-activation (bias
// included): R_x = x * ((R_y / stab(z)) W^T).
Mat linear_rule(const Mat& x, const Mat& w, const Mat& z, const Mat& r_out) {
  const Mat s = r_out.cwiseQuotient(stabilize(z));
  return x.cwiseProduct(s * w.transpose());
}

// Splits relevance of sum = a + b between the addends by signed share.
std::pair<Mat, Mat> residual_rule(const Mat& a, const Mat& b, const Mat& sum, const Mat& r_sum) {
  const Mat s = r_sum.cwiseQuotient(stabilize(sum));
  return {a.cwiseProduct(s), b.cwiseProduct(s)};
}

void check(const Mat& r, const char* layer) {
  if (!r.allFinite()) {
    throw Error(ErrorKind::kNumericalFailure, std::string("non-finite relevance at ") + layer);
  }
}

}  // namespace

Explanation explain(const tinyformer::Classifier& model, std::span<const int> token_ids,
                    std::optional<int> target_class) {
  const auto& w = model.w;
  const auto& cfg = model.config;
  if (!w.all_finite()) throw Error(ErrorKind::kNumericalFailure, "model has non-finite weights");
  const auto c = tinyformer::forward(model, token_ids);
  const int target = target_class.value_or(tinyformer::argmax(c.logits));
  if (target != 0 && target != 1) throw Error(ErrorKind::kInvalidInput, "target class must be 0 or 1");
  const auto n = c.X0.rows();

  // Head: only the target logit carries relevance.
  Mat r_logits = Mat::Zero(1, 2);
  r_logits(0, target) = c.logits(target);
  const Mat r_pooled = linear_rule(c.pooled, w.Wc, c.logits.transpose(), r_logits);
  check(r_pooled, "head");

  // Mean pooling as a linear map with weights 1/n.
  const Mat pooled_share = r_pooled.cwiseQuotient(stabilize(c.pooled)) / static_cast<double>(n);
  const Mat r_x2 = c.X2.array().rowwise() * pooled_share.row(0).array();
  check(r_x2, "pooling");

  auto [r_x1, r_f] = residual_rule(c.X1, c.F, c.X2, r_x2);
  check(r_f, "ffn residual");

  const Mat r_hact = linear_rule(c.Hact, w.W2, c.F, r_f);
  // ReLU passes relevance of active units; inactive units already hold 0.
  const Mat r_hpre = r_hact.cwiseProduct((c.Hpre.array() > 0.0).cast<double>().matrix());
  r_x1 += linear_rule(c.X1, w.W1, c.Hpre, r_hpre);
  check(r_x1, "ffn");

  auto [r_x0, r_u] = residual_rule(c.X0, c.U, c.X1, r_x1);
  check(r_u, "attention residual");

  const Mat r_z = linear_rule(c.Z, w.Wo, c.U, r_u);
  check(r_z, "output projection");

  const int dk = cfg.head_dim();
  Mat r_v(n, cfg.d_model);
  const Mat z_share = r_z.cwiseQuotient(stabilize(c.Z));
  for (int h = 0; h < cfg.n_heads; ++h) {
    const Mat& A = c.A[static_cast<std::size_t>(h)];
    r_v.middleCols(h * dk, dk) =
        c.V.middleCols(h * dk, dk).cwiseProduct(A.transpose() * z_share.middleCols(h * dk, dk));
  }
  check(r_v, "attention values");

  r_x0 += linear_rule(c.X0, w.Wv, c.V, r_v);
  check(r_x0, "value projection");

  Explanation out;
  out.target_class = target;
  out.relevances.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out.relevances[static_cast<std::size_t>(i)] = r_x0.row(i).sum();
  return out;
}

stability::ExplanationMatrix explain_matrix(std::span<const NamedModel> models,
                                            std::span<const int> token_ids,
                                            std::span<const std::string> tokens,
                                            std::int64_t text_id) {
  if (models.size() < 2) throw Error(ErrorKind::kInvalidInput, "explain_matrix needs at least 2 models");
  if (tokens.size() != token_ids.size()) {
    throw Error(ErrorKind::kInvalidInput, "token strings and ids differ in length");
  }
  std::vector<int> predictions;
  predictions.reserve(models.size());
  int votes1 = 0;
  for (const auto& m : models) {
    predictions.push_back(tinyformer::predict(*m.model, token_ids));
    votes1 += predictions.back();
  }
  const int majority = 2 * votes1 > static_cast<int>(models.size()) ? 1 : 0;
  std::string dissent;
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (predictions[i] != majority) dissent += (dissent.empty() ? "" : ",") + models[i].id;
  }
  if (!dissent.empty()) {
    throw Error(ErrorKind::kNotCompatible, "text " + std::to_string(text_id) +
                                               ": models disagree on the label; dissenting: " + dissent);
  }

  stability::ExplanationMatrix out;
  out.text_id = text_id;
  out.tokens.assign(tokens.begin(), tokens.end());
  out.label = majority;
  for (const auto& m : models) {
    out.model_ids.push_back(m.id);
    out.rows.push_back(explain(*m.model, token_ids, majority).relevances);
  }
  return out;
}

}  // namespace stabilex::relprop
