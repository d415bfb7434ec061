#include "stabilex/tinyformer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "stabilex/error.hpp"

namespace stabilex::tinyformer {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

constexpr double kHeadInitStd = 0.02;

void glorot_uniform(Mat& m, Stream& stream) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = stream.uniform(-limit, limit);
  }
}

Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Stream& stream) {
  Mat mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) mask(i, j) = stream.uniform() < rate ? 0.0 : keep_scale;
  }
  return mask;
}

void row_softmax(Mat& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    auto row = s.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

Eigen::Vector2d softmax(const Eigen::Vector2d& logits) {
  const double mx = logits.maxCoeff();
  Eigen::Vector2d e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

// Little-endian primitive IO for checkpoints.
template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error(ErrorKind::kIngestRejected, "checkpoint truncated");
  return value;
}

constexpr char kMagic[8] = {'S', 'T', 'B', 'X', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorKind::kInvalidConfig, why); };
  if (vocab_size <= 0) fail("vocab_size must be positive");
  if (d_model <= 0 || n_heads <= 0 || d_ff <= 0 || max_len <= 0) {
    fail("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0,1)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || batch_size <= 0 || epochs <= 0) {
    throw Error(ErrorKind::kInvalidConfig, "learning_rate, batch_size and epochs must be positive");
  }
}

std::array<Mat*, Weights::kCount> Weights::tensors() {
  return {&E, &P, &Wq, &Wk, &Wv, &Wo, &W1, &b1, &W2, &b2, &Wc, &bc};
}

std::array<const Mat*, Weights::kCount> Weights::tensors() const {
  return {&E, &P, &Wq, &Wk, &Wv, &Wo, &W1, &b1, &W2, &b2, &Wc, &bc};
}

Weights Weights::zeros_like() const {
  Weights z;
  auto dst = z.tensors();
  const auto src = tensors();
  for (std::size_t i = 0; i < kCount; ++i) *dst[i] = Mat::Zero(src[i]->rows(), src[i]->cols());
  return z;
}

bool Weights::all_finite() const {
  for (const Mat* t : tensors()) {
    if (!t->allFinite()) return false;
  }
  return true;
}

bool operator==(const Weights& a, const Weights& b) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  for (std::size_t i = 0; i < Weights::kCount; ++i) {
    if (ta[i]->rows() != tb[i]->rows() || ta[i]->cols() != tb[i]->cols()) return false;
    // Bitwise comparison, so -0.0 != 0.0 and NaN payloads count.
    if (std::memcmp(ta[i]->data(), tb[i]->data(), sizeof(double) * static_cast<std::size_t>(ta[i]->size())) != 0) {
      return false;
    }
  }
  return true;
}

Classifier init(const ModelConfig& config, const SeedPlan& plan) {
  config.validate();
  const int d = config.d_model;
  Classifier m{config, plan, {}};
  Weights& w = m.w;
  w.E.resize(config.vocab_size, d);
  w.P.resize(config.max_len, d);
  w.Wq.resize(d, d);
  w.Wk.resize(d, d);
  w.Wv.resize(d, d);
  w.Wo.resize(d, d);
  w.W1.resize(d, config.d_ff);
  w.W2.resize(config.d_ff, d);
  // One body stream per tensor, so adding a tensor never shifts the others.
  std::uint64_t index = 0;
  for (Mat* t : {&w.E, &w.P, &w.Wq, &w.Wk, &w.Wv, &w.Wo, &w.W1, &w.W2}) {
    Stream body(plan.base_seed, "body", index++);
    glorot_uniform(*t, body);
  }
  w.b1 = Mat::Zero(1, config.d_ff);
  w.b2 = Mat::Zero(1, d);

  w.Wc.resize(d, 2);
  Stream head(plan.model_seed, "head");
  for (Eigen::Index i = 0; i < w.Wc.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.Wc.cols(); ++j) w.Wc(i, j) = head.normal(0.0, kHeadInitStd);
  }
  w.bc = Mat::Zero(1, 2);
  return m;
}

ForwardCache forward(const Classifier& model, std::span<const int> tokens, bool training,
                     Stream* dropout) {
  const auto& cfg = model.config;
  const auto& w = model.w;
  const auto n = static_cast<Eigen::Index>(tokens.size());
  if (n < 1 || n > cfg.max_len) {
    throw Error(ErrorKind::kInvalidInput, "token count " + std::to_string(n) +
                                              " outside [1, " + std::to_string(cfg.max_len) + "]");
  }
  const bool use_dropout = training && cfg.dropout_rate > 0.0;
  if (use_dropout && dropout == nullptr) {
    throw Error(ErrorKind::kInvalidInput, "training forward pass needs a dropout stream");
  }

  ForwardCache c;
  c.tokens.assign(tokens.begin(), tokens.end());
  c.X0.resize(n, cfg.d_model);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int tok = tokens[static_cast<std::size_t>(i)];
    if (tok < 0 || tok >= cfg.vocab_size) {
      throw Error(ErrorKind::kInvalidInput, "token id " + std::to_string(tok) + " out of range");
    }
    c.X0.row(i) = w.E.row(tok) + w.P.row(i);
  }

  c.Q = c.X0 * w.Wq;
  c.K = c.X0 * w.Wk;
  c.V = c.X0 * w.Wv;
  const int dk = cfg.head_dim();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  c.Z.resize(n, cfg.d_model);
  c.A.resize(static_cast<std::size_t>(cfg.n_heads));
  for (int h = 0; h < cfg.n_heads; ++h) {
    Mat s = c.Q.middleCols(h * dk, dk) * c.K.middleCols(h * dk, dk).transpose() * inv_sqrt_dk;
    row_softmax(s);
    c.Z.middleCols(h * dk, dk) = s * c.V.middleCols(h * dk, dk);
    c.A[static_cast<std::size_t>(h)] = std::move(s);
  }
  c.U = c.Z * w.Wo;

  if (use_dropout) {
    c.mask1 = dropout_mask(n, cfg.d_model, cfg.dropout_rate, *dropout);
    c.X1 = c.X0 + c.U.cwiseProduct(c.mask1);
  } else {
    c.X1 = c.X0 + c.U;
  }

  c.Hpre = (c.X1 * w.W1).rowwise() + w.b1.row(0);
  c.Hact = c.Hpre.cwiseMax(0.0);
  c.F = (c.Hact * w.W2).rowwise() + w.b2.row(0);
  if (use_dropout) {
    c.mask2 = dropout_mask(n, cfg.d_model, cfg.dropout_rate, *dropout);
    c.X2 = c.X1 + c.F.cwiseProduct(c.mask2);
  } else {
    c.X2 = c.X1 + c.F;
  }

  c.pooled = c.X2.colwise().mean();
  c.logits = (c.pooled * w.Wc + w.bc).transpose();
  return c;
}

double loss(const ForwardCache& cache, int target_label) {
  const auto& z = cache.logits;
  const double mx = z.maxCoeff();
  const double lse = mx + std::log((z.array() - mx).exp().sum());
  return lse - z(target_label);
}

void backward_into(const Classifier& model, const ForwardCache& c, int target_label,
                   double scale, Weights& g) {
  const auto& cfg = model.config;
  const auto& w = model.w;
  const auto n = c.X0.rows();

  Eigen::Vector2d dlogits = softmax(c.logits);
  dlogits(target_label) -= 1.0;
  dlogits *= scale;

  g.Wc.noalias() += c.pooled.transpose() * dlogits.transpose();
  g.bc += dlogits.transpose();
  const Mat dpooled = dlogits.transpose() * w.Wc.transpose();  // 1 x d

  const Mat dX2 = dpooled.replicate(n, 1) / static_cast<double>(n);
  const Mat dF = c.mask2.size() ? Mat(dX2.cwiseProduct(c.mask2)) : dX2;
  g.W2.noalias() += c.Hact.transpose() * dF;
  g.b2 += dF.colwise().sum();
  Mat dH = dF * w.W2.transpose();
  dH = dH.cwiseProduct((c.Hpre.array() > 0.0).cast<double>().matrix());
  g.W1.noalias() += c.X1.transpose() * dH;
  g.b1 += dH.colwise().sum();
  const Mat dX1 = dX2 + dH * w.W1.transpose();

  const Mat dU = c.mask1.size() ? Mat(dX1.cwiseProduct(c.mask1)) : dX1;
  g.Wo.noalias() += c.Z.transpose() * dU;
  const Mat dZ = dU * w.Wo.transpose();

  const int dk = cfg.head_dim();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  Mat dQ(n, cfg.d_model), dK(n, cfg.d_model), dV(n, cfg.d_model);
  for (int h = 0; h < cfg.n_heads; ++h) {
    const Mat& A = c.A[static_cast<std::size_t>(h)];
    const auto dZh = dZ.middleCols(h * dk, dk);
    const Mat dA = dZh * c.V.middleCols(h * dk, dk).transpose();
    dV.middleCols(h * dk, dk) = A.transpose() * dZh;
    // Softmax Jacobian applied row by row.
    const Eigen::VectorXd row_dot = dA.cwiseProduct(A).rowwise().sum();
    const Mat dS = (A.array() * (dA.colwise() - row_dot).array()).matrix() * inv_sqrt_dk;
    dQ.middleCols(h * dk, dk) = dS * c.K.middleCols(h * dk, dk);
    dK.middleCols(h * dk, dk) = dS.transpose() * c.Q.middleCols(h * dk, dk);
  }
  g.Wq.noalias() += c.X0.transpose() * dQ;
  g.Wk.noalias() += c.X0.transpose() * dK;
  g.Wv.noalias() += c.X0.transpose() * dV;
  const Mat dX0 = dX1 + dQ * w.Wq.transpose() + dK * w.Wk.transpose() + dV * w.Wv.transpose();

  for (Eigen::Index i = 0; i < n; ++i) {
    g.E.row(c.tokens[static_cast<std::size_t>(i)]) += dX0.row(i);
    g.P.row(i) += dX0.row(i);
  }
}

Weights backward(const Classifier& model, const ForwardCache& cache, int target_label) {
  Weights g = model.w.zeros_like();
  backward_into(model, cache, target_label, 1.0, g);
  return g;
}

int argmax(const Eigen::Vector2d& logits) { return logits(1) > logits(0) ? 1 : 0; }

int predict(const Classifier& model, std::span<const int> tokens) {
  return argmax(forward(model, tokens).logits);
}

double accuracy(const Classifier& model, std::span<const corpus::LabeledText> texts,
                const corpus::Vocab& vocab) {
  if (texts.empty()) throw Error(ErrorKind::kInvalidInput, "accuracy of an empty text list");
  std::size_t correct = 0;
  for (const auto& t : texts) {
    if (predict(model, vocab.encode(t.words)) == t.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(texts.size());
}

TrainResult train(const corpus::SyntheticCorpus& corpus, ModelConfig mconfig,
                  const TrainConfig& tconfig, const SeedPlan& plan) {
  if (corpus.train.empty()) throw Error(ErrorKind::kInvalidInput, "empty train split");
  if (mconfig.vocab_size == 0) mconfig.vocab_size = corpus.vocab.size();
  mconfig.validate();
  tconfig.validate();

  std::vector<std::vector<int>> encoded;
  encoded.reserve(corpus.train.size());
  for (const auto& t : corpus.train) encoded.push_back(corpus.vocab.encode(t.words));

  TrainResult result{init(mconfig, plan), {}};
  Classifier& model = result.model;
  Weights m1 = model.w.zeros_like();
  Weights m2 = model.w.zeros_like();
  Weights grads = model.w.zeros_like();

  std::vector<std::size_t> order(encoded.size());
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < tconfig.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Stream order_stream(plan.model_seed, "order", static_cast<std::uint64_t>(epoch));
    order_stream.shuffle(std::span<std::size_t>(order));

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tconfig.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(tconfig.batch_size));
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (Mat* t : grads.tensors()) t->setZero();

      Stream drop(plan.model_seed, "dropout", step);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t idx = order[k];
        const int label = corpus.train[idx].label;
        const ForwardCache cache = forward(model, encoded[idx], true, &drop);
        batch_loss += loss(cache, label);
        backward_into(model, cache, label, scale, grads);
      }
      if (!std::isfinite(batch_loss)) {
        throw Error(ErrorKind::kTrainingDiverged,
                    "non-finite loss at step " + std::to_string(step));
      }
      epoch_loss += batch_loss;

      ++step;
      const double bias1 = 1.0 - std::pow(tconfig.beta1, static_cast<double>(step));
      const double bias2 = 1.0 - std::pow(tconfig.beta2, static_cast<double>(step));
      auto params = model.w.tensors();
      auto first = m1.tensors();
      auto second = m2.tensors();
      const auto grad = std::as_const(grads).tensors();
      for (std::size_t i = 0; i < Weights::kCount; ++i) {
        if (tconfig.freeze_positional && params[i] == &model.w.P) continue;
        first[i]->array() = tconfig.beta1 * first[i]->array() + (1.0 - tconfig.beta1) * grad[i]->array();
        second[i]->array() =
            tconfig.beta2 * second[i]->array() + (1.0 - tconfig.beta2) * grad[i]->array().square();
        params[i]->array() -= tconfig.learning_rate * (first[i]->array() / bias1) /
                              ((second[i]->array() / bias2).sqrt() + tconfig.adam_eps);
      }
    }
    result.metrics.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  if (!model.w.all_finite()) {
    throw Error(ErrorKind::kTrainingDiverged, "non-finite weights after training");
  }
  if (!corpus.test.empty()) {
    result.metrics.test_accuracy = accuracy(model, corpus.test, corpus.vocab);
  }
  return result;
}

void save_checkpoint(const Classifier& model, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  const auto& c = model.config;
  for (int v : {c.vocab_size, c.d_model, c.n_heads, c.d_ff, c.max_len}) put<std::int32_t>(out, v);
  put<double>(out, c.dropout_rate);
  put<std::uint64_t>(out, model.plan.base_seed);
  put<std::uint64_t>(out, model.plan.model_seed);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(Weights::kCount));
  const auto tensors = model.w.tensors();
  for (std::size_t i = 0; i < Weights::kCount; ++i) {
    const auto name = Weights::kNames[i];
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors[i]->rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors[i]->cols()));
    // Mat is row-major, so data() is already in the on-disk order.
    out.write(reinterpret_cast<const char*>(tensors[i]->data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(tensors[i]->size())));
  }
}

void save_checkpoint(const Classifier& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  save_checkpoint(model, out);
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

Classifier load_checkpoint(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::kIngestRejected, "not a checkpoint file");
  }
  if (const auto version = get<std::uint32_t>(in); version != kCheckpointVersion) {
    throw Error(ErrorKind::kIngestRejected, "unsupported checkpoint version " + std::to_string(version));
  }
  Classifier m;
  m.config.vocab_size = get<std::int32_t>(in);
  m.config.d_model = get<std::int32_t>(in);
  m.config.n_heads = get<std::int32_t>(in);
  m.config.d_ff = get<std::int32_t>(in);
  m.config.max_len = get<std::int32_t>(in);
  m.config.dropout_rate = get<double>(in);
  m.config.validate();
  m.plan.base_seed = get<std::uint64_t>(in);
  m.plan.model_seed = get<std::uint64_t>(in);

  // Reference shapes come from a fresh init of the same config.
  const Weights shapes = init(m.config, m.plan).w;
  if (get<std::uint32_t>(in) != Weights::kCount) {
    throw Error(ErrorKind::kIngestRejected, "unexpected tensor count");
  }
  auto tensors = m.w.tensors();
  const auto expected = shapes.tensors();
  for (std::size_t i = 0; i < Weights::kCount; ++i) {
    const auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rows = get<std::uint32_t>(in);
    const auto cols = get<std::uint32_t>(in);
    if (!in || name != Weights::kNames[i] || rows != expected[i]->rows() || cols != expected[i]->cols()) {
      throw Error(ErrorKind::kIngestRejected, "tensor " + std::string(Weights::kNames[i]) + " malformed");
    }
    tensors[i]->resize(rows, cols);
    in.read(reinterpret_cast<char*>(tensors[i]->data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(rows) * cols));
    if (!in) throw Error(ErrorKind::kIngestRejected, "checkpoint truncated");
  }
  if (!m.w.all_finite()) throw Error(ErrorKind::kIngestRejected, "non-finite weights in checkpoint");
  return m;
}

Classifier load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return load_checkpoint(in);
}

}  // namespace stabilex::tinyformer
