#include "udg/tiny_seq2seq.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace udg {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using MatMap = Eigen::Map<MatrixXd>;
using ConstMatMap = Eigen::Map<const MatrixXd>;
using VecMap = Eigen::Map<VectorXd>;
using ConstVecMap = Eigen::Map<const VectorXd>;

constexpr std::string_view kMagic = "UDGTINY1\n";

struct TinyEncoded final : EncodedSource {
  std::vector<TokenId> ids;
  MatrixXd inputs;  // 3D x L, stacked embeddings of left, centre and right neighbours
  MatrixXd states;  // H x L
};

void log_softmax_inplace(VectorXd& z) {
  const double max = z.maxCoeff();
  const double lse = max + std::log((z.array() - max).exp().sum());
  z.array() -= lse;
}

}  // namespace

// Offsets of every parameter block inside the flat parameter vector.
struct TinySeq2Seq::Layout {
  Index V, D, H;
  size_t embed, enc_w, enc_b, dec_w, dec_b, mix_w, mix_b, vocab_w, vocab_b, total;

  Layout(size_t vocab, const TinyModelConfig& c)
      : V(static_cast<Index>(vocab)), D(c.embedding_dim), H(c.hidden_dim) {
    size_t at = 0;
    auto take = [&at](Index n) {
      const size_t here = at;
      at += static_cast<size_t>(n);
      return here;
    };
    embed = take(D * V);
    enc_w = take(H * 3 * D);
    enc_b = take(H);
    dec_w = take(H * 3 * D);
    dec_b = take(H);
    mix_w = take(H * 2 * H);
    mix_b = take(H);
    vocab_w = take(V * H);
    vocab_b = take(V);
    total = at;
  }

  template <typename P>
  auto mat(P* base, size_t offset, Index rows, Index cols) const {
    if constexpr (std::is_const_v<P>) {
      return ConstMatMap(base + offset, rows, cols);
    } else {
      return MatMap(base + offset, rows, cols);
    }
  }
  template <typename P>
  auto vec(P* base, size_t offset, Index n) const {
    if constexpr (std::is_const_v<P>) {
      return ConstVecMap(base + offset, n);
    } else {
      return VecMap(base + offset, n);
    }
  }
};

TinySeq2Seq::TinySeq2Seq(Vocabulary vocab, TinyModelConfig config)
    : vocab_(std::move(vocab)), config_(config) {
  if (config_.embedding_dim < 1 || config_.hidden_dim < 1) {
    throw std::invalid_argument("tiny model dimensions must be positive");
  }
  if (config_.max_target_tokens < 1) throw std::invalid_argument("max_target_tokens must be >= 1");
  initialise();
}

void TinySeq2Seq::initialise() {
  const Layout L(vocab_.size(), config_);
  params_.assign(L.total, 0.0);
  std::mt19937_64 rng(config_.seed);
  auto fill = [&](size_t offset, Index rows, Index cols, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index i = 0; i < rows * cols; ++i) params_[offset + static_cast<size_t>(i)] = dist(rng);
  };
  auto xavier = [](Index fan_in, Index fan_out) { return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)); };
  fill(L.embed, L.D, L.V, 0.5);
  fill(L.enc_w, L.H, 3 * L.D, xavier(3 * L.D, L.H));
  fill(L.dec_w, L.H, 3 * L.D, xavier(3 * L.D, L.H));
  fill(L.mix_w, L.H, 2 * L.H, xavier(2 * L.H, L.H));
  fill(L.vocab_w, L.V, L.H, xavier(L.H, L.V));
}

std::vector<TokenId> TinySeq2Seq::encode_source_ids(const SourceFields& source) const {
  auto passage = vocab_.encode(source.passage);
  const auto question = vocab_.encode(source.question);
  const auto condition = vocab_.encode(source.condition);
  const size_t fixed = question.size() + condition.size() + 2;
  const size_t budget = config_.max_source_tokens > fixed ? config_.max_source_tokens - fixed : 0;
  if (passage.size() > budget) passage.resize(budget);
  std::vector<TokenId> ids;
  ids.reserve(passage.size() + fixed);
  ids.insert(ids.end(), passage.begin(), passage.end());
  ids.push_back(Vocabulary::kSep);
  ids.insert(ids.end(), question.begin(), question.end());
  ids.push_back(Vocabulary::kSep);
  ids.insert(ids.end(), condition.begin(), condition.end());
  return ids;
}

std::shared_ptr<const EncodedSource> TinySeq2Seq::encode(const SourceFields& source) const {
  const Layout L(vocab_.size(), config_);
  const double* p = params_.data();
  const auto E = L.mat(p, L.embed, L.D, L.V);
  auto enc = std::make_shared<TinyEncoded>();
  enc->ids = encode_source_ids(source);
  const auto n = static_cast<Index>(enc->ids.size());
  enc->inputs = MatrixXd::Zero(3 * L.D, n);
  for (Index j = 0; j < n; ++j) {
    if (j > 0) enc->inputs.col(j).segment(0, L.D) = E.col(enc->ids[static_cast<size_t>(j - 1)]);
    enc->inputs.col(j).segment(L.D, L.D) = E.col(enc->ids[static_cast<size_t>(j)]);
    if (j + 1 < n) enc->inputs.col(j).segment(2 * L.D, L.D) = E.col(enc->ids[static_cast<size_t>(j + 1)]);
  }
  const auto W = L.mat(p, L.enc_w, L.H, 3 * L.D);
  const auto b = L.vec(p, L.enc_b, L.H);
  enc->states = ((W * enc->inputs).colwise() + b).array().tanh().matrix();
  return enc;
}

namespace {

struct StepCache {
  TokenId prev = 0;
  TokenId prev2 = -1;
  TokenId task = 0;
  VectorXd input;   // 3D
  VectorXd state;   // H
  VectorXd attention;
  VectorXd context; // H
  VectorXd mixed_in;  // 2H
  VectorXd mixed;   // H
  VectorXd logits;  // V
};

}  // namespace

LogitVector TinySeq2Seq::next_token_logits(const EncodedSource& source, std::span<const TokenId> decoder_prefix) const {
  const auto* enc = dynamic_cast<const TinyEncoded*>(&source);
  if (enc == nullptr) throw std::invalid_argument("encoded source was not produced by TinySeq2Seq");
  if (decoder_prefix.empty()) throw std::invalid_argument("decoder prefix must start with a task token");
  const Layout L(vocab_.size(), config_);
  const double* p = params_.data();
  const auto E = L.mat(p, L.embed, L.D, L.V);
  const size_t i = decoder_prefix.size() - 1;
  VectorXd input = VectorXd::Zero(3 * L.D);
  input.segment(0, L.D) = E.col(decoder_prefix[i]);
  if (i >= 1) input.segment(L.D, L.D) = E.col(decoder_prefix[i - 1]);
  input.segment(2 * L.D, L.D) = E.col(decoder_prefix[0]);
  const VectorXd state =
      (L.mat(p, L.dec_w, L.H, 3 * L.D) * input + L.vec(p, L.dec_b, L.H)).array().tanh().matrix();
  VectorXd scores = enc->states.transpose() * state / std::sqrt(static_cast<double>(L.H));
  log_softmax_inplace(scores);
  const VectorXd attention = scores.array().exp().matrix();
  VectorXd mixed_in(2 * L.H);
  mixed_in << state, enc->states * attention;
  const VectorXd mixed =
      (L.mat(p, L.mix_w, L.H, 2 * L.H) * mixed_in + L.vec(p, L.mix_b, L.H)).array().tanh().matrix();
  const VectorXd logits = L.mat(p, L.vocab_w, L.V, L.H) * mixed + L.vec(p, L.vocab_b, L.V);
  return LogitVector(logits.data(), logits.data() + logits.size());
}

double TinySeq2Seq::accumulate_gradient(const SourceFields& source, TokenId task, std::span<const TokenId> target,
                                        std::span<double> gradient) const {
  if (target.empty()) throw std::invalid_argument("training target is empty");
  const Layout L(vocab_.size(), config_);
  const bool want_grad = !gradient.empty();
  if (want_grad && gradient.size() != params_.size()) throw std::invalid_argument("gradient size mismatch");
  const double* p = params_.data();
  const auto E = L.mat(p, L.embed, L.D, L.V);
  const auto Wdec = L.mat(p, L.dec_w, L.H, 3 * L.D);
  const auto bdec = L.vec(p, L.dec_b, L.H);
  const auto Wmix = L.mat(p, L.mix_w, L.H, 2 * L.H);
  const auto bmix = L.vec(p, L.mix_b, L.H);
  const auto Wvoc = L.mat(p, L.vocab_w, L.V, L.H);
  const auto bvoc = L.vec(p, L.vocab_b, L.V);
  const double scale = 1.0 / std::sqrt(static_cast<double>(L.H));

  const auto encoded = std::static_pointer_cast<const TinyEncoded>(encode(source));
  const MatrixXd& states = encoded->states;
  const Index n = states.cols();

  // Forward over all target positions. Position i sees prefix
  // [task, target[0..i-1]].
  std::vector<StepCache> steps(target.size());
  double loss = 0.0;
  for (size_t i = 0; i < target.size(); ++i) {
    StepCache& c = steps[i];
    c.task = task;
    c.prev = i == 0 ? task : target[i - 1];
    c.prev2 = i == 0 ? -1 : (i == 1 ? task : target[i - 2]);
    c.input = VectorXd::Zero(3 * L.D);
    c.input.segment(0, L.D) = E.col(c.prev);
    if (c.prev2 >= 0) c.input.segment(L.D, L.D) = E.col(c.prev2);
    c.input.segment(2 * L.D, L.D) = E.col(task);
    c.state = (Wdec * c.input + bdec).array().tanh().matrix();
    VectorXd scores = states.transpose() * c.state * scale;
    log_softmax_inplace(scores);
    c.attention = scores.array().exp().matrix();
    c.context = states * c.attention;
    c.mixed_in.resize(2 * L.H);
    c.mixed_in << c.state, c.context;
    c.mixed = (Wmix * c.mixed_in + bmix).array().tanh().matrix();
    c.logits = Wvoc * c.mixed + bvoc;
    log_softmax_inplace(c.logits);
    loss -= c.logits[target[i]];
  }
  if (!want_grad) return loss;

  double* g = gradient.data();
  auto gE = L.mat(g, L.embed, L.D, L.V);
  auto gEncW = L.mat(g, L.enc_w, L.H, 3 * L.D);
  auto gEncB = L.vec(g, L.enc_b, L.H);
  auto gDecW = L.mat(g, L.dec_w, L.H, 3 * L.D);
  auto gDecB = L.vec(g, L.dec_b, L.H);
  auto gMixW = L.mat(g, L.mix_w, L.H, 2 * L.H);
  auto gMixB = L.vec(g, L.mix_b, L.H);
  auto gVocW = L.mat(g, L.vocab_w, L.V, L.H);
  auto gVocB = L.vec(g, L.vocab_b, L.V);

  MatrixXd d_states = MatrixXd::Zero(L.H, n);
  for (size_t i = 0; i < target.size(); ++i) {
    const StepCache& c = steps[i];
    VectorXd d_logits = c.logits.array().exp().matrix();  // softmax
    d_logits[target[i]] -= 1.0;
    gVocW.noalias() += d_logits * c.mixed.transpose();
    gVocB += d_logits;
    const VectorXd d_mixed_pre = ((Wvoc.transpose() * d_logits).array() * (1.0 - c.mixed.array().square())).matrix();
    gMixW.noalias() += d_mixed_pre * c.mixed_in.transpose();
    gMixB += d_mixed_pre;
    const VectorXd d_mixed_in = Wmix.transpose() * d_mixed_pre;
    VectorXd d_state = d_mixed_in.head(L.H);
    const VectorXd d_context = d_mixed_in.tail(L.H);

    d_states.noalias() += d_context * c.attention.transpose();
    const VectorXd d_attention = states.transpose() * d_context;
    const double weighted = c.attention.dot(d_attention);
    const VectorXd d_scores = (c.attention.array() * (d_attention.array() - weighted)).matrix() * scale;
    d_state.noalias() += states * d_scores;
    d_states.noalias() += c.state * d_scores.transpose();

    const VectorXd d_state_pre = (d_state.array() * (1.0 - c.state.array().square())).matrix();
    gDecW.noalias() += d_state_pre * c.input.transpose();
    gDecB += d_state_pre;
    const VectorXd d_input = Wdec.transpose() * d_state_pre;
    gE.col(c.prev) += d_input.segment(0, L.D);
    if (c.prev2 >= 0) gE.col(c.prev2) += d_input.segment(L.D, L.D);
    gE.col(c.task) += d_input.segment(2 * L.D, L.D);
  }

  const MatrixXd d_enc_pre = (d_states.array() * (1.0 - states.array().square())).matrix();
  gEncW.noalias() += d_enc_pre * encoded->inputs.transpose();
  gEncB += d_enc_pre.rowwise().sum();
  const MatrixXd d_inputs = L.mat(p, L.enc_w, L.H, 3 * L.D).transpose() * d_enc_pre;
  const auto& ids = encoded->ids;
  for (Index j = 0; j < n; ++j) {
    if (j > 0) gE.col(ids[static_cast<size_t>(j - 1)]) += d_inputs.col(j).segment(0, L.D);
    gE.col(ids[static_cast<size_t>(j)]) += d_inputs.col(j).segment(L.D, L.D);
    if (j + 1 < n) gE.col(ids[static_cast<size_t>(j + 1)]) += d_inputs.col(j).segment(2 * L.D, L.D);
  }
  return loss;
}

std::string TinySeq2Seq::snapshot() const {
  nlohmann::json header{{"kind", kind()},
                        {"embedding_dim", config_.embedding_dim},
                        {"hidden_dim", config_.hidden_dim},
                        {"max_source_tokens", config_.max_source_tokens},
                        {"max_target_tokens", config_.max_target_tokens},
                        {"seed", config_.seed},
                        {"vocab", vocab_.tokens()},
                        {"param_count", params_.size()}};
  std::string out(kMagic);
  out += header.dump();
  out += '\n';
  const size_t bytes = params_.size() * sizeof(double);
  const size_t at = out.size();
  out.resize(at + bytes);
  std::memcpy(out.data() + at, params_.data(), bytes);
  return out;
}

void TinySeq2Seq::restore(std::string_view snapshot) {
  if (!snapshot.starts_with(kMagic)) throw std::invalid_argument("not a tiny_seq2seq snapshot");
  const size_t header_end = snapshot.find('\n', kMagic.size());
  if (header_end == std::string_view::npos) throw std::invalid_argument("truncated snapshot header");
  const auto header = nlohmann::json::parse(snapshot.substr(kMagic.size(), header_end - kMagic.size()));
  TinyModelConfig config;
  config.embedding_dim = header.at("embedding_dim").get<int>();
  config.hidden_dim = header.at("hidden_dim").get<int>();
  config.max_source_tokens = header.at("max_source_tokens").get<size_t>();
  config.max_target_tokens = header.at("max_target_tokens").get<size_t>();
  config.seed = header.at("seed").get<uint64_t>();
  Vocabulary vocab = Vocabulary::from_tokens(header.at("vocab").get<std::vector<std::string>>());
  const auto count = header.at("param_count").get<size_t>();
  if (Layout(vocab.size(), config).total != count) throw std::invalid_argument("snapshot parameter count mismatch");
  const std::string_view body = snapshot.substr(header_end + 1);
  if (body.size() != count * sizeof(double)) throw std::invalid_argument("snapshot body has wrong size");
  std::vector<double> params(count);
  std::memcpy(params.data(), body.data(), body.size());
  vocab_ = std::move(vocab);
  config_ = config;
  params_ = std::move(params);
}

std::unique_ptr<TinySeq2Seq> TinySeq2Seq::from_snapshot(std::string_view snapshot) {
  auto model = std::make_unique<TinySeq2Seq>(Vocabulary(), TinyModelConfig{1, 1, 8, 1, 0});
  model->restore(snapshot);
  return model;
}

std::unique_ptr<StudentModel> TinySeq2Seq::clone() const { return std::make_unique<TinySeq2Seq>(*this); }

std::unique_ptr<StudentModel> load_student(std::string_view snapshot) {
  if (snapshot.starts_with(kMagic)) return TinySeq2Seq::from_snapshot(snapshot);
  throw std::invalid_argument("unrecognised student snapshot format");
}

}  // namespace udg
