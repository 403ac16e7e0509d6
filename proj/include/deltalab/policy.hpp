#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>

#include "deltalab/common.hpp"

namespace deltalab {

struct Vocabulary {
  std::size_t size = 0;
  TokenId eos = 0;

  Vocabulary(std::size_t size, TokenId eos);
  bool contains(TokenId t) const { return t < size; }
};

/// Dense feature vector h fed to the softmax head.
struct Features {
  Vec h;
};

/// Concatenated one-hot encodings of the last `window` tokens followed by a
/// constant bias feature. Slot 0 holds the most recent token. Positions
/// before the start of the context encode as an all-zero block.
class ContextFeatureMap {
 public:
  ContextFeatureMap(std::size_t vocab_size, std::size_t window);

  std::size_t dim() const { return window_ * vocab_size_ + 1; }
  std::size_t window() const { return window_; }
  std::size_t vocab_size() const { return vocab_size_; }

  Features features(std::span<const TokenId> context) const;
  /// Indices of the nonzero (unit) entries of features(context), bias last.
  std::vector<std::size_t> active(std::span<const TokenId> context) const;

 private:
  std::size_t vocab_size_;
  std::size_t window_;
};

/// Linear softmax policy: logits z = W h, p = softmax(z). W is stored
/// row-major (one row per vocabulary entry), which is also the canonical
/// flat-parameter order for gradients, update directions and centroids.
class LinearSoftmaxPolicy {
 public:
  LinearSoftmaxPolicy(Vocabulary vocab, ContextFeatureMap feature_map);
  /// Raw-feature policy without a context map; only the Features overloads work.
  LinearSoftmaxPolicy(Vocabulary vocab, std::size_t feature_dim);

  const Vocabulary& vocab() const { return vocab_; }
  std::size_t feature_dim() const { return dim_; }
  std::size_t param_count() const { return weights_.size(); }
  const std::optional<ContextFeatureMap>& feature_map() const { return map_; }

  std::span<const double> params() const { return weights_; }
  std::span<double> params() { return weights_; }
  std::span<const double> row(TokenId y) const { return {weights_.data() + y * dim_, dim_}; }
  double& at(TokenId y, std::size_t j) { return weights_[y * dim_ + j]; }

  Features features(std::span<const TokenId> context) const;

  Vec logits(const Features& f) const;
  Vec probabilities(const Features& f) const;
  Vec probabilities(std::span<const TokenId> context) const { return probabilities(features(context)); }

  double log_prob(const Features& f, TokenId token) const;
  double log_prob(std::span<const TokenId> context, TokenId token) const {
    return log_prob(features(context), token);
  }

  /// d/dW log p(token) = (e_token - p) h^T, flattened row-major.
  Vec token_gradient_full(const Features& f, TokenId token) const;
  Vec token_gradient_full(std::span<const TokenId> context, TokenId token) const {
    return token_gradient_full(features(context), token);
  }

  /// Gradient with respect to the sampled token's own row: (1 - p(token)) h.
  Vec proxy_output_row(const Features& f, TokenId token) const;
  Vec proxy_output_row(std::span<const TokenId> context, TokenId token) const {
    return proxy_output_row(features(context), token);
  }

  /// W_token - sum_{j in topK} p~(j) W_j, where p~ is the softmax renormalised
  /// over the K largest logits (ties broken toward the smaller token id).
  Vec proxy_topk_hidden(const Features& f, TokenId token, std::size_t k) const;
  Vec proxy_topk_hidden(std::span<const TokenId> context, TokenId token, std::size_t k) const {
    return proxy_topk_hidden(features(context), token, k);
  }

  /// Draws from softmax(z / temperature) truncated to the nucleus of mass top_p.
  TokenId sample_token(const Features& f, Rng& rng, double temperature = 1.0, double top_p = 1.0) const;
  TokenId sample_token(std::span<const TokenId> context, Rng& rng, double temperature = 1.0,
                       double top_p = 1.0) const {
    return sample_token(features(context), rng, temperature, top_p);
  }

  /// Shannon entropy of the next-token distribution, in nats.
  double entropy(const Features& f) const;
  double entropy(std::span<const TokenId> context) const { return entropy(features(context)); }

 private:
  void check_token(TokenId token) const;

  Vocabulary vocab_;
  std::optional<ContextFeatureMap> map_;
  std::size_t dim_;
  Vec weights_;
};

/// Log-sum-exp with max subtraction.
double log_sum_exp(std::span<const double> z);
Vec softmax(std::span<const double> z);
double entropy_of(std::span<const double> p);

/// Frozen copy of the policy parameters (theta_old). Cheap to copy; the
/// underlying policy is immutable once captured.
class PolicySnapshot {
 public:
  static PolicySnapshot capture(const LinearSoftmaxPolicy& policy) {
    return PolicySnapshot(std::make_shared<const LinearSoftmaxPolicy>(policy));
  }
  const LinearSoftmaxPolicy& policy() const { return *policy_; }
  const LinearSoftmaxPolicy* operator->() const { return policy_.get(); }

 private:
  explicit PolicySnapshot(std::shared_ptr<const LinearSoftmaxPolicy> p) : policy_(std::move(p)) {}
  std::shared_ptr<const LinearSoftmaxPolicy> policy_;
};

// Checkpoint file: 8-byte magic "DLTACKPT", then little-endian uint32
// {format version, vocab size, feature dim, window}, then vocab*dim
// little-endian float64 entries of W in row-major order. The end-of-sequence
// id is always vocab size - 1.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const LinearSoftmaxPolicy& policy, const std::filesystem::path& path);
LinearSoftmaxPolicy load_checkpoint(const std::filesystem::path& path);

}  // namespace deltalab
