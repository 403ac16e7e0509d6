#include "deltalab/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace deltalab {

Vocabulary::Vocabulary(std::size_t size_, TokenId eos_) : size(size_), eos(eos_) {
  if (size < 2) throw Error("Vocabulary: size must be at least 2");
  if (eos >= size) throw Error("Vocabulary: end-of-sequence id out of range");
}

ContextFeatureMap::ContextFeatureMap(std::size_t vocab_size, std::size_t window)
    : vocab_size_(vocab_size), window_(window) {
  if (vocab_size < 2) throw Error("ContextFeatureMap: vocab size must be at least 2");
}

std::vector<std::size_t> ContextFeatureMap::active(std::span<const TokenId> context) const {
  std::vector<std::size_t> idx;
  idx.reserve(window_ + 1);
  const std::size_t n = context.size();
  for (std::size_t slot = 0; slot < window_ && slot < n; ++slot) {
    const TokenId tok = context[n - 1 - slot];
    if (tok >= vocab_size_) throw Error("ContextFeatureMap: token id out of range");
    idx.push_back(slot * vocab_size_ + tok);
  }
  idx.push_back(dim() - 1);
  return idx;
}

Features ContextFeatureMap::features(std::span<const TokenId> context) const {
  Features f{Vec(dim(), 0.0)};
  for (std::size_t i : active(context)) f.h[i] = 1.0;
  return f;
}

LinearSoftmaxPolicy::LinearSoftmaxPolicy(Vocabulary vocab, ContextFeatureMap feature_map)
    : vocab_(vocab), map_(feature_map), dim_(feature_map.dim()), weights_(vocab.size * dim_, 0.0) {
  if (feature_map.vocab_size() != vocab.size)
    throw Error("LinearSoftmaxPolicy: feature map vocabulary differs from policy vocabulary");
}

LinearSoftmaxPolicy::LinearSoftmaxPolicy(Vocabulary vocab, std::size_t feature_dim)
    : vocab_(vocab), dim_(feature_dim), weights_(vocab.size * feature_dim, 0.0) {
  if (feature_dim == 0) throw Error("LinearSoftmaxPolicy: feature dimension must be positive");
}

void LinearSoftmaxPolicy::check_token(TokenId token) const {
  if (!vocab_.contains(token))
    throw Error("token id " + std::to_string(token) + " outside vocabulary of size " +
                std::to_string(vocab_.size));
}

Features LinearSoftmaxPolicy::features(std::span<const TokenId> context) const {
  if (!map_) throw Error("LinearSoftmaxPolicy: policy has no context feature map");
  return map_->features(context);
}

double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

Vec softmax(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  Vec p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    s += p[i];
  }
  for (double& v : p) v /= s;
  return p;
}

double entropy_of(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

Vec LinearSoftmaxPolicy::logits(const Features& f) const {
  if (f.h.size() != dim_) throw Error("LinearSoftmaxPolicy: feature vector has wrong length");
  Vec z(vocab_.size);
  for (std::size_t y = 0; y < vocab_.size; ++y) z[y] = dot(row(static_cast<TokenId>(y)), f.h);
  return z;
}

Vec LinearSoftmaxPolicy::probabilities(const Features& f) const { return softmax(logits(f)); }

double LinearSoftmaxPolicy::log_prob(const Features& f, TokenId token) const {
  check_token(token);
  const Vec z = logits(f);
  return z[token] - log_sum_exp(z);
}

Vec LinearSoftmaxPolicy::token_gradient_full(const Features& f, TokenId token) const {
  check_token(token);
  const Vec p = probabilities(f);
  Vec g(weights_.size(), 0.0);
  for (std::size_t y = 0; y < vocab_.size; ++y) {
    const double coef = (y == token ? 1.0 : 0.0) - p[y];
    double* out = g.data() + y * dim_;
    for (std::size_t j = 0; j < dim_; ++j) out[j] = coef * f.h[j];
  }
  return g;
}

Vec LinearSoftmaxPolicy::proxy_output_row(const Features& f, TokenId token) const {
  check_token(token);
  const double scale = 1.0 - probabilities(f)[token];
  Vec v(f.h);
  for (double& x : v) x *= scale;
  return v;
}

Vec LinearSoftmaxPolicy::proxy_topk_hidden(const Features& f, TokenId token, std::size_t k) const {
  check_token(token);
  if (k < 1 || k > vocab_.size)
    throw Error("proxy_topk_hidden: K must lie in [1, vocabulary size]");
  const Vec z = logits(f);
  std::vector<TokenId> order(vocab_.size);
  std::iota(order.begin(), order.end(), TokenId{0});
  std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return z[a] > z[b]; });
  order.resize(k);
  Vec top_z(k);
  for (std::size_t i = 0; i < k; ++i) top_z[i] = z[order[i]];
  const Vec pt = softmax(top_z);
  Vec v(row(token).begin(), row(token).end());
  for (std::size_t i = 0; i < k; ++i) axpy(-pt[i], row(order[i]), v);
  return v;
}

TokenId LinearSoftmaxPolicy::sample_token(const Features& f, Rng& rng, double temperature,
                                          double top_p) const {
  if (!(temperature > 0.0)) throw Error("sample_token: temperature must be positive");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error("sample_token: top_p must lie in (0, 1]");
  Vec z = logits(f);
  for (double& v : z) v /= temperature;
  const Vec p = softmax(z);

  std::vector<TokenId> order(vocab_.size);
  std::iota(order.begin(), order.end(), TokenId{0});
  std::size_t keep = order.size();
  if (top_p < 1.0) {
    std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return p[a] > p[b]; });
    double cum = 0.0;
    for (keep = 0; keep < order.size();) {
      cum += p[order[keep++]];
      if (cum >= top_p) break;
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < keep; ++i) total += p[order[i]];
  const double u = rng.uniform() * total;
  double cum = 0.0;
  TokenId last_nonzero = order[0];
  for (std::size_t i = 0; i < keep; ++i) {
    const double pi = p[order[i]];
    if (pi <= 0.0) continue;
    last_nonzero = order[i];
    cum += pi;
    if (u < cum) return order[i];
  }
  return last_nonzero;
}

double LinearSoftmaxPolicy::entropy(const Features& f) const { return entropy_of(probabilities(f)); }

namespace {

constexpr char kMagic[8] = {'D', 'L', 'T', 'A', 'C', 'K', 'P', 'T'};

template <typename T>
void write_le(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const std::filesystem::path& path) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    throw Error("checkpoint " + path.string() + ": truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void save_checkpoint(const LinearSoftmaxPolicy& policy, const std::filesystem::path& path) {
  const auto& map = policy.feature_map();
  if (!map) throw Error("save_checkpoint: only context-mapped policies can be checkpointed");
  if (policy.vocab().eos != policy.vocab().size - 1)
    throw Error("save_checkpoint: end-of-sequence id must be the last vocabulary entry");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(os, kCheckpointVersion);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(policy.vocab().size));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(policy.feature_dim()));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(map->window()));
  for (double w : policy.params()) write_le<double>(os, w);
  if (!os) throw Error("failed writing checkpoint: " + path.string());
}

LinearSoftmaxPolicy load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw Error("checkpoint " + path.string() + ": not a deltalab checkpoint");
  const auto version = read_le<std::uint32_t>(is, path);
  if (version != kCheckpointVersion)
    throw Error("checkpoint " + path.string() + ": format version " + std::to_string(version) +
                " does not match supported version " + std::to_string(kCheckpointVersion));
  const auto vocab = read_le<std::uint32_t>(is, path);
  const auto dim = read_le<std::uint32_t>(is, path);
  const auto window = read_le<std::uint32_t>(is, path);
  const ContextFeatureMap map(vocab, window);
  if (map.dim() != dim)
    throw Error("checkpoint " + path.string() + ": feature dim " + std::to_string(dim) +
                " inconsistent with window " + std::to_string(window));
  LinearSoftmaxPolicy policy(Vocabulary(vocab, static_cast<TokenId>(vocab - 1)), map);
  for (double& w : policy.params()) {
    w = read_le<double>(is, path);
    if (!std::isfinite(w)) throw Error("checkpoint " + path.string() + ": non-finite weight");
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw Error("checkpoint " + path.string() + ": trailing bytes after weights");
  return policy;
}

}  // namespace deltalab
