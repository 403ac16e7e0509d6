#include "deltalab/delta.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

#include <json.hpp>

namespace deltalab {

void VectorSet::push_back(std::span<const double> v) {
  if (v.size() != dim_) throw Error("VectorSet: vector has wrong length");
  data_.insert(data_.end(), v.begin(), v.end());
}

std::string_view to_string(ProxyKind kind) {
  switch (kind) {
    case ProxyKind::OutputRow: return "output-row";
    case ProxyKind::TopKHidden: return "topk-hidden";
    case ProxyKind::FullGradient: return "full-gradient";
  }
  return "?";
}

std::string_view to_string(CentroidScope scope) {
  return scope == CentroidScope::PerGroup ? "per-group" : "batch-wide";
}

ProxyKind parse_proxy_kind(std::string_view name) {
  for (auto k : {ProxyKind::OutputRow, ProxyKind::TopKHidden, ProxyKind::FullGradient})
    if (to_string(k) == name) return k;
  throw Error("unknown proxy kind '" + std::string(name) + "'");
}

CentroidScope parse_centroid_scope(std::string_view name) {
  for (auto s : {CentroidScope::PerGroup, CentroidScope::BatchWide})
    if (to_string(s) == name) return s;
  throw Error("unknown centroid scope '" + std::string(name) + "'");
}

void DeltaConfig::validate() const {
  if (refinement_steps < 0) throw Error("delta.refinement_steps must be non-negative");
  if (!(lambda_min <= lambda_max)) throw Error("delta.lambda_min must not exceed delta.lambda_max");
  if (!(lambda_min >= 0.0)) throw Error("delta.lambda_min must be non-negative");
  if (!(eps_mass > 0.0) || !(eps_gamma > 0.0)) throw Error("delta epsilons must be positive");
  if (proxy_topk < 1) throw Error("delta.proxy_topk must be at least 1");
}

std::optional<Side> side_of(double advantage) {
  if (advantage > 0.0) return Side::Positive;
  if (advantage < 0.0) return Side::Negative;
  return std::nullopt;
}

SideCentroids weighted_centroids(const VectorSet& vectors, std::span<const double> advantages,
                                 std::span<const double> weights, double eps) {
  if (advantages.size() != vectors.size() || weights.size() != vectors.size())
    throw Error("centroids: one advantage and one weight per vector required");
  const std::size_t dim = vectors.dim();
  SideCentroids c;
  Vec sum_pos(dim, 0.0), sum_neg(dim, 0.0);
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    const auto side = side_of(advantages[k]);
    if (!side) continue;
    const double m = weights[k] * std::abs(advantages[k]);
    if (*side == Side::Positive) {
      c.mass_pos += m;
      axpy(m, vectors[k], sum_pos);
    } else {
      c.mass_neg += m;
      axpy(m, vectors[k], sum_neg);
    }
  }
  c.pos_valid = c.mass_pos > eps;
  c.neg_valid = c.mass_neg > eps;
  if (c.pos_valid) {
    for (double& x : sum_pos) x /= std::max(c.mass_pos, eps);
    c.pos = std::move(sum_pos);
  }
  if (c.neg_valid) {
    for (double& x : sum_neg) x /= std::max(c.mass_neg, eps);
    c.neg = std::move(sum_neg);
  }
  return c;
}

SideCentroids initial_centroids(const VectorSet& vectors, std::span<const double> advantages, double eps) {
  return weighted_centroids(vectors, advantages, Vec(vectors.size(), 1.0), eps);
}

SideCentroids refine_centroids(const VectorSet& vectors, std::span<const double> advantages,
                               std::span<const double> alpha, double eps) {
  return weighted_centroids(vectors, advantages, alpha, eps);
}

double distance_margin(std::span<const double> v, const SideCentroids& c, Side side) {
  if (!c.both_valid()) throw Error("distance margin: both side centroids must be valid");
  return squared_distance(v, c.opposite(side)) - squared_distance(v, c.own(side));
}

Vec distance_margins(const VectorSet& vectors, const SideCentroids& c, Side side) {
  Vec m;
  m.reserve(vectors.size());
  for (std::size_t k = 0; k < vectors.size(); ++k) m.push_back(distance_margin(vectors[k], c, side));
  return m;
}

namespace {

double population_variance(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double v = 0.0;
  for (double x : xs) v += (x - mean) * (x - mean);
  return v / n;
}

}  // namespace

Temperatures adaptive_temperatures(std::span<const double> margins_pos, std::span<const double> margins_neg,
                                   double eps_gamma) {
  if (margins_pos.empty() || margins_neg.empty())
    throw Error("adaptive temperatures: each side needs at least one margin");
  return {std::sqrt(std::max(population_variance(margins_pos), eps_gamma)),
          std::sqrt(std::max(population_variance(margins_neg), eps_gamma))};
}

double soft_assignment(double margin, double gamma) {
  if (!(gamma > 0.0)) throw Error("soft assignment: temperature must be positive");
  return sigmoid(margin / gamma);
}

std::vector<std::optional<double>> within_side_scores(const VectorSet& vectors,
                                                      std::span<const double> advantages,
                                                      const SideCentroids& c, const Temperatures& temps) {
  std::vector<std::optional<double>> alpha(vectors.size());
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    const auto side = side_of(advantages[k]);
    if (!side) continue;
    const bool valid = *side == Side::Positive ? c.pos_valid : c.neg_valid;
    if (!valid) throw Error("within-side score: own-side centroid is invalid");
    alpha[k] = sigmoid(-squared_distance(vectors[k], c.own(*side)) / temps.of(*side));
  }
  return alpha;
}

Vec normalize_coefficients(std::span<const double> lambda) {
  const double z = std::accumulate(lambda.begin(), lambda.end(), 0.0);
  const double n = static_cast<double>(lambda.size());
  Vec bar(lambda.size(), 1.0);
  if (!(z > 0.0)) return bar;
  for (std::size_t k = 0; k < lambda.size(); ++k) bar[k] = lambda[k] * n / z;
  return bar;
}

namespace {

// Which initial side centroids of a scope were valid. Only scopes with both
// sides valid produce scores.
struct ScopeResult {
  bool pos_valid = false;
  bool neg_valid = false;
};

class ScopeSolver {
 public:
  ScopeSolver(const VectorSet& vectors, std::span<const double> adv, const DeltaConfig& cfg)
      : v_(vectors), adv_(adv), cfg_(cfg) {
    for (std::size_t k = 0; k < v_.size(); ++k) sides_.push_back(side_of(adv_[k]));
  }

  ScopeResult run(std::vector<std::optional<double>>& alpha_out) {
    SideCentroids mu = initial_centroids(v_, adv_, cfg_.eps_mass);
    if (!mu.both_valid()) return {mu.pos_valid, mu.neg_valid};

    Vec margins = margins_for(mu);
    Temperatures gamma = temperatures_of(margins);
    if (!cfg_.adaptive_temperature) gamma = fixed_distance_scale(mu);

    for (int k = 0; k < cfg_.refinement_steps; ++k) {
      const Vec alpha = scores(margins, gamma);
      SideCentroids next = refine_centroids(v_, adv_, alpha, cfg_.eps_mass);
      // A side whose score mass vanished (possible under hard assignment)
      // keeps its previous centroid.
      if (!next.pos_valid) { next.pos = mu.pos; next.mass_pos = mu.mass_pos; next.pos_valid = true; }
      if (!next.neg_valid) { next.neg = mu.neg; next.mass_neg = mu.mass_neg; next.neg_valid = true; }
      // Lagged temperatures: statistics of this pass feed the next score step.
      if (cfg_.adaptive_temperature) gamma = temperatures_of(margins);
      mu = std::move(next);
      margins = margins_for(mu);
    }

    const Vec final_alpha = scores(margins, gamma);
    for (std::size_t k = 0; k < v_.size(); ++k)
      if (sides_[k]) alpha_out[k] = final_alpha[k];
    return {true, true};
  }

 private:
  Vec margins_for(const SideCentroids& mu) const {
    Vec m(v_.size(), 0.0);
    for (std::size_t k = 0; k < v_.size(); ++k) {
      if (!sides_[k]) continue;
      m[k] = cfg_.rule == ScoreRule::Contrastive ? distance_margin(v_[k], mu, *sides_[k])
                                                 : -squared_distance(v_[k], mu.own(*sides_[k]));
    }
    return m;
  }

  Temperatures temperatures_of(const Vec& margins) const {
    Vec pos, neg;
    for (std::size_t k = 0; k < v_.size(); ++k) {
      if (!sides_[k]) continue;
      (*sides_[k] == Side::Positive ? pos : neg).push_back(margins[k]);
    }
    return adaptive_temperatures(pos, neg, cfg_.eps_gamma);
  }

  // Non-adaptive ablation: one temperature shared by both sides and all
  // passes, equal to the mean squared distance of the scope's tokens to their
  // own initial centroid.
  Temperatures fixed_distance_scale(const SideCentroids& mu) const {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < v_.size(); ++k) {
      if (!sides_[k]) continue;
      s += squared_distance(v_[k], mu.own(*sides_[k]));
      ++n;
    }
    const double g = std::max(s / static_cast<double>(n), std::sqrt(cfg_.eps_gamma));
    return {g, g};
  }

  Vec scores(const Vec& margins, const Temperatures& gamma) const {
    Vec a(v_.size(), 0.0);
    for (std::size_t k = 0; k < v_.size(); ++k) {
      if (!sides_[k]) continue;
      if (cfg_.entropy_regularized) {
        a[k] = soft_assignment(margins[k], gamma.of(*sides_[k]));
      } else {
        a[k] = margins[k] > 0.0 ? 1.0 : (margins[k] < 0.0 ? 0.0 : 0.5);
      }
    }
    return a;
  }

  const VectorSet& v_;
  std::span<const double> adv_;
  const DeltaConfig& cfg_;
  std::vector<std::optional<Side>> sides_;
};

std::string provenance_of(const DeltaConfig& cfg) {
  std::string p = std::string(to_string(cfg.scope)) + "/" + std::string(to_string(cfg.proxy));
  if (cfg.proxy == ProxyKind::TopKHidden) p += "(" + std::to_string(cfg.proxy_topk) + ")";
  p += "/K=" + std::to_string(cfg.refinement_steps);
  if (cfg.rule == ScoreRule::WithinSide) p += "/within-side";
  if (!cfg.adaptive_temperature) p += "/no-adaptive-gamma";
  if (!cfg.entropy_regularized) p += "/no-entropy-reg";
  if (!cfg.range_map) p += "/no-range-map";
  return p;
}

}  // namespace

CoefficientSet compute_coefficients(const VectorSet& vectors, std::span<const double> advantages,
                                    std::span<const std::size_t> scope_ids, const DeltaConfig& config) {
  config.validate();
  const std::size_t n = vectors.size();
  if (advantages.size() != n) throw Error("coefficients: one advantage per token vector required");
  if (config.scope == CentroidScope::PerGroup && scope_ids.size() != n)
    throw Error("coefficients: one scope id per token vector required");

  CoefficientSet out;
  out.alpha.assign(n, std::nullopt);
  out.provenance = provenance_of(config);

  std::map<std::size_t, std::vector<std::size_t>> scopes;
  for (std::size_t k = 0; k < n; ++k)
    scopes[config.scope == CentroidScope::PerGroup ? scope_ids[k] : 0].push_back(k);

  for (const auto& [id, members] : scopes) {
    VectorSet sub(vectors.dim());
    Vec sub_adv;
    for (std::size_t k : members) {
      sub.push_back(vectors[k]);
      sub_adv.push_back(advantages[k]);
    }
    std::vector<std::optional<double>> sub_alpha(members.size());
    const ScopeResult r = ScopeSolver(sub, sub_adv, config).run(sub_alpha);
    if (!r.pos_valid && !r.neg_valid) {
      ++out.degenerate_scopes;
    } else if (!(r.pos_valid && r.neg_valid)) {
      ++out.one_sided_scopes;
    } else {
      for (std::size_t j = 0; j < members.size(); ++j) out.alpha[members[j]] = sub_alpha[j];
    }
  }

  const double lo = config.range_map ? config.lambda_min : 0.0;
  const double hi = config.range_map ? config.lambda_max : 1.0;
  out.lambda.resize(n);
  for (std::size_t k = 0; k < n; ++k)
    out.lambda[k] = out.alpha[k] ? lo + (hi - lo) * *out.alpha[k] : lo;
  out.lambda_bar = normalize_coefficients(out.lambda);
  return out;
}

VectorSet token_vectors(const LinearSoftmaxPolicy& snapshot, std::span<const TokenSlot> slots, ProxyKind proxy,
                        std::size_t topk) {
  const std::size_t dim = proxy == ProxyKind::FullGradient ? snapshot.param_count() : snapshot.feature_dim();
  VectorSet out(dim);
  for (const auto& s : slots) {
    const Features f = snapshot.features(s.context);
    switch (proxy) {
      case ProxyKind::OutputRow: out.push_back(snapshot.proxy_output_row(f, s.token)); break;
      case ProxyKind::TopKHidden: out.push_back(snapshot.proxy_topk_hidden(f, s.token, topk)); break;
      case ProxyKind::FullGradient: out.push_back(snapshot.token_gradient_full(f, s.token)); break;
    }
  }
  return out;
}

CoefficientSet compute_batch_coefficients(const LinearSoftmaxPolicy& snapshot, std::span<const TokenSlot> slots,
                                          const DeltaConfig& config) {
  const VectorSet vectors = token_vectors(snapshot, slots, config.proxy, config.proxy_topk);
  Vec adv;
  std::vector<std::size_t> scope;
  for (const auto& s : slots) {
    adv.push_back(s.advantage);
    scope.push_back(s.group);
  }
  return compute_coefficients(vectors, adv, scope, config);
}

CoefficientSet random_coefficients(std::size_t token_count, double lambda_min, double lambda_max, Rng& rng) {
  if (!(lambda_min < lambda_max)) throw Error("random coefficients: lambda_min must be below lambda_max");
  CoefficientSet c;
  c.alpha.assign(token_count, std::nullopt);
  c.lambda.resize(token_count);
  for (double& l : c.lambda) l = lambda_min + (lambda_max - lambda_min) * rng.uniform();
  c.lambda_bar = normalize_coefficients(c.lambda);
  c.provenance = "random";
  return c;
}

void write_coefficient_lines(std::span<const TokenSlot> slots, const CoefficientSet& coefficients, std::ostream& os) {
  if (slots.size() != coefficients.size()) throw Error("write_coefficient_lines: slot and coefficient counts differ");
  for (std::size_t k = 0; k < slots.size(); ++k) {
    nlohmann::ordered_json rec;
    rec["group"] = slots[k].group;
    rec["response"] = slots[k].response;
    rec["t"] = slots[k].t;
    rec["alpha"] = coefficients.alpha[k] ? nlohmann::ordered_json(*coefficients.alpha[k]) : nlohmann::ordered_json();
    rec["lambda"] = coefficients.lambda[k];
    rec["lambda_bar"] = coefficients.lambda_bar[k];
    os << rec.dump() << '\n';
  }
}

}  // namespace deltalab
