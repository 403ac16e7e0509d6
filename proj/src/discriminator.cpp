#include "deltalab/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace deltalab {

UpdateDirection local_update_direction(const VectorSet& token_gradients, std::span<const double> advantages,
                                       std::span<const double> rho, std::string provenance) {
  if (token_gradients.size() == 0) throw Error("update direction: empty batch");
  if (advantages.size() != token_gradients.size() || rho.size() != token_gradients.size())
    throw Error("update direction: one advantage and one weight per token required");
  UpdateDirection d;
  d.delta.assign(token_gradients.dim(), 0.0);
  for (std::size_t k = 0; k < token_gradients.size(); ++k) {
    const double c = rho[k] * advantages[k];
    if (c != 0.0) axpy(c, token_gradients[k], d.delta);
  }
  d.scale = norm(d.delta);
  d.provenance = std::move(provenance);
  return d;
}

double centroid_decomposition_residual(const UpdateDirection& direction, const SideCentroids& c) {
  if (!c.both_valid()) throw Error("centroid decomposition: both side centroids must be valid");
  Vec recon(direction.delta.size(), 0.0);
  axpy(c.mass_pos, c.pos, recon);
  axpy(-c.mass_neg, c.neg, recon);
  Vec r = direction.delta;
  axpy(-1.0, recon, r);
  const double n = norm(direction.delta);
  return n == 0.0 ? norm(r) : norm(r) / n;
}

double predict_logprob_delta(const LinearSoftmaxPolicy& snapshot, const Probe& probe,
                             std::span<const double> delta, double eta) {
  const Vec g = snapshot.token_gradient_full(probe.context, probe.token);
  return eta * dot(g, delta);
}

double empirical_logprob_delta(const LinearSoftmaxPolicy& snapshot, const Probe& probe,
                               std::span<const double> delta, double eta) {
  LinearSoftmaxPolicy moved = snapshot;
  axpy(eta, delta, moved.params());
  return moved.log_prob(probe.context, probe.token) - snapshot.log_prob(probe.context, probe.token);
}

SideScores side_scores(std::span<const double> gradient, const SideCentroids& c) {
  if (!c.both_valid()) throw Error("side scores: both side centroids must be valid");
  return {c.mass_pos * dot(gradient, c.pos), c.mass_neg * dot(gradient, c.neg)};
}

double centroid_contrast(const SideCentroids& c) {
  if (!c.both_valid()) throw Error("centroid contrast: both side centroids must be valid");
  const double denom = norm(c.pos) + norm(c.neg);
  return denom == 0.0 ? 0.0 : std::sqrt(squared_distance(c.pos, c.neg)) / denom;
}

double sign_agreement(std::span<const ProbeRecord> records, double noise_floor, std::size_t* compared) {
  std::size_t n = 0, agree = 0;
  for (const auto& r : records) {
    if (std::abs(r.predicted) < noise_floor) continue;
    ++n;
    if ((r.predicted > 0.0) == (r.actual > 0.0)) ++agree;
  }
  if (compared) *compared = n;
  return n == 0 ? 1.0 : static_cast<double>(agree) / static_cast<double>(n);
}

DiscriminatorReport discriminator_report(const LinearSoftmaxPolicy& snapshot, std::span<const TokenSlot> slots,
                                         std::span<const double> rho, std::span<const Probe> probes,
                                         double eta, std::string provenance) {
  if (!(eta > 0.0)) throw Error("discriminator report: step size must be positive");
  const VectorSet grads = token_vectors(snapshot, slots, ProxyKind::FullGradient);
  Vec adv;
  for (const auto& s : slots) adv.push_back(s.advantage);

  DiscriminatorReport rep;
  rep.eta = eta;
  rep.provenance = provenance;
  const UpdateDirection dir = local_update_direction(grads, adv, rho, std::move(provenance));
  rep.direction_norm = dir.scale;

  const SideCentroids c = weighted_centroids(grads, adv, rho);
  rep.mass_pos = c.mass_pos;
  rep.mass_neg = c.mass_neg;
  const bool sided = c.both_valid();
  if (sided) {
    rep.decomposition_residual = centroid_decomposition_residual(dir, c);
    rep.centroid_contrast = centroid_contrast(c);
  }

  for (const auto& p : probes) {
    ProbeRecord r;
    r.probe = p;
    const Vec g = snapshot.token_gradient_full(p.context, p.token);
    r.predicted = eta * dot(g, dir.delta);
    r.actual = empirical_logprob_delta(snapshot, p, dir.delta, eta);
    if (sided) r.scores = side_scores(g, c);
    rep.probes.push_back(std::move(r));
  }
  rep.sign_agreement = sign_agreement(rep.probes, 1e-12 * dir.scale, &rep.compared);

  std::set<TokenId> pos_ids, neg_ids;
  for (const auto& s : slots) {
    if (s.advantage > 0.0) pos_ids.insert(s.token);
    if (s.advantage < 0.0) neg_ids.insert(s.token);
  }
  std::set_intersection(pos_ids.begin(), pos_ids.end(), neg_ids.begin(), neg_ids.end(),
                        std::back_inserter(rep.shared_token_ids));
  const std::set<TokenId> shared(rep.shared_token_ids.begin(), rep.shared_token_ids.end());
  Vec all_pos(grads.dim(), 0.0), all_neg(grads.dim(), 0.0), sh_pos(grads.dim(), 0.0), sh_neg(grads.dim(), 0.0);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const double m = rho[k] * std::abs(adv[k]);
    if (adv[k] == 0.0 || m == 0.0) continue;
    const bool is_shared = shared.count(slots[k].token) > 0;
    Vec& all = adv[k] > 0.0 ? all_pos : all_neg;
    Vec& sh = adv[k] > 0.0 ? sh_pos : sh_neg;
    axpy(m, grads[k], all);
    if (is_shared) axpy(m, grads[k], sh);
  }
  const auto share = [](const Vec& part, const Vec& whole) {
    const double w = squared_norm(whole);
    return w == 0.0 ? 0.0 : dot(part, whole) / w;
  };
  rep.shared_fraction_pos = share(sh_pos, all_pos);
  rep.shared_fraction_neg = share(sh_neg, all_neg);
  return rep;
}

nlohmann::ordered_json DiscriminatorReport::to_json() const {
  nlohmann::ordered_json j;
  j["provenance"] = provenance;
  j["eta"] = eta;
  j["direction_norm"] = direction_norm;
  j["decomposition_residual"] = decomposition_residual;
  j["mass_pos"] = mass_pos;
  j["mass_neg"] = mass_neg;
  j["centroid_contrast"] = centroid_contrast;
  j["sign_agreement"] = sign_agreement;
  j["probes_compared"] = compared;
  j["contamination"] = {
      {"heuristic", "token ids sampled on both advantage sides stand in for shared patterns"},
      {"shared_token_ids", shared_token_ids},
      {"shared_fraction_pos", shared_fraction_pos},
      {"shared_fraction_neg", shared_fraction_neg},
  };
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : probes) {
    nlohmann::ordered_json p;
    p["context"] = r.probe.context;
    p["token"] = r.probe.token;
    p["predicted"] = r.predicted;
    p["actual"] = r.actual;
    p["pos_score"] = r.scores.pos;
    p["neg_score"] = r.scores.neg;
    arr.push_back(std::move(p));
  }
  j["probes"] = std::move(arr);
  return j;
}

}  // namespace deltalab
