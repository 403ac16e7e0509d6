#pragma once

#include <json.hpp>

#include "deltalab/delta.hpp"
#include "deltalab/policy.hpp"

namespace deltalab {

/// Unnormalised local update direction sum_t rho_t A_t v_t together with its
/// Euclidean norm.
struct UpdateDirection {
  Vec delta;
  double scale = 0.0;
  std::string provenance;
};

UpdateDirection local_update_direction(const VectorSet& token_gradients, std::span<const double> advantages,
                                       std::span<const double> rho, std::string provenance = "custom");

/// ||delta - (M+ mu+ - M- mu-)|| / ||delta||. Zero direction gives zero residual.
double centroid_decomposition_residual(const UpdateDirection& direction, const SideCentroids& centroids);

struct Probe {
  Tokens context;
  TokenId token = 0;
};

/// First-order prediction eta * <grad log pi_old(token | context), delta>.
double predict_logprob_delta(const LinearSoftmaxPolicy& snapshot, const Probe& probe,
                             std::span<const double> delta, double eta);

/// log pi_{old + eta*delta}(token | context) - log pi_old(token | context).
double empirical_logprob_delta(const LinearSoftmaxPolicy& snapshot, const Probe& probe,
                               std::span<const double> delta, double eta);

struct SideScores {
  double pos = 0.0;  ///< M+ <g, mu+>
  double neg = 0.0;  ///< M- <g, mu->
  double net() const { return pos - neg; }
};

SideScores side_scores(std::span<const double> gradient, const SideCentroids& centroids);

/// ||mu+ - mu-|| / (||mu+|| + ||mu-||).
double centroid_contrast(const SideCentroids& centroids);

struct ProbeRecord {
  Probe probe;
  double predicted = 0.0;
  double actual = 0.0;
  SideScores scores;
};

struct DiscriminatorReport {
  double eta = 0.0;
  std::string provenance;
  double direction_norm = 0.0;
  double decomposition_residual = 0.0;
  double mass_pos = 0.0;
  double mass_neg = 0.0;
  double centroid_contrast = 0.0;
  std::vector<ProbeRecord> probes;
  std::size_t compared = 0;  ///< probes above the prediction noise floor
  double sign_agreement = 1.0;
  // Shared-pattern heuristic: token ids sampled on both advantage sides, and
  // the share of each side's weighted sum they account for (projection onto
  // the side total).
  std::vector<TokenId> shared_token_ids;
  double shared_fraction_pos = 0.0;
  double shared_fraction_neg = 0.0;

  nlohmann::ordered_json to_json() const;
};

/// Builds the update direction from full token gradients of `slots` under the
/// snapshot with weights rho, then scores every probe with it.
DiscriminatorReport discriminator_report(const LinearSoftmaxPolicy& snapshot, std::span<const TokenSlot> slots,
                                         std::span<const double> rho, std::span<const Probe> probes,
                                         double eta, std::string provenance = "custom");

/// Fraction of probes whose predicted and actual changes share a sign,
/// skipping predictions below noise_floor in magnitude.
double sign_agreement(std::span<const ProbeRecord> records, double noise_floor, std::size_t* compared = nullptr);

}  // namespace deltalab
