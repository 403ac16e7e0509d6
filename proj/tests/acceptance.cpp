// Acceptance suite: one PASS/FAIL line per criterion, detail lines indented.
// Usage: acceptance [criterion numbers...]   (default: all ten)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "deltalab/cli.hpp"
#include "deltalab/delta.hpp"
#include "deltalab/discriminator.hpp"
#include "deltalab/objectives.hpp"
#include "deltalab/stats.hpp"
#include "deltalab/trainer.hpp"
#include "support.hpp"

using namespace deltalab;
using namespace deltalab::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string summary;
  std::vector<std::string> details;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double entropy_objective(double alpha, double margin, double gamma) {
  auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
  return alpha * margin - gamma * (xlogx(alpha) + xlogx(1.0 - alpha));
}

Outcome closed_form_assignment() {
  Rng rng(101);
  const int grid = 10000;
  int beaten = 0;
  double worst_gap = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double margin = -50.0 + 100.0 * rng.uniform();
    const double gamma = 1e-3 + (10.0 - 1e-3) * rng.uniform();
    const double alpha = soft_assignment(margin, gamma);
    const double value = entropy_objective(alpha, margin, gamma);
    double best = -1e300, arg = 0.0;
    for (int i = 0; i < grid; ++i) {
      const double a = static_cast<double>(i) / (grid - 1);
      const double v = entropy_objective(a, margin, gamma);
      if (v > best) best = v, arg = a;
    }
    // Rounding slack of a few ulps of the objective scale.
    if (value < best - 1e-13 * std::max(1.0, std::abs(best))) ++beaten;
    worst_gap = std::max(worst_gap, std::abs(alpha - arg));
  }
  const bool pass = beaten == 0 && worst_gap <= 2e-4;
  return {pass, "closed-form assignment vs 10^4-point grid oracle",
          {"grid points beating alpha: " + std::to_string(beaten) + " of 1000 trials",
           "max |alpha - grid argmax| = " + fmt("%.3g", worst_gap) + " (bound 2e-4)"}};
}

double side_objective(const VectorSet& v, std::span<const double> adv, std::span<const double> w,
                      std::span<const double> mu, Side side) {
  double f = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const auto s = side_of(adv[k]);
    if (s && *s == side) f += w[k] * std::abs(adv[k]) * squared_distance(v[k], mu);
  }
  return f;
}

Outcome centroid_optimality() {
  Rng rng(202);
  std::size_t trials = 0, wins = 0, batches = 0;
  while (batches < 50) {
    const RolloutBatch batch = random_batch(rng);
    const auto slots = flatten(batch);
    const VectorSet vs = token_vectors(batch.snapshot.policy(), slots, ProxyKind::FullGradient);
    Vec adv;
    for (const auto& s : slots) adv.push_back(s.advantage);
    const SideCentroids init = initial_centroids(vs, adv);
    if (!init.both_valid()) continue;
    ++batches;
    DeltaConfig cfg;
    cfg.scope = CentroidScope::BatchWide;
    const CoefficientSet coef = compute_coefficients(vs, adv, {}, cfg);
    Vec alpha(vs.size(), 0.0);
    for (std::size_t k = 0; k < vs.size(); ++k) alpha[k] = coef.alpha[k].value_or(0.0);
    const Vec ones(vs.size(), 1.0);
    const SideCentroids refined = refine_centroids(vs, adv, alpha);
    for (const auto& [c, w] : {std::pair{init, ones}, std::pair{refined, alpha}}) {
      for (Side side : {Side::Positive, Side::Negative}) {
        const Vec mu(c.own(side).begin(), c.own(side).end());
        const double f0 = side_objective(vs, adv, w, mu, side);
        for (int p = 0; p < 100; ++p) {
          Vec d = random_vector(rng, mu.size());
          const double n = norm(d);
          Vec moved = mu;
          axpy(1e-3 / n, d, moved);
          ++trials;
          wins += side_objective(vs, adv, w, moved, side) > f0;
        }
      }
    }
  }
  return {wins == trials, "centroid optimality under perturbation",
          {std::to_string(wins) + " of " + std::to_string(trials) +
           " perturbations increased the weighted within-side distance (50 batches, initial and refined)"}};
}

bool near_kink(std::span<const double> ratios, const ClipConfig& clip) {
  for (double r : ratios)
    if (std::abs(r - (1 - clip.low)) < 1e-3 || std::abs(r - (1 + clip.high)) < 1e-3) return true;
  return false;
}

Outcome gradient_exactness() {
  Rng rng(303);
  const ClipConfig clip;
  const double h = 1e-5;
  double worst_token = 0.0, worst_surrogate = 0.0;
  int probes = 0;
  while (probes < 200) {
    // Token gradient of log pi.
    LinearSoftmaxPolicy policy = task_policy();
    randomize(policy, rng, 0.5);
    const Tokens ctx = random_context(rng, policy.vocab().size, 8);
    const TokenId y = static_cast<TokenId>(rng.below(policy.vocab().size));
    const Vec g = policy.token_gradient_full(ctx, y);
    Vec fd(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double saved = policy.params()[k];
      policy.params()[k] = saved + h;
      const double up = policy.log_prob(ctx, y);
      policy.params()[k] = saved - h;
      const double down = policy.log_prob(ctx, y);
      policy.params()[k] = saved;
      fd[k] = (up - down) / (2 * h);
    }
    worst_token = std::max(worst_token, max_rel_error(g, fd));

    // Surrogate gradient at a perturbed theta, cycling through weight families.
    const RolloutBatch batch = random_batch(rng, 2, 4);
    const auto slots = flatten(batch);
    LinearSoftmaxPolicy theta = batch.snapshot.policy();
    for (double& w : theta.params()) w += 0.15 * normal_draw(rng);
    const Vec ratios = importance_ratios(theta, slots);
    if (near_kink(ratios, clip)) continue;
    TokenWeights weights;
    switch (probes % 4) {
      case 0: weights = dapo_weights(slots); break;
      case 1: weights = grpo_weights(slots); break;
      case 2: weights = token_count_normalized_weights(
                  compute_batch_coefficients(batch.snapshot.policy(), slots, {}).lambda_bar);
              break;
      default: weights = self_normalized_weights(entropy_mask(slots, batch.snapshot.policy(), 0.2)); break;
    }
    const Vec sg = objective_gradient(theta, slots, ratios, clip, weights);
    Vec sfd(sg.size());
    for (std::size_t k = 0; k < sg.size(); ++k) {
      const double saved = theta.params()[k];
      theta.params()[k] = saved + h;
      const double up = surrogate_objective(slots, importance_ratios(theta, slots), clip, weights);
      theta.params()[k] = saved - h;
      const double down = surrogate_objective(slots, importance_ratios(theta, slots), clip, weights);
      theta.params()[k] = saved;
      sfd[k] = (up - down) / (2 * h);
    }
    worst_surrogate = std::max(worst_surrogate, max_rel_error(sg, sfd));
    ++probes;
  }
  const bool pass = worst_token <= 1e-5 && worst_surrogate <= 1e-5;
  return {pass, "analytic gradients vs central finite differences",
          {"token log-prob gradient: max rel error " + fmt("%.3g", worst_token) + " over 200 probes",
           "surrogate gradient (dapo, grpo, delta, forking-token): max rel error " + fmt("%.3g", worst_surrogate) +
               " over 200 probes"}};
}

Outcome discriminator_theory() {
  Rng rng(404);
  double worst_residual = 0.0, worst_two_score = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const RolloutBatch batch = random_batch(rng);
    const auto slots = flatten(batch);
    const auto& policy = batch.snapshot.policy();
    const VectorSet grads = token_vectors(policy, slots, ProxyKind::FullGradient);
    Vec adv;
    for (const auto& s : slots) adv.push_back(s.advantage);
    const Vec rho = dapo_weights(slots).rho;
    const SideCentroids c = weighted_centroids(grads, adv, rho);
    if (!c.both_valid()) continue;
    const UpdateDirection d = local_update_direction(grads, adv, rho, "dapo");
    worst_residual = std::max(worst_residual, centroid_decomposition_residual(d, c));
    for (int p = 0; p < 20; ++p) {
      const Tokens ctx = random_context(rng, policy.vocab().size, 8);
      const Vec g = policy.token_gradient_full(ctx, static_cast<TokenId>(rng.below(policy.vocab().size)));
      const double single = dot(g, d.delta);
      worst_two_score = std::max(worst_two_score, rel_error(side_scores(g, c).net(), single, 1.0));
    }
  }

  const RolloutBatch batch = random_batch(rng, 6, 8);
  const auto slots = flatten(batch);
  const auto& policy = batch.snapshot.policy();
  std::vector<Probe> probes(10000);
  for (auto& p : probes) {
    p.context = random_context(rng, policy.vocab().size, 8);
    p.token = static_cast<TokenId>(rng.below(policy.vocab().size));
  }
  const DiscriminatorReport rep =
      discriminator_report(policy, slots, dapo_weights(slots).rho, probes, 1e-4, "dapo");

  const VectorSet grads = token_vectors(policy, slots, ProxyKind::FullGradient);
  Vec adv;
  for (const auto& s : slots) adv.push_back(s.advantage);
  UpdateDirection d = local_update_direction(grads, adv, dapo_weights(slots).rho);
  for (double& x : d.delta) x /= d.scale;
  std::size_t quadratic = 0, swept = 0;
  double lo = 1e300, hi = 0.0;
  for (std::size_t i = 0; i < 200; ++i) {
    double err[3];
    const double etas[3] = {1e-2, 1e-3, 1e-4};
    for (int e = 0; e < 3; ++e)
      err[e] = std::abs(empirical_logprob_delta(policy, probes[i], d.delta, etas[e]) -
                        predict_logprob_delta(policy, probes[i], d.delta, etas[e]));
    if (err[0] < 1e-9) continue;
    ++swept;
    const double r1 = err[0] / err[1], r2 = err[1] / err[2];
    lo = std::min({lo, r1, r2});
    hi = std::max({hi, r1, r2});
    quadratic += r1 >= 50 && r1 <= 200 && r2 >= 50 && r2 <= 200;
  }
  const bool pass = worst_residual <= 1e-10 && worst_two_score <= 1e-10 && rep.sign_agreement >= 0.99 &&
                    swept > 0 && quadratic == swept;
  return {pass, "update direction as a linear discriminator",
          {"max centroid-decomposition residual " + fmt("%.3g", worst_residual),
           "max two-score vs inner-product rel error " + fmt("%.3g", worst_two_score),
           "sign agreement at eta=1e-4: " + fmt("%.4f", rep.sign_agreement) + " over " +
               std::to_string(rep.compared) + " of 10000 probes above the noise floor",
           "error ratio per decade of eta in [" + fmt("%.1f", lo) + ", " + fmt("%.1f", hi) + "] for " +
               std::to_string(quadratic) + " of " + std::to_string(swept) + " probes (required [50, 200])"}};
}

Outcome self_normalization() {
  Rng rng(505);
  const ClipConfig clip;
  double worst_mass = 0.0, worst_forms = 0.0, worst_const = 0.0;
  bool bitwise = true;
  for (int trial = 0; trial < 100; ++trial) {
    const RolloutBatch batch = random_batch(rng);
    const auto slots = flatten(batch);
    const auto& snap = batch.snapshot.policy();
    const CoefficientSet c = compute_batch_coefficients(snap, slots, {});
    const double n = static_cast<double>(slots.size());
    worst_mass = std::max(worst_mass, std::abs(std::accumulate(c.lambda_bar.begin(), c.lambda_bar.end(), 0.0) / n - 1.0));

    LinearSoftmaxPolicy theta = snap;
    for (double& w : theta.params()) w += 0.1 * normal_draw(rng);
    const Vec ratios = importance_ratios(theta, slots);
    worst_forms = std::max(worst_forms, rel_error(weighted_objective(slots, ratios, clip, c.lambda),
                                                  weighted_objective_token_average(slots, ratios, clip, c.lambda_bar)));

    DeltaConfig flat;
    flat.lambda_min = flat.lambda_max = 1.0;
    const CoefficientSet one = compute_batch_coefficients(snap, slots, flat);
    const Vec a = objective_gradient(theta, slots, ratios, clip, token_count_normalized_weights(one.lambda_bar));
    const Vec b = objective_gradient(theta, slots, ratios, clip, dapo_weights(slots));
    worst_const = std::max(worst_const, max_rel_error(a, b, 1e-300));
    bitwise = bitwise && a == b;
    const Vec scaled = objective_gradient(theta, slots, ratios, clip, self_normalized_weights(Vec(slots.size(), 0.9)));
    worst_const = std::max(worst_const, max_rel_error(scaled, b, 1e-300));
  }
  const bool pass = worst_mass <= 1e-12 && worst_forms <= 1e-12 && worst_const <= 1e-14;
  return {pass, "self-normalization identities",
          {"max |mean(lambda_bar) - 1| = " + fmt("%.3g", worst_mass),
           "max rel gap between (1/N) sum lambda_bar*l and (1/Z) sum lambda*l = " + fmt("%.3g", worst_forms),
           "constant-coefficient vs baseline gradient: max rel gap " + fmt("%.3g", worst_const) +
               (bitwise ? " (degenerate range bit-identical)" : "")}};
}

Outcome rho_family() {
  Rng rng(606);
  const ClipConfig clip;
  double worst[3] = {0, 0, 0};
  for (int trial = 0; trial < 100; ++trial) {
    const RolloutBatch batch = random_batch(rng);
    const auto slots = flatten(batch);
    const auto& snap = batch.snapshot.policy();
    LinearSoftmaxPolicy theta = snap;
    if (trial % 2) for (double& w : theta.params()) w += 0.1 * normal_draw(rng);
    const Vec ratios = importance_ratios(theta, slots);
    const std::size_t dim = theta.param_count();

    // Direct per-token accumulation of each method's update direction.
    auto token_term = [&](std::size_t k) {
      Vec g(dim, 0.0);
      if (clipped_branch_selected(ratios[k], slots[k].advantage, clip)) return g;
      g = theta.token_gradient_full(slots[k].context, slots[k].token);
      for (double& x : g) x *= ratios[k] * slots[k].advantage;
      return g;
    };
    Vec grpo(dim, 0.0), dapo(dim, 0.0), ft(dim, 0.0);
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> lengths;
    for (const auto& s : slots) ++lengths[{s.group, s.response}];
    const Vec mask = entropy_mask(slots, snap, 0.2);
    const double kept = std::accumulate(mask.begin(), mask.end(), 0.0);
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const Vec t = token_term(k);
      axpy(1.0 / (static_cast<double>(lengths[{slots[k].group, slots[k].response}]) * lengths.size()), t, grpo);
      axpy(1.0 / static_cast<double>(slots.size()), t, dapo);
      if (mask[k] > 0.0) axpy(1.0 / kept, t, ft);
    }

    Vec inv_len(slots.size()), ones(slots.size(), 1.0);
    for (std::size_t k = 0; k < slots.size(); ++k) inv_len[k] = 1.0 / slots[k].response_length;
    const TokenWeights w_grpo{inv_len, static_cast<double>(lengths.size())};
    const TokenWeights w_dapo{ones, static_cast<double>(slots.size())};
    const TokenWeights w_ft{mask, kept};
    worst[0] = std::max(worst[0], max_rel_error(objective_gradient(theta, slots, ratios, clip, w_grpo), grpo, 1e-300));
    worst[1] = std::max(worst[1], max_rel_error(objective_gradient(theta, slots, ratios, clip, w_dapo), dapo, 1e-300));
    worst[2] = std::max(worst[2], max_rel_error(objective_gradient(theta, slots, ratios, clip, w_ft), ft, 1e-300));
  }
  const bool pass = worst[0] <= 1e-12 && worst[1] <= 1e-12 && worst[2] <= 1e-12;
  return {pass, "token-weight family reproduces grpo, dapo and forking-token directions",
          {"max rel error: rho=1/|o| vs grpo " + fmt("%.3g", worst[0]) + ", rho=1 vs dapo " + fmt("%.3g", worst[1]) +
           ", rho=entropy mask vs forking-token " + fmt("%.3g", worst[2])}};
}

Outcome contamination() {
  Rng rng(707);
  VectorSet vs(3);
  Vec adv;
  std::vector<bool> shared;
  for (int i = 0; i < 90; ++i) {
    const int kind = i % 3;
    Vec v = random_vector(rng, 3, 0.05);
    if (kind == 0) v[0] += 1.0;
    if (kind == 1) v[0] -= 1.0;
    if (kind == 2) v[1] += 1.0;
    vs.push_back(v);
    adv.push_back(kind == 0 ? 1.0 : kind == 1 ? -1.0 : (i % 2 ? 1.0 : -1.0));
    shared.push_back(kind == 2);
  }
  const CoefficientSet c = compute_coefficients(vs, adv, std::vector<std::size_t>(vs.size(), 0), {});
  double max_shared = 0.0, min_specific = 1e300;
  for (std::size_t k = 0; k < vs.size(); ++k) {
    if (shared[k]) max_shared = std::max(max_shared, c.lambda[k]);
    else min_specific = std::min(min_specific, c.lambda[k]);
  }
  const double plain = centroid_contrast(weighted_centroids(vs, adv, Vec(vs.size(), 1.0)));
  const double weighted = centroid_contrast(weighted_centroids(vs, adv, c.lambda));
  const bool pass = min_specific > max_shared && weighted > plain;
  return {pass, "shared-token contamination cloud",
          {"min side-specific lambda " + fmt("%.4f", min_specific) + " vs max shared lambda " + fmt("%.4f", max_shared),
           "centroid contrast: unweighted " + fmt("%.4f", plain) + ", coefficient-weighted " + fmt("%.4f", weighted)}};
}

double final_reward(const TrainResult& r) {
  const std::size_t k = std::min<std::size_t>(20, r.metrics.size());
  double s = 0.0;
  for (std::size_t i = r.metrics.size() - k; i < r.metrics.size(); ++i) s += r.metrics[i].mean_reward;
  return s / static_cast<double>(k);
}

double mean(const Vec& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

Outcome training_trends() {
  const std::vector<std::pair<std::string, std::string>> variants = {
      {"dapo", "dapo"},          {"delta", "delta"},          {"within", "within-side"},
      {"top", "mask-top:0.5"},   {"bottom", "mask-bottom:0.5"}, {"random", "mask-random:0.5"},
      {"rlambda", "random-lambda"}};
  std::map<std::string, Vec> finals;
  std::vector<std::string> details;
  for (const auto& [key, name] : variants) {
    std::string line = name + ":";
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      TrainConfig cfg;
      cfg.seed = seed;
      const double f = final_reward(train(cfg, ExperimentVariant::parse(name)));
      finals[key].push_back(f);
      line += " " + fmt("%.3f", f);
    }
    details.push_back(line + "  mean " + fmt("%.4f", mean(finals[key])));
  }
  const double p_a = mann_whitney_u(finals["delta"], finals["dapo"]).p_value;
  const double p_b = mann_whitney_u(finals["dapo"], finals["bottom"]).p_value;
  const bool a = mean(finals["delta"]) >= mean(finals["dapo"]);
  const bool b = mean(finals["dapo"]) - mean(finals["bottom"]) >= 0.05 && p_b < 0.05;
  const bool c = mean(finals["top"]) >= mean(finals["random"]);
  const bool d = mean(finals["within"]) <= mean(finals["delta"]);
  const bool e = mean(finals["rlambda"]) <= mean(finals["delta"]);
  auto mark = [](bool ok) { return ok ? "holds" : "FAILS"; };
  details.push_back(std::string("(a) delta >= dapo in mean: ") + mark(a) + " (Mann-Whitney p=" + fmt("%.3f", p_a) + ")");
  details.push_back(std::string("(b) dapo - mask-bottom >= 0.05 with p < 0.05: ") + mark(b) + " (gap " +
                    fmt("%.3f", mean(finals["dapo"]) - mean(finals["bottom"])) + ", p=" + fmt("%.4f", p_b) + ")");
  details.push_back(std::string("(c) mask-top >= mask-random: ") + mark(c));
  details.push_back(std::string("(d) within-side <= delta: ") + mark(d));
  details.push_back(std::string("(e) random-lambda <= delta: ") + mark(e));
  details.push_back("final reward = mean train reward over the last 20 of 300 steps, seeds 0-4, default config");
  return {a && b && c && d && e, "desk-scale training trends on mod-10 addition", details};
}

Outcome mann_whitney() {
  const double p = mann_whitney_u(Vec{3, 4, 5}, Vec{0, 1, 2}).p_value;
  Rng rng(909);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Vec a = random_vector(rng, 10), b = random_vector(rng, 10);
    for (double& x : a) x += 0.3 * (trial % 6);
    worst = std::max(worst, std::abs(mann_whitney_normal_p(a, b) - mann_whitney_exact_p(a, b)));
  }
  return {p == 0.05 && worst <= 0.01, "Mann-Whitney U correctness",
          {"exact p for [3,4,5] vs [0,1,2] = " + fmt("%.17g", p),
           "max |normal - exact| over 100 random n=10 samples = " + fmt("%.4f", worst)}};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "deltalab-acceptance-determinism";
  fs::remove_all(root);
  std::vector<fs::path> runs;
  for (int i = 0; i < 2; ++i) {
    cli::TrainArgs args;
    args.seed = 11;
    args.runs_root = root;
    std::ostringstream out, err;
    if (cli::cmd_train(args, out, err) != cli::kExitOk) return {false, "determinism", {"train failed: " + err.str()}};
    std::string dir = out.str();
    dir.erase(dir.find_last_not_of('\n') + 1);
    runs.push_back(dir);
  }
  const std::string a = slurp(runs[0] / "metrics.jsonl"), b = slurp(runs[1] / "metrics.jsonl");
  const auto lines = std::count(a.begin(), a.end(), '\n');
  const bool same_ckpt = slurp(runs[0] / "checkpoints" / "final.ckpt") == slurp(runs[1] / "checkpoints" / "final.ckpt");
  fs::remove_all(root);
  return {a == b && same_ckpt && lines == 300, "determinism of repeated runs",
          {"two 300-step runs, seed 11, default config: metrics files " +
           std::string(a == b ? "byte-identical" : "differ") + " (" + std::to_string(lines) + " rows), final checkpoints " +
           (same_ckpt ? "byte-identical" : "differ")}};
}

struct Criterion {
  int id;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, 5, closed_form_assignment}, {2, 10, centroid_optimality}, {3, 30, gradient_exactness},
      {4, 60, discriminator_theory},  {5, 5, self_normalization},   {6, 5, rho_family},
      {7, 5, contamination},          {8, 1800, training_trends},   {9, 10, mann_whitney},
      {10, 120, determinism}};
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::stoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, "criterion raised an exception", {e.what()}};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("%s criterion %d: %s (%.1f s, limit %.0f s%s)\n", pass ? "PASS" : "FAIL", c.id, o.summary.c_str(),
                secs, c.limit_seconds, in_time ? "" : ", over time");
    for (const auto& d : o.details) std::printf("    %s\n", d.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
