#include "tips/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "tips/errors.hpp"
#include "tips/rng.hpp"
#include "tips/training.hpp"

namespace tips {

std::string to_string(ExposurePolicy policy) {
  switch (policy) {
    case ExposurePolicy::kUniform: return "uniform";
    case ExposurePolicy::kPopularitySkew: return "popularity";
    case ExposurePolicy::kRecencySkew: return "recency";
  }
  return "?";
}

ExposurePolicy parse_policy(const std::string& name) {
  if (name == "uniform") return ExposurePolicy::kUniform;
  if (name == "popularity" || name == "popularity-skew") return ExposurePolicy::kPopularitySkew;
  if (name == "recency" || name == "recency-skew") return ExposurePolicy::kRecencySkew;
  throw ConfigError(fmt::format("unknown exposure policy '{}' (uniform, popularity, recency)", name));
}

void WorldSpec::validate() const {
  if (n_users == 0 || n_items < 2) throw ConfigError("world needs users and at least 2 items");
  if (latent_dim == 0) throw ConfigError("latent_dim must be positive");
  if (!(beta >= 0.0)) throw ConfigError("beta must be nonnegative");
  if (!(recency_scale > 0.0)) throw ConfigError("recency_scale must be positive");
  if (!(drift_amplitude >= 0.0 && drift_amplitude < 1.0)) {
    throw ConfigError("drift_amplitude must lie in [0, 1)");
  }
  if (!(drift_period > 0.0)) throw ConfigError("drift_period must be positive");
  if (!(affinity_scale >= 0.0)) throw ConfigError("affinity_scale must be nonnegative");
  if (seconds_per_step <= 0) throw ConfigError("seconds_per_step must be positive");
}

std::vector<double> inclusion_probabilities(std::span<const double> weights, std::size_t slate) {
  const std::size_t n = weights.size();
  std::vector<double> p(n, 0.0);
  std::vector<bool> capped(n, false);
  std::size_t positive = 0;
  for (double w : weights) {
    if (w < 0.0 || !std::isfinite(w)) throw PreconditionError("policy weights must be finite and >= 0");
    if (w > 0.0) ++positive;
  }
  if (slate == 0 || positive == 0) return p;
  if (slate >= positive) {
    for (std::size_t i = 0; i < n; ++i) p[i] = weights[i] > 0.0 ? 1.0 : 0.0;
    return p;
  }
  double budget = static_cast<double>(slate);
  while (true) {
    double free_mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!capped[i]) free_mass += weights[i];
    }
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (capped[i]) continue;
      const double v = budget * weights[i] / free_mass;
      if (v >= 1.0) {
        capped[i] = true;
        p[i] = 1.0;
        budget -= 1.0;
        changed = true;
      }
    }
    if (!changed) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!capped[i]) p[i] = budget * weights[i] / free_mass;
      }
      return p;
    }
  }
}

namespace {

double cosine(const Tensor2& q, std::size_t a, std::size_t b) {
  const auto x = q.row(a);
  const auto y = q.row(b);
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xy += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  if (xx == 0.0 || yy == 0.0) return 0.0;
  return xy / std::sqrt(xx * yy);
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::vector<double> policy_weights(const WorldSpec& spec, const std::vector<std::size_t>& pop_rank,
                                   const std::vector<double>& phase,
                                   const std::vector<double>& release,
                                   const Tensor2& item_factors, std::size_t step,
                                   ItemIndex last_click, const std::vector<bool>& clicked) {
  std::vector<double> w(spec.n_items, 1.0);
  for (ItemIndex v = 0; v < spec.n_items; ++v) {
    if (spec.exclude_clicked && clicked[v]) {
      w[v] = 0.0;
      continue;
    }
    switch (spec.policy) {
      case ExposurePolicy::kUniform:
        break;
      case ExposurePolicy::kPopularitySkew:
        w[v] = std::pow(1.0 + static_cast<double>(pop_rank[v]), -spec.beta);
        break;
      case ExposurePolicy::kRecencySkew: {
        const double age = static_cast<double>(step) - release[v];
        w[v] = age < 0.0 ? 0.0 : std::exp(-age / spec.recency_scale);
        break;
      }
    }
    if (spec.drift_amplitude > 0.0) {
      w[v] *= 1.0 + spec.drift_amplitude *
                        std::sin(2.0 * std::numbers::pi * static_cast<double>(step) /
                                     spec.drift_period +
                                 phase[v]);
    }
    if (spec.similarity_boost != 0.0 && last_click < spec.n_items) {
      w[v] *= std::exp(spec.similarity_boost * cosine(item_factors, v, last_click));
    }
  }
  return w;
}

OracleBundle simulate(const WorldSpec& spec, std::uint64_t seed) {
  spec.validate();
  OracleBundle b;
  b.spec = spec;
  b.seed = seed;

  Rng world = make_rng(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor2 users(spec.n_users, spec.latent_dim);
  Tensor2 items(spec.n_items, spec.latent_dim);
  for (double& x : users.values()) x = normal(world);
  for (double& x : items.values()) x = normal(world);
  const double scale = spec.affinity_scale / std::sqrt(static_cast<double>(spec.latent_dim));
  b.affinity = matmul_nt(users, items);
  for (double& x : b.affinity.values()) x *= scale;

  std::vector<std::size_t> order(spec.n_items);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), world);
  std::vector<std::size_t> pop_rank(spec.n_items);
  for (std::size_t r = 0; r < order.size(); ++r) pop_rank[order[r]] = r;
  std::vector<double> phase(spec.n_items), release(spec.n_items);
  for (ItemIndex v = 0; v < spec.n_items; ++v) {
    phase[v] = uniform_real(world, 0.0, 2.0 * std::numbers::pi);
    release[v] = uniform_real(world, -0.5 * static_cast<double>(spec.horizon),
                              static_cast<double>(spec.horizon));
  }

  std::vector<std::vector<bool>> clicked(spec.n_users, std::vector<bool>(spec.n_items, false));
  std::vector<ItemIndex> last_click(spec.n_users, spec.n_items);
  std::vector<Rng> user_rng;
  user_rng.reserve(spec.n_users);
  for (UserIndex u = 0; u < spec.n_users; ++u) user_rng.push_back(make_rng(seed, 1000 + u));

  for (std::size_t step = 0; step < spec.horizon; ++step) {
    const Timestamp base = spec.start_time + static_cast<Timestamp>(step) * spec.seconds_per_step;
    for (UserIndex u = 0; u < spec.n_users; ++u) {
      Rng& rng = user_rng[u];
      const auto w = policy_weights(spec, pop_rank, phase, release, items, step, last_click[u],
                                    clicked[u]);
      const auto p = inclusion_probabilities(w, spec.slate_size);
      Timestamp offset = 0;
      ItemIndex newest = last_click[u];
      for (ItemIndex v = 0; v < spec.n_items; ++v) {
        if (p[v] <= 0.0) continue;
        if (uniform_real(rng, 0.0, 1.0) >= p[v]) continue;
        const bool click =
            uniform_real(rng, 0.0, 1.0) < logistic(b.affinity(u, v) + spec.click_bias);
        b.exposures.push_back({u, v, step, p[v], click});
        if (click) {
          // Clicks within a step are a minute apart, in item order.
          b.clicks.push_back({u, v, base + offset});
          offset += 60;
          clicked[u][v] = true;
          newest = v;
        }
      }
      last_click[u] = newest;
    }
  }

  b.final_time = spec.start_time + static_cast<Timestamp>(spec.horizon) * spec.seconds_per_step;
  b.final_propensity = Tensor2(spec.n_users, spec.n_items);
  for (UserIndex u = 0; u < spec.n_users; ++u) {
    const auto w = policy_weights(spec, pop_rank, phase, release, items, spec.horizon,
                                  last_click[u], clicked[u]);
    const auto p = inclusion_probabilities(w, spec.slate_size);
    std::copy(p.begin(), p.end(), b.final_propensity.row(u).begin());
  }
  return b;
}

InteractionLog OracleBundle::biased_log() const {
  std::vector<RawInteraction> records;
  records.reserve(clicks.size());
  for (std::size_t i = 0; i < clicks.size(); ++i) {
    const Interaction& c = clicks[i];
    records.push_back({fmt::format("u{}", c.user), fmt::format("i{}", c.item), c.timestamp, i + 1});
  }
  return InteractionLog::build(records);
}

std::vector<EvalCase> unbiased_testset(const OracleBundle& bundle, const InteractionLog& log,
                                       const TrainingData& data,
                                       std::size_t positives_per_user) {
  if (positives_per_user == 0) throw ConfigError("positives_per_user must be positive");
  std::vector<std::pair<ItemIndex, ItemIndex>> vocab;  // (world, log)
  for (ItemIndex v = 0; v < bundle.spec.n_items; ++v) {
    ItemIndex idx = 0;
    if (log.find_item(fmt::format("i{}", v), idx)) vocab.emplace_back(v, idx);
  }
  std::vector<EvalCase> out;
  for (const UserSplit& s : data.splits.users) {
    const auto& seq = log.sequence(s.user);
    const std::size_t world_user = std::stoul(log.user_name(s.user).substr(1));

    EvalCase base;
    base.user = s.user;
    std::vector<ItemIndex> clicked;
    for (const Event& e : seq) clicked.push_back(e.item);
    std::sort(clicked.begin(), clicked.end());
    clicked.erase(std::unique(clicked.begin(), clicked.end()), clicked.end());
    const std::size_t keep = std::min(seq.size(), data.splits.max_len);
    base.history.assign(seq.end() - static_cast<std::ptrdiff_t>(keep), seq.end());
    base.query_time = bundle.final_time;

    // (affinity desc, log index asc)
    std::vector<std::pair<double, ItemIndex>> ranked;
    for (const auto& [world_item, log_item] : vocab) {
      if (std::binary_search(clicked.begin(), clicked.end(), log_item)) continue;
      ranked.emplace_back(-bundle.affinity(world_user, world_item), log_item);
    }
    const std::size_t n = std::min(positives_per_user, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n),
                      ranked.end());
    base.exclude = clicked;
    for (std::size_t i = 0; i < n; ++i) base.exclude.push_back(ranked[i].second);
    std::sort(base.exclude.begin(), base.exclude.end());
    if (n == 0) {
      out.push_back(std::move(base));
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) {
      EvalCase c = base;
      c.positive = ranked[i].second;
      out.push_back(std::move(c));
    }
  }
  return out;
}

void write_biased_log(const OracleBundle& bundle, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  for (const Interaction& c : bundle.clicks) {
    out << fmt::format("u{}::i{}::1::{}\n", c.user, c.item, c.timestamp);
  }
}

void write_oracle_files(const OracleBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw DataError(fmt::format("cannot write '{}'", (dir / name).string()));
    out << "# evaluation only: never use for training\n";
    return out;
  };
  {
    auto out = open("exposure_log.csv");
    out << "user,item,step,probability,clicked\n";
    for (const auto& e : bundle.exposures) {
      out << fmt::format("u{},i{},{},{:.10g},{}\n", e.user, e.item, e.step, e.probability,
                         e.clicked ? 1 : 0);
    }
  }
  const auto matrix = [&](const char* name, const Tensor2& m) {
    auto out = open(name);
    out << "user,item,value\n";
    for (std::size_t u = 0; u < m.rows(); ++u) {
      for (std::size_t v = 0; v < m.cols(); ++v) {
        out << fmt::format("u{},i{},{:.10g}\n", u, v, m(u, v));
      }
    }
  };
  matrix("affinity.csv", bundle.affinity);
  matrix("true_propensity.csv", bundle.final_propensity);
}

}  // namespace tips
