#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ucp/builders.hpp"
#include "ucp/planner.hpp"

using namespace ucp;

namespace {

PruneConfig cfg(ThresholdSign sign, int beta) {
  PruneConfig c;
  c.sign = sign;
  c.beta = beta;
  return c;
}

// Brute force: survivors of the plain rule, then floor, then half rule.
std::vector<int> select_oracle(const std::vector<double>& s, const PruneConfig& c) {
  const int C = static_cast<int>(s.size());
  if (c.half_rule) {
    bool plateau = true;
    double lo = s[0], hi = s[0];
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      if (std::abs(v - 0.5) > c.half_rule_tolerance) plateau = false;
    }
    if (plateau && hi - lo <= c.half_rule_tolerance) {
      // The floor still applies; all scores tie, so it extends the prefix.
      std::vector<int> out;
      for (int i = 0; i < std::max((C + 1) / 2, std::min(c.min_channels, C)); ++i) out.push_back(i);
      return out;
    }
  }
  double sum = 0;
  for (double v : s) sum += v;
  const double lambda = std::pow(10.0, -c.beta);
  const double thre = (c.sign == ThresholdSign::Minus ? 1 - lambda : 1 + lambda) * (sum / C);
  std::vector<int> out;
  for (int i = 0; i < C; ++i)
    if (s[i] >= thre) out.push_back(i);
  if (static_cast<int>(out.size()) < std::min(c.min_channels, C)) {
    // Repeatedly take the best remaining index, lowest index on ties.
    out.clear();
    std::vector<bool> used(s.size(), false);
    for (int k = 0; k < std::min(c.min_channels, C); ++k) {
      int best = -1;
      for (int i = 0; i < C; ++i)
        if (!used[i] && (best < 0 || s[i] > s[best])) best = i;
      used[best] = true;
      out.push_back(best);
    }
    std::sort(out.begin(), out.end());
  }
  return out;
}

// Exhaustive: the unique k-subset that beats every outsider (ties by index).
std::vector<int> top_k_exhaustive(const std::vector<double>& s, int k) {
  const int C = static_cast<int>(s.size());
  std::vector<std::vector<int>> found;
  for (unsigned mask = 0; mask < (1u << C); ++mask) {
    if (__builtin_popcount(mask) != k) continue;
    bool ok = true;
    for (int i = 0; i < C && ok; ++i)
      for (int j = 0; j < C && ok; ++j)
        if ((mask >> i & 1) && !(mask >> j & 1))
          ok = s[i] > s[j] || (s[i] == s[j] && i < j);
    if (ok) {
      std::vector<int> v;
      for (int i = 0; i < C; ++i)
        if (mask >> i & 1) v.push_back(i);
      found.push_back(v);
    }
  }
  REQUIRE(found.size() == 1);
  return found.front();
}

std::vector<double> random_scores(std::mt19937_64& rng, int C) {
  std::uniform_real_distribution<double> d(0.01, 0.99);
  std::vector<double> s(static_cast<std::size_t>(C));
  for (auto& v : s) v = d(rng);
  return s;
}

// Scores that keep exactly `kept[i]` channels of the i-th conv at (minus, 1).
ScoreRecord engineered(const Graph& g, const std::vector<int>& kept, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ScoreRecord r;
  const auto ids = g.conv_ids();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int C = g.node(ids[i]).out_channels;
    std::vector<int> order(static_cast<std::size_t>(C));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    LayerScore l;
    l.layer = "mseb_" + ids[i];
    l.conv = ids[i];
    l.channels = C;
    l.samples = 1;
    l.mean.assign(static_cast<std::size_t>(C), 0.01);
    for (int k = 0; k < kept[i]; ++k) l.mean[order[k]] = 0.9;
    l.std.assign(l.mean.size(), 0.0);
    r.layers.push_back(l);
  }
  return r;
}

ScoreRecord block_scores(const Graph& g, std::mt19937_64& rng) {
  ScoreRecord r;
  for (const auto& b : g.blocks) {
    LayerScore l;
    l.layer = "mseb_" + b.id;
    l.conv = b.type == BlockType::Basic ? b.last_conv() : b.middle_conv();
    l.block = b.id;
    l.stage = b.stage;
    l.channels = g.node(l.conv).out_channels;
    l.samples = 1;
    l.mean = random_scores(rng, l.channels);
    l.std.assign(l.mean.size(), 0.05);
    r.layers.push_back(l);
  }
  return r;
}

}  // namespace

TEST_SUITE("planner") {
  TEST_CASE("threshold examples") {
    const std::vector<double> a{0.1, 0.2, 0.3, 0.4};
    CHECK(threshold(a, cfg(ThresholdSign::Minus, 1)).value == doctest::Approx(0.225));
    const std::vector<double> b{0.1, 0.26, 0.3, 0.34};
    CHECK(threshold(b, cfg(ThresholdSign::Plus, 1)).value == doctest::Approx(0.275));
  }

  TEST_CASE("threshold factor is exact") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 200; ++trial) {
      const auto s = random_scores(rng, 1 + static_cast<int>(rng() % 40));
      for (int beta : {1, 2, 4, 8})
        for (auto sign : {ThresholdSign::Minus, ThresholdSign::Plus}) {
          const auto t = threshold(s, cfg(sign, beta));
          const double lambda = std::pow(10.0, -beta);
          CHECK(t.factor == (sign == ThresholdSign::Minus ? 1.0 - lambda : 1.0 + lambda));
          const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
          CHECK(t.mean == mean);
          CHECK(t.value == t.factor * mean);
        }
    }
  }

  TEST_CASE("select_channels examples") {
    const std::vector<double> a{0.1, 0.2, 0.3, 0.4};
    CHECK(select_channels(a, cfg(ThresholdSign::Minus, 1)) == std::vector<int>{2, 3});
    const std::vector<double> flat(6, 0.37);
    CHECK(select_channels(flat, cfg(ThresholdSign::Minus, 3)).size() == 6);
    PruneConfig half = cfg(ThresholdSign::Minus, 1);
    half.half_rule = true;
    CHECK(select_channels(std::vector<double>(8, 0.5), half) == std::vector<int>{0, 1, 2, 3});
    CHECK(select_channels(std::vector<double>(7, 0.5), half) == std::vector<int>{0, 1, 2, 3});
    // Plateau away from 0.5 is not halved.
    CHECK(select_channels(std::vector<double>(8, 0.3), half).size() == 8);
    half.min_channels = 6;
    CHECK(select_channels(std::vector<double>(8, 0.5), half) == std::vector<int>{0, 1, 2, 3, 4, 5});
  }

  TEST_CASE("ties at the threshold are kept") {
    // Build a vector whose smallest entry equals the threshold bit for bit.
    const PruneConfig c = cfg(ThresholdSign::Minus, 1);
    std::vector<double> s{0.0, 0.8, 0.8, 0.8};
    for (int it = 0; it < 50; ++it) {
      const double t = threshold(s, c).value;
      if (s[0] == t) break;
      s[0] = t;
    }
    REQUIRE(s[0] == threshold(s, c).value);
    CHECK(select_channels(s, c).size() == 4);
  }

  TEST_CASE("min-channel floor keeps the top scores") {
    PruneConfig c = cfg(ThresholdSign::Plus, 1);
    c.min_channels = 3;
    const std::vector<double> s{0.1, 0.9, 0.1, 0.1, 0.1};
    CHECK(select_channels(s, c) == std::vector<int>{0, 1, 2});
    c.min_channels = 10;
    CHECK(select_channels(s, c).size() == 5);
  }

  TEST_CASE("select_channels agrees with the brute-force rule") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> width(1, 64);
    for (int trial = 0; trial < 300; ++trial) {
      auto s = random_scores(rng, width(rng));
      if (trial % 10 == 0) s.assign(s.size(), 0.5);
      for (int beta : {1, 2, 4, 8})
        for (auto sign : {ThresholdSign::Minus, ThresholdSign::Plus})
          for (int floor : {1, 4})
            for (bool half : {false, true}) {
              PruneConfig c = cfg(sign, beta);
              c.min_channels = floor;
              c.half_rule = half;
              CHECK(select_channels(s, c) == select_oracle(s, c));
            }
    }
  }

  TEST_CASE("top_k matches exhaustive enumeration") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 60; ++trial) {
      const int C = 1 + static_cast<int>(rng() % 10);
      std::vector<double> s(static_cast<std::size_t>(C));
      for (auto& v : s) v = static_cast<double>(rng() % 4) / 4.0;  // plenty of ties
      for (int k = 1; k <= C; ++k) CHECK(top_k(s, k) == top_k_exhaustive(s, k));
    }
  }

  TEST_CASE("vgg19 engineered scores reproduce published widths") {
    const Graph g = build("vgg19", 100);
    const std::vector<int> three{40, 64, 128, 128, 256, 256, 256, 256, 256, 133, 195, 256, 256, 256, 256, 256};
    const std::vector<int> eight{35, 64, 128, 128, 128, 128, 128, 128, 256, 129, 235, 394, 256, 6, 230, 104};
    for (const auto* w : {&three, &eight}) {
      const PruningPlan p = plan_vgg(engineered(g, *w, 7), cfg(ThresholdSign::Minus, 1), &g);
      REQUIRE(p.layers.size() == 16);
      for (std::size_t i = 0; i < 16; ++i) CHECK(p.layers[i].kept_count() == (*w)[i]);
    }
  }

  TEST_CASE("vgg plan: identity scores keep everything; missing entries are named") {
    const Graph g = build("tiny-vgg", 4);
    std::vector<int> full;
    for (const auto& id : g.conv_ids()) full.push_back(g.node(id).out_channels);
    const PruningPlan p = plan_vgg(engineered(g, full, 1), cfg(ThresholdSign::Minus, 1), &g);
    for (const auto& l : p.layers) CHECK(l.kept_count() == l.original);

    ScoreRecord partial = engineered(g, full, 1);
    const std::string dropped = partial.layers[2].conv;
    partial.layers.erase(partial.layers.begin() + 2);
    CHECK_THROWS_WITH_AS(plan_vgg(partial, cfg(ThresholdSign::Minus, 1), &g),
                         doctest::Contains(dropped.c_str()), PlanError);
  }

  TEST_CASE("beta 1 prunes a subset of what beta 8 prunes") {
    std::mt19937_64 rng(4);
    const Graph g = build("tiny-vgg", 4);
    for (int trial = 0; trial < 50; ++trial) {
      ScoreRecord r;
      for (const auto& id : g.conv_ids()) {
        LayerScore l;
        l.layer = l.conv = id;
        l.channels = g.node(id).out_channels;
        l.mean = random_scores(rng, l.channels);
        r.layers.push_back(l);
      }
      const auto a = plan_vgg(r, cfg(ThresholdSign::Minus, 1), &g);
      const auto b = plan_vgg(r, cfg(ThresholdSign::Minus, 8), &g);
      for (std::size_t i = 0; i < a.layers.size(); ++i) {
        const auto& ka = a.layers[i].kept;
        const auto& kb = b.layers[i].kept;
        CHECK(std::includes(ka.begin(), ka.end(), kb.begin(), kb.end()));
      }
    }
  }

  TEST_CASE("stage-uniform plan on resnet56") {
    std::mt19937_64 rng(5);
    const Graph g = build("resnet56", 10);
    PruneConfig c;
    c.policy = PrunePolicy::ResnetStageUniform;
    c.stage_targets = {{1, 8}, {2, 32}, {3, 32}};
    const PruningPlan p = plan_stage_uniform(block_scores(g, rng), g, c);
    REQUIRE(p.stages.size() == 3);
    CHECK(p.stages[0].kept.size() == 8);
    CHECK(p.stages[1].kept.size() == 32);
    CHECK(p.stages[2].kept.size() == 32);
    // Stage 1 has identity shortcuts, so the stem carries the stage channels.
    CHECK(std::find(p.stages[0].layers.begin(), p.stages[0].layers.end(), "stem") != p.stages[0].layers.end());
    CHECK(p.stages[0].layers.size() == 1 + 9);
    CHECK(p.stages[1].layers.size() == 9 + 1);
    CHECK(p.layers.empty());
  }

  TEST_CASE("stage-uniform keeps the top-k of the block-mean scores") {
    std::mt19937_64 rng(6);
    const Graph g = build("tiny-resnet", 4);
    for (int trial = 0; trial < 30; ++trial) {
      const ScoreRecord r = block_scores(g, rng);
      PruneConfig c;
      c.policy = PrunePolicy::ResnetStageUniform;
      c.stage_targets = {{1, 3}, {2, 9}, {3, 20}};
      const PruningPlan p = plan_stage_uniform(r, g, c);
      for (const auto& sp : p.stages) {
        const auto& st = g.stages[sp.stage - 1];
        std::vector<double> avg(static_cast<std::size_t>(st.width), 0.0);
        for (const auto& bid : st.blocks)
          for (int i = 0; i < st.width; ++i) avg[i] += r.find(g.block(bid)->last_conv())->mean[i];
        for (auto& v : avg) v /= static_cast<double>(st.blocks.size());
        if (st.width <= 16) CHECK(sp.kept == top_k_exhaustive(avg, sp.target));
        else CHECK(sp.kept == top_k(avg, sp.target));
      }
    }
  }

  TEST_CASE("stage-uniform identity targets and errors") {
    std::mt19937_64 rng(7);
    const Graph g = build("tiny-resnet", 4);
    const ScoreRecord r = block_scores(g, rng);
    PruneConfig c;
    c.policy = PrunePolicy::ResnetStageUniform;
    c.stage_targets = {{1, 8}, {2, 16}, {3, 32}};
    for (const auto& sp : plan_stage_uniform(r, g, c).stages) CHECK(static_cast<int>(sp.kept.size()) == sp.original);

    c.stage_targets[2] = 17;
    CHECK_THROWS_WITH_AS(plan_stage_uniform(r, g, c), doctest::Contains("exceeds"), PlanError);
    c.stage_targets.erase(2);
    CHECK_THROWS_AS(plan_stage_uniform(r, g, c), PlanError);
    c.stage_targets[2] = 8;
    ScoreRecord missing = r;
    missing.layers.pop_back();
    CHECK_THROWS_WITH_AS(plan_stage_uniform(missing, g, c), doctest::Contains("missing block scores"), PlanError);
  }

  TEST_CASE("dispersion heuristic halves noisy stages") {
    std::mt19937_64 rng(8);
    const Graph g = build("tiny-resnet", 4);
    ScoreRecord r = block_scores(g, rng);
    for (auto& l : r.layers) l.std.assign(l.std.size(), l.stage == 2 ? 0.3 : 0.01);
    PruneConfig c;
    c.policy = PrunePolicy::ResnetStageUniform;
    c.dispersion_tau = 0.1;
    const auto p = plan_stage_uniform(r, g, c);
    CHECK(p.stages[0].target == 8);
    CHECK(p.stages[1].target == 8);
    CHECK(p.stages[2].target == 32);
  }

  TEST_CASE("bottleneck plans touch only middle convs") {
    std::mt19937_64 rng(9);
    const Graph g = build("preresnet164", 100);
    const ScoreRecord r = block_scores(g, rng);
    PruneConfig c = cfg(ThresholdSign::Minus, 2);
    c.policy = PrunePolicy::BottleneckMiddle;
    const PruningPlan p = plan_bottleneck(r, g, c);
    CHECK(p.layers.size() == 54);
    for (const auto& l : p.layers) {
      bool middle = false;
      for (const auto& b : g.blocks) middle |= b.middle_conv() == l.layer;
      CHECK(middle);
    }
    ScoreRecord half = r;
    for (auto& l : half.layers) l.mean.assign(l.mean.size(), 0.5);
    c.half_rule = true;
    for (const auto& l : plan_bottleneck(half, g, c).layers) CHECK(l.kept_count() == (l.original + 1) / 2);

    ScoreRecord missing = r;
    missing.layers.erase(missing.layers.begin());
    CHECK_THROWS_AS(plan_bottleneck(missing, g, c), PlanError);
    CHECK_THROWS_AS(plan_bottleneck(r, build("tiny-vgg", 4), c), PlanError);
  }

  TEST_CASE("single bottleneck: exhaustive threshold sweep") {
    std::mt19937_64 rng(10);
    const Graph g = build("tiny-preresnet", 4);
    for (int trial = 0; trial < 20; ++trial) {
      const ScoreRecord r = block_scores(g, rng);
      for (int beta = 1; beta <= 8; ++beta)
        for (auto sign : {ThresholdSign::Minus, ThresholdSign::Plus})
          for (int floor = 1; floor <= 4; ++floor) {
            PruneConfig c = cfg(sign, beta);
            c.min_channels = floor;
            const auto p = plan_bottleneck(r, g, c);
            for (const auto& l : p.layers) CHECK(l.kept == select_oracle(r.find(l.layer)->mean, c));
          }
    }
  }

  TEST_CASE("plans are deterministic, well-formed and round-trip through json") {
    std::mt19937_64 rng(11);
    const Graph g = build("tiny-resnet", 4);
    const ScoreRecord r = block_scores(g, rng);
    PruneConfig c;
    c.policy = PrunePolicy::ResnetStageUniform;
    c.stage_targets = {{1, 4}, {2, 8}, {3, 8}};
    const auto a = make_plan(r, g, c);
    const auto b = make_plan(r, g, c);
    CHECK(plan_to_json(a).dump() == plan_to_json(b).dump());
    CHECK(plan_to_json(plan_from_json(plan_to_json(a))).dump() == plan_to_json(a).dump());
    for (const auto& s : a.stages) {
      CHECK(std::is_sorted(s.kept.begin(), s.kept.end()));
      CHECK(std::adjacent_find(s.kept.begin(), s.kept.end()) == s.kept.end());
    }
  }

  TEST_CASE("config validation and parsing") {
    PruneConfig c;
    c.beta = 0;
    CHECK_THROWS_AS(c.check(), PlanError);
    c.beta = 1;
    c.min_channels = 0;
    CHECK_THROWS_AS(c.check(), PlanError);
    CHECK_THROWS_AS(threshold_sign_from_string("sideways"), PlanError);
    CHECK(prune_policy_from_string("bottleneck-middle") == PrunePolicy::BottleneckMiddle);
  }

  TEST_CASE("width plans") {
    const Graph g = build("tiny-vgg", 4);
    const std::vector<int> w{2, 3, 4, 5};
    const auto p = width_plan(g, w);
    for (std::size_t i = 0; i < 4; ++i) CHECK(p.layers[i].kept_count() == w[i]);
    const std::vector<int> bad{2, 3, 4};
    CHECK_THROWS_AS(width_plan(g, bad), PlanError);
  }
}
