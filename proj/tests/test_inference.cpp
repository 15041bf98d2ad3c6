#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "mfckge/decoupler.hpp"
#include "mfckge/inference.hpp"
#include "mfckge/oracle.hpp"

using namespace mfckge;
using namespace testutil;

TEST_CASE("candidate relations come from the training delta only") {
  // Snapshot 2's delta: anchor 0 is head of (0,1,3) and tail of (3,2,0);
  // (0,0,1) is an old repeat and the valid/test triples must not count.
  auto kg = GrowingKG::from_snapshots(
      {snap(1, {{0, 0, 1}}, {}, {}, 2, 1),
       snap(2, {{0, 0, 1}, {0, 1, 3}, {3, 2, 0}}, {{0, 1, 1}}, {{1, 2, 0}}, 4, 3)},
      {}, {});

  SUBCASE("both incidence roles") {
    CHECK(candidate_relations(kg, 0, 2) == std::vector<RelationId>{1, 2});
  }
  SUBCASE("head role only") {
    CHECK(candidate_relations(kg, 0, 2, false) == std::vector<RelationId>{1});
  }
  SUBCASE("absent anchor gives the empty set") {
    CHECK(candidate_relations(kg, 2, 2).empty());
  }
  SUBCASE("valid and test incidences are invisible") {
    // Entity 1 touches snapshot 2 only through valid/test and the repeat.
    CHECK(candidate_relations(kg, 1, 2).empty());
  }
}

TEST_CASE("relation similarity against the query relation") {
  auto store = make_store(2, 1);
  put_relation(store, 0, {1.0f, 0.0f});
  put_relation(store, 1, {0.0f, 1.0f});
  put_relation(store, 2, {1.0f, 1.0f});
  std::vector<RelationId> rels{0, 1, 2};
  auto sims = relation_similarity_set(rels, 0, store);
  REQUIRE(sims.size() == 3);
  CHECK(sims[0] == doctest::Approx(1.0));
  CHECK(sims[1] == doctest::Approx(0.0));
  CHECK(sims[2] == doctest::Approx(0.70711).epsilon(1e-5));
}

TEST_CASE("top-k average") {
  SUBCASE("takes the k largest") {
    std::vector<double> s{0.9, 0.8, 0.1, 0.05};
    CHECK(topk_average(s, 3) == doctest::Approx(0.6));
  }
  SUBCASE("under-full sets average what exists") {
    std::vector<double> s{0.5};
    CHECK(topk_average(s, 3) == doctest::Approx(0.5));
  }
  SUBCASE("empty sets give zero") {
    CHECK(topk_average({}, 3) == 0.0);
  }
  SUBCASE("k below one is a config error") {
    std::vector<double> s{0.5};
    CHECK_THROWS_AS(topk_average(s, 0), ConfigError);
  }
  SUBCASE("non-increasing in k on a fixed multiset") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> s;
      for (int i = 0; i < 8; ++i) s.push_back(rng.uniform(-1.0, 1.0));
      double prev = topk_average(s, 1);
      for (int k = 2; k <= 10; ++k) {
        double cur = topk_average(s, k);
        CHECK(cur <= prev + 1e-12);
        prev = cur;
      }
    }
  }
}

TEST_CASE("softmax of raw importance values") {
  SUBCASE("constants flatten to uniform") {
    std::vector<double> d{0.4, 0.4, 0.4, 0.4};
    auto b = softmax(d);
    for (double v : b) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("hand values") {
    std::vector<double> d{0.9, 0.3, 0.3};
    auto b = softmax(d);
    // exp(0.9)/(exp(0.9)+2 exp(0.3)) and exp(0.3)/(...)
    CHECK(b[0] == doctest::Approx(0.476731).epsilon(1e-5));
    CHECK(b[1] == doctest::Approx(0.261635).epsilon(1e-5));
    CHECK(b[2] == doctest::Approx(0.261635).epsilon(1e-5));
  }
  SUBCASE("normalization, positivity, argmax, shift-invariance") {
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
      std::size_t n = 1 + rng.uniform_index(6);
      std::vector<double> d, shifted;
      for (std::size_t i = 0; i < n; ++i) d.push_back(rng.uniform(-3.0, 3.0));
      double c = rng.uniform(-50.0, 50.0);
      for (double v : d) shifted.push_back(v + c);
      auto b = softmax(d);
      auto bs = softmax(shifted);
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(b[i] > 0.0);
        CHECK(std::abs(b[i] - bs[i]) <= 1e-9);
        sum += b[i];
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
      auto am = std::max_element(d.begin(), d.end()) - d.begin();
      auto bm = std::max_element(b.begin(), b.end()) - b.begin();
      CHECK(am == bm);
    }
  }
}

namespace {

// Two snapshots: (0,r0,1) then (2,r1,0); r1 sits 45 degrees from r0, so the
// second snapshot matters less for r0 queries but is not ignored.
struct TwoSnapFixture {
  GrowingKG kg;
  EmbeddingStore store;
  TrainConfig cfg;

  TwoSnapFixture()
      : kg(GrowingKG::from_snapshots(
            {snap(1, {{0, 0, 1}}, {}, {}, 2, 1), snap(2, {{2, 1, 0}}, {}, {}, 3, 2)}, {}, {})),
        store(make_store(2, 2)), cfg(inference_config(2)) {
    put_explicit(store, 1, 0, {0.0f, 0.0f});
    put_explicit(store, 1, 1, {1.0f, 0.0f});
    put_explicit(store, 2, 0, {0.0f, 1.0f});
    put_explicit(store, 2, 2, {1.0f, 1.0f});
    put_relation(store, 0, {1.0f, 0.0f});
    put_relation(store, 1, {1.0f, 1.0f});
  }
};

}  // namespace

TEST_CASE("snapshot importance composes candidates, top-k and softmax") {
  TwoSnapFixture fx;
  Query q{Direction::Tail, 0, 0, 2};

  SUBCASE("hand deltas and betas") {
    auto profile = snapshot_importance(q, 3, fx.kg, fx.store);
    REQUIRE(profile.delta.size() == 2);
    CHECK(profile.delta[0] == doctest::Approx(1.0));          // r0 vs itself
    CHECK(profile.delta[1] == doctest::Approx(0.70710678));   // r1 vs r0
    auto expected = softmax(profile.delta);
    CHECK(profile.beta[0] == doctest::Approx(expected[0]).epsilon(1e-12));
    CHECK(profile.beta[1] == doctest::Approx(expected[1]).epsilon(1e-12));
    CHECK(profile.beta[0] > profile.beta[1]);
  }
  SUBCASE("head-only incidence zeroes the second snapshot") {
    auto profile = snapshot_importance(q, 3, fx.kg, fx.store, false);
    CHECK(profile.delta[1] == 0.0);  // anchor 0 is only ever a tail in delta 2
  }
  SUBCASE("empty candidate sets pin delta to zero") {
    Query other{Direction::Tail, 1, 0, 2};  // entity 1 touches no delta-2 triple
    auto profile = snapshot_importance(other, 3, fx.kg, fx.store);
    CHECK(profile.delta[1] == 0.0);
  }
}

TEST_CASE("per-snapshot scores redirect through pointers and respect direction") {
  TwoSnapFixture fx;

  SUBCASE("exact translation scores zero") {
    Query q{Direction::Tail, 0, 0, 2};
    auto psi = snapshot_score(q, 1, 1, fx.store, 1);
    REQUIRE(psi.has_value());
    CHECK(*psi == doctest::Approx(0.0));
  }
  SUBCASE("entities keep their latest vector through later snapshots") {
    Query q{Direction::Tail, 0, 0, 2};
    // At j=2 entity 1 has no entry; lookup walks back to space 1 while the
    // anchor uses its retrained space-2 vector.
    auto psi = snapshot_score(q, 1, 2, fx.store, 1);
    REQUIRE(psi.has_value());
    CHECK(*psi == doctest::Approx(-1.0));  // ||[0,1]+[1,0]-[1,0]||_1
  }
  SUBCASE("future entities do not contribute") {
    Query q{Direction::Tail, 0, 0, 2};
    CHECK(snapshot_score(q, 2, 1, fx.store, 1) == std::nullopt);
  }
  SUBCASE("an unrepresentable anchor blocks the snapshot") {
    Query q{Direction::Tail, 2, 1, 2};
    CHECK(snapshot_score(q, 0, 1, fx.store, 1) == std::nullopt);
  }
  SUBCASE("head queries translate the candidate") {
    Query q{Direction::Head, 1, 0, 1};  // (?, r0, e1)
    auto psi = snapshot_score(q, 0, 1, fx.store, 1);
    REQUIRE(psi.has_value());
    CHECK(*psi == doctest::Approx(0.0));  // [0,0]+[1,0] = [1,0] = e1
  }
  SUBCASE("a dropped candidate scores with the pointed-to vector") {
    auto store = make_store(2, 3);
    put_explicit(store, 1, 1, {1.0f, 0.0f});
    put_explicit(store, 2, 1, {0.0f, 1.0f});
    put_pointer(store, 3, 1, 1);
    put_explicit(store, 3, 0, {0.0f, 0.0f});
    put_relation(store, 0, {1.0f, 0.0f});
    Query q{Direction::Tail, 0, 0, 3};
    auto psi = snapshot_score(q, 1, 3, store, 1);
    REQUIRE(psi.has_value());
    CHECK(*psi == doctest::Approx(0.0));  // snapshot-1 vector, not space 2's
  }
}

namespace {

// Three spaces engineered so candidate 1 has per-snapshot scores (-1,-5,-5)
// and candidate 2 exists only at snapshot 3 with score -2.
struct AggregateFixture {
  GrowingKG kg;
  EmbeddingStore store;
  TrainConfig cfg;

  AggregateFixture()
      : kg(GrowingKG::from_snapshots({snap(1, {{0, 0, 1}}, {}, {}, 2, 1),
                                      snap(2, {{0, 0, 1}}, {}, {}, 2, 1),
                                      snap(3, {{2, 0, 0}}, {}, {}, 4, 1)},
                                     {}, {})),
        store(make_store(2, 3)), cfg(inference_config(2)) {
    for (int j = 1; j <= 3; ++j) put_explicit(store, j, 0, {0.0f, 0.0f});
    put_explicit(store, 1, 1, {0.0f, 0.0f});   // dist 1 from [1,0]
    put_explicit(store, 2, 1, {6.0f, 0.0f});   // dist 5
    put_explicit(store, 3, 1, {-4.0f, 0.0f});  // dist 5
    put_explicit(store, 3, 2, {3.0f, 0.0f});   // dist 2, first appearance 3
    put_relation(store, 0, {1.0f, 0.0f});
  }

  static ImportanceProfile profile(std::vector<double> beta) {
    ImportanceProfile p;
    p.delta.assign(beta.size(), 0.0);
    p.beta = std::move(beta);
    return p;
  }
};

}  // namespace

TEST_CASE("aggregation renormalizes importance over contributing snapshots") {
  AggregateFixture fx;
  Query q{Direction::Tail, 0, 0, 3};

  SUBCASE("hand-weighted combination") {
    InferenceContext ctx(fx.kg, fx.store, fx.cfg);
    auto psi = ctx.aggregate_score(q, 1, AggregateFixture::profile({0.8, 0.1, 0.1}));
    REQUIRE(psi.has_value());
    CHECK(*psi == doctest::Approx(-1.8).epsilon(1e-12));
  }
  SUBCASE("uniform importance reduces to the plain mean") {
    InferenceContext ctx(fx.kg, fx.store, fx.cfg);
    auto psi = ctx.aggregate_score(q, 1, AggregateFixture::profile({1.0 / 3, 1.0 / 3, 1.0 / 3}));
    REQUIRE(psi.has_value());
    CHECK(*psi == doctest::Approx(-11.0 / 3).epsilon(1e-12));
  }
  SUBCASE("a single contributing snapshot returns its score unweighted") {
    InferenceContext ctx(fx.kg, fx.store, fx.cfg);
    auto psi = ctx.aggregate_score(q, 2, AggregateFixture::profile({0.8, 0.1, 0.1}));
    REQUIRE(psi.has_value());
    CHECK(*psi == doctest::Approx(-2.0));  // beta_3 = 0.1 cancels
  }
  SUBCASE("without renormalization the raw weight stays") {
    TrainConfig cfg = fx.cfg;
    cfg.renormalize = false;
    InferenceContext ctx(fx.kg, fx.store, cfg);
    auto psi = ctx.aggregate_score(q, 2, AggregateFixture::profile({0.8, 0.1, 0.1}));
    REQUIRE(psi.has_value());
    CHECK(*psi == doctest::Approx(-0.2).epsilon(1e-12));
  }
  SUBCASE("candidates with no contributing snapshot are excluded") {
    InferenceContext ctx(fx.kg, fx.store, fx.cfg);
    // Entity 3 is in the final vocabulary but was never embedded.
    CHECK(ctx.aggregate_score(q, 3, AggregateFixture::profile({0.8, 0.1, 0.1})) == std::nullopt);
  }
}

TEST_CASE("query ranking") {
  SUBCASE("the unique exact answer ranks first") {
    auto kg = GrowingKG::from_snapshots({snap(1, {{0, 0, 1}}, {}, {}, 3, 1)}, {}, {});
    auto store = make_store(2, 1);
    put_explicit(store, 1, 0, {0.0f, 0.0f});
    put_explicit(store, 1, 1, {1.0f, 0.0f});
    put_explicit(store, 1, 2, {5.0f, 5.0f});
    put_relation(store, 0, {1.0f, 0.0f});
    InferenceContext ctx(kg, store, inference_config(2));
    auto out = ctx.rank_query({Direction::Tail, 0, 0, 1}, 1, {}, 5);
    REQUIRE(out.has_value());
    CHECK(out->rank == 1);
    REQUIRE(out->top.size() == 3);
    CHECK(out->top[0].first == 1);
    CHECK(out->top[0].second == doctest::Approx(0.0));
    CHECK(out->top[1].first == 0);
    CHECK(out->top[1].second == doctest::Approx(-1.0));
    CHECK(out->top[2].first == 2);
  }

  SUBCASE("filtering removes other true answers but never the gold") {
    auto kg = GrowingKG::from_snapshots(
        {snap(1, {{0, 0, 1}, {0, 0, 2}, {0, 0, 3}}, {}, {}, 4, 1)}, {}, {});
    auto store = make_store(2, 1);
    put_explicit(store, 1, 0, {0.0f, 0.0f});
    put_explicit(store, 1, 1, {0.9f, 0.0f});  // gold, slightly off
    put_explicit(store, 1, 2, {1.0f, 0.0f});  // exact
    put_explicit(store, 1, 3, {1.0f, 0.1f});  // near exact
    put_relation(store, 0, {1.0f, 0.0f});
    InferenceContext ctx(kg, store, inference_config(2));
    Query q{Direction::Tail, 0, 0, 1};

    auto raw = ctx.rank_query(q, 1, {}, 10);
    REQUIRE(raw.has_value());
    CHECK(raw->rank == 3);

    auto filtered = ctx.rank_query(q, 1, accumulated_filter_set(kg, 1), 10);
    REQUIRE(filtered.has_value());
    CHECK(filtered->rank == 1);
    REQUIRE(filtered->top.size() == 2);  // gold and the anchor survive
    for (const auto& [e, s] : filtered->top) CHECK((e == 0 || e == 1));
  }

  SUBCASE("ties count against the gold") {
    auto kg = GrowingKG::from_snapshots({snap(1, {{0, 0, 1}}, {}, {}, 4, 1)}, {}, {});
    auto store = make_store(2, 1);
    put_explicit(store, 1, 0, {0.0f, 0.0f});
    put_explicit(store, 1, 2, {1.0f, 0.0f});
    put_explicit(store, 1, 3, {1.0f, 0.0f});
    put_relation(store, 0, {1.0f, 0.0f});
    InferenceContext ctx(kg, store, inference_config(2));

    SUBCASE("two strictly better candidates") {
      put_explicit(store, 1, 1, {1.5f, 0.0f});  // -0.5, above the anchor's -1
      auto out = ctx.rank_query({Direction::Tail, 0, 0, 1}, 1, {}, 5);
      REQUIRE(out.has_value());
      CHECK(out->rank == 3);
    }
    SUBCASE("a tie with the gold pushes it down") {
      put_explicit(store, 1, 1, {1.0f, 0.0f});
      auto out = ctx.rank_query({Direction::Tail, 0, 0, 1}, 1, {}, 5);
      REQUIRE(out.has_value());
      CHECK(out->rank == 3);  // gold after both equal-scored candidates
    }
  }

  SUBCASE("a gold outside the snapshot vocabulary is a protocol error") {
    auto kg = GrowingKG::from_snapshots({snap(1, {{0, 0, 1}}, {}, {}, 2, 1)}, {}, {});
    auto store = make_store(2, 1);
    put_explicit(store, 1, 0, {0.0f, 0.0f});
    put_explicit(store, 1, 1, {1.0f, 0.0f});
    put_relation(store, 0, {1.0f, 0.0f});
    InferenceContext ctx(kg, store, inference_config(2));
    CHECK_THROWS_AS(ctx.rank_query({Direction::Tail, 0, 0, 1}, 7, {}, 5), ProtocolError);
  }

  SUBCASE("an unscorable gold yields no outcome") {
    auto kg = GrowingKG::from_snapshots({snap(1, {{0, 0, 1}}, {}, {}, 3, 1)}, {}, {});
    auto store = make_store(2, 1);
    put_explicit(store, 1, 0, {0.0f, 0.0f});
    put_explicit(store, 1, 1, {1.0f, 0.0f});
    put_relation(store, 0, {1.0f, 0.0f});
    InferenceContext ctx(kg, store, inference_config(2));
    // Entity 2 is vocabulary-only: no embedding, no score, no rank.
    CHECK(ctx.rank_query({Direction::Tail, 0, 0, 1}, 2, {}, 5) == std::nullopt);
  }
}

TEST_CASE("ranking matches the exhaustive reference on random instances") {
  int ranked = 0;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    auto inst = random_instance(seed);
    TrainConfig cfg = inference_config(4);
    InferenceContext ctx(inst.kg, inst.store, cfg);
    int i = inst.kg.snapshot_count();
    auto filter = accumulated_filter_set(inst.kg, i);
    for (const Triple& t : inst.kg.test(i)) {
      Query q{Direction::Tail, t.head, t.relation, i};
      auto got = ctx.rank_query(q, t.tail, filter, 10);
      auto want = oracle::brute_force_rank(q, t.tail, filter, inst.kg, inst.store, cfg);
      REQUIRE(got.has_value() == want.has_value());
      if (got) {
        CHECK(got->rank == *want);
        ++ranked;
      }
      Query hq{Direction::Head, t.tail, t.relation, i};
      auto got_h = ctx.rank_query(hq, t.head, filter, 10);
      auto want_h = oracle::brute_force_rank(hq, t.head, filter, inst.kg, inst.store, cfg);
      REQUIRE(got_h.has_value() == want_h.has_value());
      if (got_h) CHECK(got_h->rank == *want_h);
    }
  }
  CHECK(ranked > 30);
}

TEST_CASE("importance profile invariants hold across random queries") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto inst = random_instance(seed);
    TrainConfig cfg = inference_config(4);
    InferenceContext ctx(inst.kg, inst.store, cfg);
    Rng rng(seed + 77);
    int i = inst.kg.snapshot_count();
    for (int trial = 0; trial < 10; ++trial) {
      EntityId anchor = static_cast<EntityId>(rng.uniform_index(inst.kg.entity_count(i)));
      RelationId rel = static_cast<RelationId>(rng.uniform_index(inst.kg.relation_count(i)));
      const auto& p = ctx.importance(anchor, rel, i);
      REQUIRE(p.beta.size() == static_cast<std::size_t>(i));
      double sum = 0.0;
      for (double b : p.beta) {
        CHECK(b > 0.0);
        sum += b;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
      auto am_d = std::max_element(p.delta.begin(), p.delta.end()) - p.delta.begin();
      CHECK(p.beta[static_cast<std::size_t>(am_d)] ==
            doctest::Approx(*std::max_element(p.beta.begin(), p.beta.end())).epsilon(1e-12));
    }
  }
}

TEST_CASE("importance profiles are cached per query key") {
  TwoSnapFixture fx;
  InferenceContext ctx(fx.kg, fx.store, fx.cfg);
  const auto& a = ctx.importance(0, 0, 2);
  const auto& b = ctx.importance(0, 0, 2);
  CHECK(&a == &b);  // second lookup hits the cache
  const auto& c = ctx.importance(0, 0, 1);
  CHECK(&a != &c);
  // A context on the same sealed store reproduces the identical profile.
  InferenceContext ctx2(fx.kg, fx.store, fx.cfg);
  const auto& d = ctx2.importance(0, 0, 2);
  CHECK(a.beta == d.beta);
  CHECK(a.delta == d.delta);
}

TEST_CASE("inference never mutates the store") {
  auto inst = random_instance(3);
  TrainConfig cfg = inference_config(4);
  auto before = store_content_hash(inst.store);
  InferenceContext ctx(inst.kg, inst.store, cfg);
  int i = inst.kg.snapshot_count();
  auto filter = accumulated_filter_set(inst.kg, i);
  for (const Triple& t : inst.kg.test(i)) {
    ctx.rank_query({Direction::Tail, t.head, t.relation, i}, t.tail, filter, 5);
    ctx.explain_query({Direction::Tail, t.head, t.relation, i}, 5);
  }
  CHECK(store_content_hash(inst.store) == before);
}

TEST_CASE("recompression changes scores only through dropped entries") {
  // Candidate 1 is near-duplicate across spaces 1/2 (dropped at theta 0.95);
  // candidate 2 stays distinct everywhere.
  auto store = make_store(2, 2);
  store.keep_dropped = true;
  put_explicit(store, 1, 0, {0.0f, 0.0f});
  put_explicit(store, 2, 0, {0.0f, 0.0f});
  put_explicit(store, 1, 1, {1.0f, 0.0f});
  put_explicit(store, 2, 1, {0.99f, 0.01f});
  put_explicit(store, 1, 2, {0.0f, 1.0f});
  put_explicit(store, 2, 2, {1.0f, 1.0f});
  put_relation(store, 0, {1.0f, 0.0f});
  Query q{Direction::Tail, 0, 0, 2};

  auto before_1 = snapshot_score(q, 1, 2, store, 1);
  auto before_2 = snapshot_score(q, 2, 2, store, 1);
  recompress(store, 0.95);
  REQUIRE(store.space(2).entries.at(1).is_pointer());
  REQUIRE(store.space(2).entries.at(2).is_explicit());

  auto after_1 = snapshot_score(q, 1, 2, store, 1);
  auto after_2 = snapshot_score(q, 2, 2, store, 1);
  CHECK(*after_2 == *before_2);                  // untouched entry, identical score
  CHECK(*after_1 == doctest::Approx(0.0));       // now scored via the space-1 vector
  CHECK(*after_1 != *before_1);
  CHECK(*snapshot_score(q, 1, 1, store, 1) == doctest::Approx(0.0));
}

TEST_CASE("explanations expose the full decision") {
  AggregateFixture fx;
  InferenceContext ctx(fx.kg, fx.store, fx.cfg);
  Query q{Direction::Tail, 0, 0, 3};

  SUBCASE("structure and clamping") {
    auto rec = ctx.explain_query(q, 50);  // m far beyond |E_3|
    CHECK(rec["direction"] == "tail");
    CHECK(rec["anchor"] == 0);
    CHECK(rec["anchor_label"] == "e0");
    CHECK(rec["relation_label"] == "r0");
    CHECK(rec["snapshot"] == 3);
    REQUIRE(rec["beta"].size() == 3);
    double sum = 0.0;
    for (double b : rec["beta"]) sum += b;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    REQUIRE(rec["per_snapshot"].size() == 3);
    CHECK(rec["per_snapshot"][0]["snapshot"] == 1);
    CHECK(rec["per_snapshot"][0]["beta"] == doctest::Approx(double(rec["beta"][0])));
    // Snapshot 1 can score entities 0 and 1 only; no error from the huge m.
    CHECK(rec["per_snapshot"][0]["top"].size() == 2);
    REQUIRE(rec["top"].size() >= 3);
    double prev = 1e300;
    for (const auto& row : rec["top"]) {
      CHECK(double(row["score"]) <= prev);
      prev = double(row["score"]);
      CHECK(row.contains("entity"));
      CHECK(row.contains("label"));
    }
  }
  SUBCASE("uniform importance equals the unweighted mean ranking") {
    TrainConfig cfg = fx.cfg;
    cfg.uniform_importance = true;
    InferenceContext uctx(fx.kg, fx.store, cfg);
    auto rec = uctx.explain_query(q, 10);
    // Hand means: entity 0 -> -1 (dist 1 each snapshot), entity 1 -> -11/3,
    // entity 2 -> -2 (single snapshot).
    REQUIRE(rec["top"].size() == 3);
    CHECK(rec["top"][0]["entity"] == 0);
    CHECK(double(rec["top"][0]["score"]) == doctest::Approx(-1.0));
    CHECK(rec["top"][1]["entity"] == 2);
    CHECK(double(rec["top"][1]["score"]) == doctest::Approx(-2.0));
    CHECK(rec["top"][2]["entity"] == 1);
    CHECK(double(rec["top"][2]["score"]) == doctest::Approx(-11.0 / 3));
  }
  SUBCASE("a dominant snapshot draws the answer from its own top list") {
    // Give the query relation a twin in delta 3 only: snapshot 3 dominates.
    auto kg = GrowingKG::from_snapshots({snap(1, {{0, 1, 1}}, {}, {}, 2, 2),
                                         snap(2, {{0, 1, 1}}, {}, {}, 2, 2),
                                         snap(3, {{0, 0, 2}}, {}, {}, 3, 2)},
                                        {}, {});
    auto store = make_store(2, 3);
    put_explicit(store, 1, 0, {0.0f, 0.0f});
    put_explicit(store, 1, 1, {0.0f, 1.0f});
    put_explicit(store, 2, 0, {0.0f, 0.0f});
    put_explicit(store, 3, 0, {0.0f, 0.0f});
    put_explicit(store, 3, 2, {1.0f, 0.0f});
    put_relation(store, 0, {1.0f, 0.0f});
    put_relation(store, 1, {0.0f, 1.0f});
    InferenceContext dctx(kg, store, inference_config(2));
    auto rec = dctx.explain_query({Direction::Tail, 0, 0, 3}, 3);
    REQUIRE(rec["beta"].size() == 3);
    CHECK(double(rec["beta"][2]) > double(rec["beta"][0]));
    CHECK(double(rec["beta"][2]) > double(rec["beta"][1]));
    CHECK(rec["top"][0]["entity"] == rec["per_snapshot"][2]["top"][0]["entity"]);
    CHECK(rec["top"][0]["entity"] == 2);
  }
}
