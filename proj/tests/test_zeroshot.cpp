#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "vatt/zeroshot.hpp"

using namespace vatt;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

AttributeSchema tiny_schema() {
  AttributeSchema s;
  s.attrs.push_back({"speed", "pace", false, {"slow", "steady", "fast"}});
  s.attrs.push_back({"indoor", "setting", true, {"0", "1"}});
  s.attrs.push_back({"paired", "setting", true, {"0", "1"}});
  s.validate();
  return s;
}

// three candidates with distinct signatures and embeddings
CandidateSet tiny_candidates(const AttributeSchema& s, std::size_t emb_dim,
                             std::uint64_t seed) {
  CandidateSet c;
  c.verbs = {"swim", "walk", "rest"};
  std::vector<LabelVector> labels = {{2, 0, 0}, {1, 0, 1}, {0, 1, 0}};
  Prng rng(seed);
  for (std::size_t i = 0; i < 3; ++i) {
    c.signatures.push_back(binarize(s, labels[i]));
    Vec e(emb_dim);
    for (double& x : e) x = rng.uniform(-1.0, 1.0);
    c.embeddings.push_back(e);
  }
  return c;
}

}  // namespace

TEST_CASE("attribute-pivot scores are signature dot projected features") {
  AttributeSchema s = tiny_schema();
  CandidateSet c = tiny_candidates(s, 2, 4);
  ZeroShotHead h;
  h.init(s, 2, 2, true, false);
  Prng rng(5);
  for (Mat& w : h.w_attr)
    for (double& x : w.a) x = rng.uniform(-1.0, 1.0);

  Vec g{0.7, -0.3};
  Vec q = attr_projection(h, g);
  REQUIRE(q.size() == s.binarized_width());
  Vec logits = attr_logits(h, c, g);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(logits[i] == Approx(dot(c.signatures[i], q)).epsilon(1e-14));
}

TEST_CASE("joint logits equal the exact sum of the branch logits") {
  AttributeSchema s = tiny_schema();
  CandidateSet c = tiny_candidates(s, 3, 6);
  ZeroShotHead h;
  h.init(s, 2, 3, true, true);
  Prng rng(7);
  for (Mat& w : h.w_attr)
    for (double& x : w.a) x = rng.uniform(-1.0, 1.0);
  for (double& x : h.w_emb.a) x = rng.uniform(-1.0, 1.0);

  Vec g{0.2, 0.9};
  Vec a = zs_logits(h, c, g, ZsBranch::Attr);
  Vec e = zs_logits(h, c, g, ZsBranch::Emb);
  Vec j = zs_logits(h, c, g, ZsBranch::Joint);
  for (std::size_t i = 0; i < 3; ++i) CHECK(j[i] == a[i] + e[i]);
}

TEST_CASE("joint training loss is the three-term sum") {
  AttributeSchema s = tiny_schema();
  CandidateSet c = tiny_candidates(s, 3, 6);
  ZeroShotHead h;
  h.init(s, 2, 3, true, true);
  Prng rng(8);
  for (Mat& w : h.w_attr)
    for (double& x : w.a) x = rng.uniform(-1.0, 1.0);
  for (double& x : h.w_emb.a) x = rng.uniform(-1.0, 1.0);

  Vec g{-0.4, 0.6};
  double L = zs_instance_loss(h, c, g, 1, ZsBranch::Joint, nullptr);
  double want = cross_entropy(zs_logits(h, c, g, ZsBranch::Attr), 1) +
                cross_entropy(zs_logits(h, c, g, ZsBranch::Emb), 1) +
                cross_entropy(zs_logits(h, c, g, ZsBranch::Joint), 1);
  CHECK(L == Approx(want).epsilon(1e-12));
}

TEST_CASE("the three branches can pick three different winners") {
  // two binary attributes; signatures (+,+), (+,-), (-,+)
  AttributeSchema s;
  s.attrs.push_back({"a", "g", true, {"0", "1"}});
  s.attrs.push_back({"b", "g", true, {"0", "1"}});
  s.validate();

  CandidateSet c;
  c.verbs = {"p", "q", "r"};
  c.signatures = {Vec{1, 1}, Vec{1, -1}, Vec{-1, 1}};
  c.embeddings = {Vec{0.0}, Vec{0.9}, Vec{0.95}};

  ZeroShotHead h;
  h.init(s, 1, 1, true, true);
  h.w_attr[0].a = {0.5};  // q = (0.5, 0.3) for g = 1
  h.w_attr[1].a = {0.3};
  h.w_emb.a = {1.0};

  Vec g{1.0};
  Vec attr = zs_logits(h, c, g, ZsBranch::Attr);    // 0.8, 0.2, -0.2
  Vec emb = zs_logits(h, c, g, ZsBranch::Emb);      // 0, 0.9, 0.95
  Vec joint = zs_logits(h, c, g, ZsBranch::Joint);  // 0.8, 1.1, 0.75
  CHECK(predict_topk(attr, 1)[0] == 0);
  CHECK(predict_topk(emb, 1)[0] == 2);
  CHECK(predict_topk(joint, 1)[0] == 1);
}

TEST_CASE("zero-shot training learns a separable toy problem") {
  AttributeSchema s = tiny_schema();
  CandidateSet c = tiny_candidates(s, 3, 9);
  FeatureSet train;
  train.dim = 4;
  train.verbs = c.verbs;
  Prng rng(10);
  std::vector<Vec> protos(3, Vec(4));
  for (auto& p : protos)
    for (double& x : p) x = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < 30; ++i) {
    std::size_t cls = i % 3;
    Vec f = protos[cls];
    for (double& x : f) x += 0.05 * rng.gaussian();
    train.features.push_back(f);
    train.labels.push_back(static_cast<std::uint32_t>(cls));
  }
  train.validate();

  ZsTrainConfig cfg;
  cfg.branch = ZsBranch::Joint;
  cfg.lr = 0.05;
  cfg.epochs = 60;
  cfg.seed = 2;
  ZsTrainResult res = train_zeroshot(train, c, 3, s, cfg);
  CHECK(res.loss_history.front() > res.loss_history.back());

  std::size_t hits = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    Vec logits = zs_logits(res.head, c, train.features[i], ZsBranch::Joint);
    if (predict_topk(logits, 1)[0] == train.labels[i]) ++hits;
  }
  CHECK(hits == train.size());

  // a label outside the candidate set is rejected
  FeatureSet bad = train;
  bad.verbs = {"swim", "walk", "unknown_verb"};
  CHECK_THROWS_WITH(train_zeroshot(bad, c, 3, s, cfg),
                    ContainsSubstring("outside the candidate set"));
}

TEST_CASE("top-k prediction is stable with ties to the lower index") {
  Vec logits{0.5, 0.9, 0.5, 0.1};
  auto top = predict_topk(logits, 3);
  CHECK(top == std::vector<std::size_t>{1, 0, 2});
  CHECK_THROWS(predict_topk(logits, 0));
  CHECK_THROWS(predict_topk(logits, 5));
  CHECK(predict_topk(logits, 4).size() == 4);
}

TEST_CASE("probability product ensemble matches the frozen hand case") {
  std::vector<Vec> dists = {Vec{0.6, 0.4}, Vec{0.3, 0.7}};
  Vec p = prob_product_ensemble(dists);
  CHECK(p[0] == Approx(0.391304347826087).epsilon(1e-14));
  CHECK(p[1] == Approx(0.6086956521739131).epsilon(1e-14));

  // a uniform source changes nothing
  std::vector<Vec> with_uniform = {Vec{0.25, 0.75}, Vec{0.5, 0.5}};
  Vec q = prob_product_ensemble(with_uniform);
  CHECK(q[0] == Approx(0.25).margin(1e-15));
  CHECK(q[1] == Approx(0.75).margin(1e-15));

  CHECK_THROWS(prob_product_ensemble(std::vector<Vec>{Vec{1.0}}));
  std::vector<Vec> ragged = {Vec{0.5, 0.5}, Vec{1.0}};
  CHECK_THROWS(prob_product_ensemble(ragged));
}

TEST_CASE("product of softmaxes equals softmax of summed logits") {
  Prng rng(3);
  for (int t = 0; t < 5; ++t) {
    Vec a(6), b(6), sum(6);
    for (int i = 0; i < 6; ++i) {
      a[i] = rng.uniform(-3.0, 3.0);
      b[i] = rng.uniform(-3.0, 3.0);
      sum[i] = a[i] + b[i];
    }
    std::vector<Vec> dists = {softmax(a), softmax(b)};
    Vec prod = prob_product_ensemble(dists);
    Vec direct = softmax(sum);
    for (int i = 0; i < 6; ++i)
      CHECK(prod[i] == Approx(direct[i]).margin(1e-12));
  }
}

TEST_CASE("hubness skewness matches the frozen hand case") {
  // predictions: class 0 five times, classes 1..3 once each
  std::vector<std::size_t> preds = {0, 0, 0, 0, 0, 1, 2, 3};
  HubnessStats h = hubness_stats(preds, 4);
  CHECK(h.counts == std::vector<std::size_t>{5, 1, 1, 1});
  CHECK(h.top_share == Approx(5.0 / 8.0).epsilon(1e-15));
  CHECK(h.skewness == Approx(1.1547005383792515).epsilon(1e-12));

  // perfectly balanced predictions have zero skew
  std::vector<std::size_t> flat = {0, 1, 2, 3};
  CHECK(hubness_stats(flat, 4).skewness == 0.0);
}

TEST_CASE("margin projection loss counts only violating classes") {
  AttributeSchema s = tiny_schema();
  CandidateSet c = tiny_candidates(s, 2, 12);
  DeviseModel m;
  m.w_emb = Mat(2, 2);
  m.w_emb.a = {1.0, 0.0, 0.0, 1.0};  // identity

  Vec g{0.0, 0.0};  // projection is the zero vector
  // every wrong class scores 0 - 0 + margin -> 2 * margin total
  double L = devise_instance_loss(m, c, g, 0, nullptr);
  CHECK(L == Approx(2 * m.margin).epsilon(1e-12));

  // inactive hinge: make the true class dominate
  Mat grad(2, 2);
  Vec far{10.0, 10.0};
  CandidateSet c2 = c;
  c2.embeddings = {Vec{1.0, 1.0}, Vec{-1.0, -1.0}, Vec{-1.0, 0.0}};
  double L2 = devise_instance_loss(m, c2, far, 0, &grad);
  CHECK(L2 == 0.0);
  for (double x : grad.a) CHECK(x == 0.0);
}

TEST_CASE("margin projection training separates a toy problem") {
  AttributeSchema s = tiny_schema();
  CandidateSet c = tiny_candidates(s, 3, 9);
  FeatureSet train;
  train.dim = 3;
  train.verbs = c.verbs;
  for (std::size_t i = 0; i < 30; ++i) {
    std::size_t cls = i % 3;
    // features live right on the class embeddings
    train.features.push_back(c.embeddings[cls]);
    train.labels.push_back(static_cast<std::uint32_t>(cls));
  }
  train.validate();

  DeviseConfig cfg;
  cfg.lr = 0.05;
  cfg.epochs = 80;
  cfg.seed = 4;
  DeviseTrainResult res = devise_train(train, c, cfg);
  CHECK(res.loss_history.back() < res.loss_history.front());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    Vec sc = devise_scores(res.model, c, train.features[i]);
    if (predict_topk(sc, 1)[0] == train.labels[i]) ++hits;
  }
  CHECK(hits == train.size());
}

TEST_CASE("independent classifiers recover separable attribute columns") {
  AttributeSchema s = tiny_schema();
  // four classes, feature = its own signature (perfectly separable)
  CandidateSet c;
  c.verbs = {"a", "b", "c", "d"};
  std::vector<LabelVector> labels = {{0, 0, 0}, {1, 0, 1}, {2, 1, 0}, {0, 1, 1}};
  for (const auto& l : labels) c.signatures.push_back(binarize(s, l));

  FeatureSet train;
  train.dim = s.binarized_width();
  train.verbs = c.verbs;
  for (std::size_t i = 0; i < 4; ++i)
    for (int rep = 0; rep < 3; ++rep) {
      train.features.push_back(c.signatures[i]);
      train.labels.push_back(static_cast<std::uint32_t>(i));
    }
  train.validate();

  DapConfig cfg;
  cfg.lr = 0.1;
  cfg.epochs = 300;
  cfg.seed = 5;
  DapTrainResult res = dap_train(train, c, cfg);
  CHECK(res.warnings.empty());

  for (std::size_t i = 0; i < 4; ++i) {
    Vec p = dap_predict(res.model, c, c.signatures[i]);
    CHECK(predict_topk(p, 1)[0] == i);
  }
}

TEST_CASE("constant attribute columns fall back to the empirical rate") {
  AttributeSchema s;
  s.attrs.push_back({"x", "g", true, {"0", "1"}});
  s.attrs.push_back({"y", "g", true, {"0", "1"}});
  s.validate();

  CandidateSet c;
  c.verbs = {"a", "b"};
  c.signatures = {binarize(s, {1, 0}), binarize(s, {1, 1})};  // x always 1

  FeatureSet train;
  train.dim = 2;
  train.verbs = c.verbs;
  train.features = {Vec{0.0, 1.0}, Vec{1.0, 0.0}};
  train.labels = {0, 1};
  train.validate();

  DapConfig cfg;
  cfg.seed = 6;
  DapTrainResult res = dap_train(train, c, cfg);
  REQUIRE(res.warnings.size() == 1);
  CHECK_THAT(res.warnings[0], ContainsSubstring("constant across training"));
  CHECK(res.model.is_degenerate[0]);
  CHECK(res.model.const_rate[0] == 1.0);  // both classes have x = +1
  CHECK_FALSE(res.model.is_degenerate[1]);
}

TEST_CASE("the prior-normalized variant changes scores but stays finite") {
  AttributeSchema s = tiny_schema();
  CandidateSet c = tiny_candidates(s, 2, 13);
  FeatureSet train;
  train.dim = 2;
  train.verbs = c.verbs;
  Prng rng(14);
  for (std::size_t i = 0; i < 12; ++i) {
    std::size_t cls = i % 3;
    train.features.push_back(Vec{rng.uniform(-1, 1), rng.uniform(-1, 1)});
    train.labels.push_back(static_cast<std::uint32_t>(cls));
  }
  train.validate();

  DapConfig cfg;
  cfg.seed = 7;
  DapTrainResult res = dap_train(train, c, cfg);
  Vec plain = dap_scores(res.model, c, train.features[0]);
  res.model.use_prior = true;
  Vec normed = dap_scores(res.model, c, train.features[0]);
  CHECK(plain.size() == normed.size());
  bool different = false;
  for (std::size_t i = 0; i < plain.size(); ++i) {
    CHECK(std::isfinite(normed[i]));
    if (std::fabs(plain[i] - normed[i]) > 1e-12) different = true;
  }
  CHECK(different);
}

TEST_CASE("closed-form bilinear solve matches the hand-solved 2x2 case") {
  // identity features, one +-1 signature column per class, gamma = lambda = 1/2
  Mat g(2, 2), y(2, 2), s(1, 2);
  g.a = {1, 0, 0, 1};
  y.a = {1, 0, 0, 1};
  s.a = {1, -1};
  Mat v = eszl_solve(g, y, s, 0.5, 0.5);
  REQUIRE(v.rows == 2);
  REQUIRE(v.cols == 1);
  CHECK(v(0, 0) == Approx(4.0 / 15.0).margin(1e-10));
  CHECK(v(1, 0) == Approx(-4.0 / 15.0).margin(1e-10));
}

TEST_CASE("closed-form solution is a stationary point of the objective") {
  Prng rng(15);
  std::size_t F = 6, N = 12, C = 4, A = 5;
  Mat g(F, N), y(N, C), s(A, C);
  for (double& x : g.a) x = rng.uniform(-1, 1);
  y.zero();
  for (std::size_t i = 0; i < N; ++i) y(i, i % C) = 1.0;
  for (double& x : s.a) x = rng.uniform() < 0.5 ? -1.0 : 1.0;

  Mat v = eszl_solve(g, y, s, 0.3, 0.7);
  CHECK(eszl_grad_norm(g, y, s, 0.3, 0.7, v) < 1e-8);
}

TEST_CASE("ridge grid selection returns the best validation accuracy") {
  AttributeSchema s = tiny_schema();
  CandidateSet c = tiny_candidates(s, 2, 16);
  FeatureSet train;
  train.dim = 5;
  train.verbs = c.verbs;
  Prng rng(17);
  std::vector<Vec> protos(3, Vec(5));
  for (auto& p : protos)
    for (double& x : p) x = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < 24; ++i) {
    std::size_t cls = i % 3;
    Vec f = protos[cls];
    for (double& x : f) x += 0.1 * rng.gaussian();
    train.features.push_back(f);
    train.labels.push_back(static_cast<std::uint32_t>(cls));
  }
  train.validate();
  FeatureSet val = train;  // same distribution is fine for the grid walk

  EszlSelection sel = eszl_select(train, c, val, c);
  CHECK(sel.val_top1 > 0.9);
  Mat direct = eszl_fit(train, c, sel.gamma, sel.lambda);
  Vec sc = eszl_scores(direct, c, train.features[0]);
  Vec sc2 = eszl_scores(sel.v, c, train.features[0]);
  for (std::size_t i = 0; i < sc.size(); ++i)
    CHECK(sc[i] == Approx(sc2[i]).margin(1e-12));
}

TEST_CASE("candidate assembly pulls signatures and embedding fallbacks") {
  AttributeSchema s = tiny_schema();
  std::unordered_map<std::string, LabelVector> gold = {{"swim", {2, 0, 0}},
                                                       {"walk", {1, 0, 1}}};
  std::vector<std::string> verbs = {"swim", "walk"};
  LookupTable lt = encode_lookup(verbs, gold, s);

  EmbeddingTable t;
  t.reserve_dim(2);
  t.add("swim", Vec{1.0, 0.0});
  t.add("walk", Vec{0.0, 1.0});

  CandidateSet c = make_candidates(verbs, &lt, &t);
  CHECK(c.signatures[0] == binarize(s, {2, 0, 0}));
  CHECK(c.embeddings[1] == Vec{0.0, 1.0});

  std::vector<std::string> missing = {"swim", "fly"};
  CHECK_THROWS_WITH(make_candidates(missing, &lt, nullptr),
                    ContainsSubstring("no row for verb"));
}

TEST_CASE("evaluation maps gold labels through candidate indices") {
  AttributeSchema s = tiny_schema();
  CandidateSet c = tiny_candidates(s, 2, 18);
  FeatureSet fs;
  fs.dim = 1;
  fs.verbs = {"walk", "swim"};  // note: feature-set order differs from candidates
  fs.features = {Vec{0.0}, Vec{1.0}};
  fs.labels = {0, 1};  // walk, swim
  fs.validate();

  // scorer that always ranks candidate 0 (swim) first
  auto scorer = [&](std::span<const double>) { return Vec{3.0, 2.0, 1.0}; };
  ZsEval ev = eval_topk(fs, c, scorer, 2);
  CHECK(ev.top1 == 0.5);   // only the "swim" item hits
  CHECK(ev.topk == 1.0);   // top-2 covers walk as well
  CHECK(ev.top1_pred == std::vector<std::size_t>{0, 0});
}
