#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vatt/adam.hpp"
#include "vatt/encoders.hpp"
#include "vatt/features.hpp"
#include "vatt/ops.hpp"
#include "vatt/prng.hpp"
#include "vatt/schema.hpp"
#include "vatt/tensor.hpp"
#include "vatt/text.hpp"

namespace vatt {

// ---------------------------------------------------------------------------
// candidate sets

// The classes a scorer ranks over: V_train while training, V_test at test
// time. Signature rows come from the attribute lookup table, embedding rows
// from the word-vector table; either side is optional per head.
struct CandidateSet {
  std::vector<std::string> verbs;
  std::vector<Vec> signatures;  // +-1 rows, all equal width
  std::vector<Vec> embeddings;  // fixed word vectors, all equal width

  bool has_signatures() const { return !signatures.empty(); }
  bool has_embeddings() const { return !embeddings.empty(); }
  std::size_t size() const { return verbs.size(); }

  std::size_t index_of(const std::string& verb) const {
    for (std::size_t i = 0; i < verbs.size(); ++i)
      if (verbs[i] == verb) return i;
    fail("candidate set does not contain verb '" + verb + "'");
  }
};

inline CandidateSet make_candidates(std::span<const std::string> verbs,
                                    const LookupTable* lookup,
                                    const EmbeddingTable* table) {
  if (verbs.empty()) fail("empty candidate set");
  CandidateSet out;
  out.verbs.assign(verbs.begin(), verbs.end());
  if (lookup) {
    std::unordered_map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < lookup->verbs.size(); ++i)
      idx.emplace(lookup->verbs[i], i);
    for (const auto& v : verbs) {
      auto it = idx.find(v);
      if (it == idx.end()) fail("lookup table has no row for verb '" + v + "'");
      out.signatures.push_back(lookup->signature(it->second));
    }
  }
  if (table) {
    for (const auto& v : verbs) {
      const double* row = table->row_or_null(v);
      Vec e;
      if (row) {
        e.assign(row, row + table->dim);
      } else {
        // multi-token template fallback: mean of known token vectors
        e = encode_emb(v, *table);
      }
      out.embeddings.push_back(std::move(e));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// attribute-pivot / embedding-pivot heads

enum class ZsBranch { Attr, Emb, Joint };

inline std::string zs_branch_name(ZsBranch b) {
  switch (b) {
    case ZsBranch::Attr: return "attr";
    case ZsBranch::Emb: return "emb";
    case ZsBranch::Joint: return "joint";
  }
  fail("unknown branch");
}

inline ZsBranch parse_zs_branch(const std::string& s) {
  if (s == "attr") return ZsBranch::Attr;
  if (s == "emb") return ZsBranch::Emb;
  if (s == "joint") return ZsBranch::Joint;
  fail("unknown zero-shot branch '" + s + "'");
}

// Linear maps from image features to attribute space (one block per
// attribute, signature-aligned) and to word-embedding space. No bias terms.
struct ZeroShotHead {
  AttributeSchema schema;
  std::size_t feat_dim = 0;
  std::size_t emb_dim = 0;
  bool has_attr = false;
  bool has_emb = false;
  std::vector<Mat> w_attr;  // per attribute: (binary ? 1 : card) x feat_dim
  Mat w_emb;                // emb_dim x feat_dim

  void init(const AttributeSchema& s, std::size_t f, std::size_t d, bool attr,
            bool emb) {
    schema = s;
    feat_dim = f;
    emb_dim = d;
    has_attr = attr;
    has_emb = emb;
    w_attr.clear();
    if (attr)
      for (const auto& a : s.attrs)
        w_attr.emplace_back(a.binary ? 1 : a.card(), f);
    if (emb) w_emb = Mat(d, f);
  }
};

struct ZsGrads {
  std::vector<Mat> w_attr;
  Mat w_emb;

  void init(const ZeroShotHead& h) {
    w_attr.clear();
    for (const Mat& w : h.w_attr) w_attr.emplace_back(w.rows, w.cols);
    if (h.has_emb) w_emb = Mat(h.w_emb.rows, h.w_emb.cols);
  }

  void zero() {
    for (Mat& w : w_attr) w.zero();
    w_emb.zero();
  }
};

// Stacks the per-attribute projections W^(k) g into one signature-aligned
// vector q, so class scores are plain dot products with signature rows.
inline Vec attr_projection(const ZeroShotHead& h, std::span<const double> g) {
  if (!h.has_attr) fail("head has no attribute branch");
  if (g.size() != h.feat_dim) fail("feature width mismatch");
  Vec q;
  q.reserve(h.schema.binarized_width());
  for (const Mat& w : h.w_attr) {
    Vec part = matvec(w, g);
    q.insert(q.end(), part.begin(), part.end());
  }
  return q;
}

inline Vec attr_logits(const ZeroShotHead& h, const CandidateSet& c,
                       std::span<const double> g) {
  if (c.size() == 0) fail("empty candidate set");
  if (!c.has_signatures()) fail("candidate set lacks signature rows");
  Vec q = attr_projection(h, g);
  Vec logits(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.signatures[i].size() != q.size()) fail("signature width mismatch");
    logits[i] = dot(c.signatures[i], q);
  }
  return logits;
}

inline Vec emb_logits(const ZeroShotHead& h, const CandidateSet& c,
                      std::span<const double> g) {
  if (c.size() == 0) fail("empty candidate set");
  if (!h.has_emb) fail("head has no embedding branch");
  if (!c.has_embeddings()) fail("candidate set lacks embedding rows");
  Vec e = matvec(h.w_emb, g);
  Vec logits(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.embeddings[i].size() != e.size()) fail("embedding width mismatch");
    logits[i] = dot(c.embeddings[i], e);
  }
  return logits;
}

// Element-wise sum of the two branch scores before any softmax.
inline Vec joint_logits(const ZeroShotHead& h, const CandidateSet& c,
                        std::span<const double> g) {
  Vec a = attr_logits(h, c, g);
  Vec e = emb_logits(h, c, g);
  if (a.size() != e.size()) fail("branch candidate mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += e[i];
  return a;
}

inline Vec zs_logits(const ZeroShotHead& h, const CandidateSet& c,
                     std::span<const double> g, ZsBranch branch) {
  switch (branch) {
    case ZsBranch::Attr: return attr_logits(h, c, g);
    case ZsBranch::Emb: return emb_logits(h, c, g);
    case ZsBranch::Joint: return joint_logits(h, c, g);
  }
  fail("unknown branch");
}

// ---------------------------------------------------------------------------
// training

namespace detail {

// Scatters a signature-aligned gradient dq back into the per-attribute blocks.
inline void add_attr_grad(const ZeroShotHead& h, std::span<const double> dq,
                          std::span<const double> g, ZsGrads& grads) {
  std::size_t off = 0;
  for (std::size_t k = 0; k < h.w_attr.size(); ++k) {
    std::size_t rows = h.w_attr[k].rows;
    for (std::size_t r = 0; r < rows; ++r)
      axpy(dq[off + r], g, grads.w_attr[k].row(r));
    off += rows;
  }
}

// d(logit)/dq summed over classes: S^T (p - e_target).
inline Vec signature_pullback(const CandidateSet& c, const Vec& d_logits) {
  Vec dq(c.signatures[0].size(), 0.0);
  for (std::size_t i = 0; i < c.size(); ++i)
    axpy(d_logits[i], c.signatures[i], dq);
  return dq;
}

inline Vec embedding_pullback(const CandidateSet& c, const Vec& d_logits) {
  Vec de(c.embeddings[0].size(), 0.0);
  for (std::size_t i = 0; i < c.size(); ++i)
    axpy(d_logits[i], c.embeddings[i], de);
  return de;
}

}  // namespace detail

// Cross-entropy at one labelled feature. Joint mode sums three equally
// weighted terms: attributes only, embeddings only, and their logit sum.
inline double zs_instance_loss(const ZeroShotHead& h, const CandidateSet& c,
                               std::span<const double> g, std::size_t target,
                               ZsBranch branch, ZsGrads* grads) {
  if (target >= c.size()) fail("target index out of range");
  double loss = 0.0;
  Vec a, e;
  if (branch != ZsBranch::Emb) a = attr_logits(h, c, g);
  if (branch != ZsBranch::Attr) e = emb_logits(h, c, g);

  Vec dq, de;
  auto accumulate = [&](const Vec& logits, bool into_attr, bool into_emb) {
    loss += cross_entropy(logits, target);
    if (!grads) return;
    Vec p = softmax(logits);
    p[target] -= 1.0;
    if (into_attr) {
      Vec d = detail::signature_pullback(c, p);
      if (dq.empty()) dq = std::move(d); else axpy(1.0, d, dq);
    }
    if (into_emb) {
      Vec d = detail::embedding_pullback(c, p);
      if (de.empty()) de = std::move(d); else axpy(1.0, d, de);
    }
  };

  if (branch == ZsBranch::Attr) {
    accumulate(a, true, false);
  } else if (branch == ZsBranch::Emb) {
    accumulate(e, false, true);
  } else {
    accumulate(a, true, false);
    accumulate(e, false, true);
    Vec joint = a;
    for (std::size_t i = 0; i < joint.size(); ++i) joint[i] += e[i];
    accumulate(joint, true, true);
  }

  if (grads) {
    if (!dq.empty()) detail::add_attr_grad(h, dq, g, *grads);
    if (!de.empty()) add_outer(grads->w_emb, 1.0, de, g);
  }
  return loss;
}

struct ZsTrainConfig {
  ZsBranch branch = ZsBranch::Joint;
  double lr = 1e-3;
  std::size_t batch = 32;
  std::size_t epochs = 50;
  double adam_eps = 1e-8;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

struct ZsTrainResult {
  ZeroShotHead head;
  std::vector<double> loss_history;
};

inline ZsTrainResult train_zeroshot(const FeatureSet& train,
                                    const CandidateSet& candidates,
                                    std::size_t emb_dim,
                                    const AttributeSchema& schema,
                                    const ZsTrainConfig& cfg) {
  if (train.size() == 0) fail("train_zeroshot: empty feature set");
  bool want_attr = cfg.branch != ZsBranch::Emb;
  bool want_emb = cfg.branch != ZsBranch::Attr;
  if (want_attr && !candidates.has_signatures())
    fail("train_zeroshot: attribute branch needs signature rows");
  if (want_emb && !candidates.has_embeddings())
    fail("train_zeroshot: embedding branch needs embedding rows");

  ZsTrainResult res;
  res.head.init(schema, train.dim, emb_dim, want_attr, want_emb);

  std::unordered_map<std::string, std::size_t> cand_index;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    cand_index.emplace(candidates.verbs[i], i);
  std::vector<std::size_t> targets(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const std::string& verb = train.verbs[train.labels[i]];
    auto it = cand_index.find(verb);
    if (it == cand_index.end())
      fail("train_zeroshot: label '" + verb + "' outside the candidate set");
    targets[i] = it->second;
  }

  ZsGrads grads;
  grads.init(res.head);
  std::vector<std::pair<double*, std::pair<const double*, std::size_t>>> blocks;
  std::vector<AdamState> states;
  AdamConfig acfg{cfg.lr, 0.9, 0.999, cfg.adam_eps};
  for (std::size_t k = 0; k < res.head.w_attr.size(); ++k) {
    blocks.push_back({res.head.w_attr[k].a.data(),
                      {grads.w_attr[k].a.data(), res.head.w_attr[k].a.size()}});
    states.emplace_back(res.head.w_attr[k].a.size(), acfg);
  }
  if (want_emb) {
    blocks.push_back({res.head.w_emb.a.data(),
                      {grads.w_emb.a.data(), res.head.w_emb.a.size()}});
    states.emplace_back(res.head.w_emb.a.size(), acfg);
  }

  Prng order_rng(derive_seed(cfg.seed, 0));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      std::size_t stop = std::min(order.size(), start + cfg.batch);
      grads.zero();
      for (std::size_t i = start; i < stop; ++i)
        epoch_loss += zs_instance_loss(res.head, candidates,
                                       train.features[order[i]],
                                       targets[order[i]], cfg.branch, &grads);
      double inv = 1.0 / static_cast<double>(stop - start);
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        double* w = blocks[b].first;
        double* g = const_cast<double*>(blocks[b].second.first);
        std::size_t n = blocks[b].second.second;
        for (std::size_t j = 0; j < n; ++j) g[j] = g[j] * inv + cfg.l2 * w[j];
        adam_step({w, n}, {g, n}, states[b]);
      }
    }
    res.loss_history.push_back(epoch_loss / static_cast<double>(train.size()));
  }
  return res;
}

// ---------------------------------------------------------------------------
// ranking, evaluation, hubness

// Indices of the k best classes, descending score; ties toward the lower
// verb index (stable).
inline std::vector<std::size_t> predict_topk(std::span<const double> logits,
                                             std::size_t k) {
  if (k < 1 || k > logits.size()) fail("predict_topk: k out of range");
  std::vector<std::size_t> idx(logits.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  idx.resize(k);
  return idx;
}

struct ZsEval {
  double top1 = 0.0;
  double topk = 0.0;
  std::size_t k = 1;
  std::vector<std::size_t> top1_pred;  // per test item, candidate index
};

// Runs any per-feature scorer over a labelled feature set.
inline ZsEval eval_topk(
    const FeatureSet& fs, const CandidateSet& candidates,
    const std::function<Vec(std::span<const double>)>& scorer, std::size_t k) {
  if (fs.size() == 0) fail("eval_topk: empty feature set");
  std::unordered_map<std::string, std::size_t> cand_index;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    cand_index.emplace(candidates.verbs[i], i);

  ZsEval ev;
  ev.k = k;
  std::size_t hit1 = 0, hitk = 0;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    const std::string& verb = fs.verbs[fs.labels[i]];
    auto it = cand_index.find(verb);
    if (it == cand_index.end())
      fail("eval_topk: gold label '" + verb + "' outside the candidate set");
    Vec logits = scorer(fs.features[i]);
    if (logits.size() != candidates.size()) fail("eval_topk: scorer width mismatch");
    auto top = predict_topk(logits, k);
    ev.top1_pred.push_back(top[0]);
    if (top[0] == it->second) ++hit1;
    if (std::find(top.begin(), top.end(), it->second) != top.end()) ++hitk;
  }
  ev.top1 = static_cast<double>(hit1) / static_cast<double>(fs.size());
  ev.topk = static_cast<double>(hitk) / static_cast<double>(fs.size());
  return ev;
}

struct HubnessStats {
  std::vector<std::size_t> counts;  // predictions per candidate class
  double top_share = 0.0;           // max count / total
  double skewness = 0.0;            // population standardized third moment
};

inline HubnessStats hubness_stats(std::span<const std::size_t> top1_preds,
                                  std::size_t n_classes) {
  if (top1_preds.empty()) fail("hubness_stats: no predictions");
  HubnessStats hs;
  hs.counts.assign(n_classes, 0);
  for (std::size_t p : top1_preds) {
    if (p >= n_classes) fail("hubness_stats: prediction index out of range");
    hs.counts[p] += 1;
  }
  std::size_t total = top1_preds.size();
  std::size_t top = *std::max_element(hs.counts.begin(), hs.counts.end());
  hs.top_share = static_cast<double>(top) / static_cast<double>(total);
  double n = static_cast<double>(n_classes);
  double mean = static_cast<double>(total) / n;
  double m2 = 0.0, m3 = 0.0;
  for (std::size_t c : hs.counts) {
    double d = static_cast<double>(c) - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  hs.skewness = m2 == 0.0 ? 0.0 : m3 / std::pow(m2, 1.5);
  return hs;
}

// ---------------------------------------------------------------------------
// probability-product ensemble

// Product of per-source class distributions, renormalized. Equals the
// softmax of summed log-probabilities wherever all entries are positive.
inline Vec prob_product_ensemble(std::span<const Vec> dists) {
  if (dists.size() < 2) fail("prob_product_ensemble: need at least two sources");
  std::size_t n = dists[0].size();
  Vec prod(n, 1.0);
  for (const Vec& d : dists) {
    if (d.size() != n) fail("prob_product_ensemble: candidate mismatch");
    for (std::size_t i = 0; i < n; ++i) prod[i] *= d[i];
  }
  double z = 0.0;
  for (double p : prod) z += p;
  if (z <= 0.0) fail("prob_product_ensemble: all-zero product");
  for (double& p : prod) p /= z;
  return prod;
}

// ---------------------------------------------------------------------------
// DeVISE

struct DeviseModel {
  Mat w_emb;  // emb_dim x feat_dim
  double margin = 0.1;
};

// Per-image hinge: sum over wrong classes of
// max{0, margin + (w_wrong - w_true) . W g}.
inline double devise_instance_loss(const DeviseModel& m, const CandidateSet& c,
                                   std::span<const double> g, std::size_t target,
                                   Mat* grad) {
  if (!c.has_embeddings()) fail("devise: candidate set lacks embedding rows");
  if (target >= c.size()) fail("devise: target out of range");
  Vec proj = matvec(m.w_emb, g);
  const Vec& wt = c.embeddings[target];
  double loss = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (i == target) continue;
    double t = m.margin + dot(c.embeddings[i], proj) - dot(wt, proj);
    if (t <= 0.0) continue;
    loss += t;
    if (grad)
      for (std::size_t r = 0; r < m.w_emb.rows; ++r)
        axpy(c.embeddings[i][r] - wt[r], g, grad->row(r));
  }
  return loss;
}

struct DeviseConfig {
  double lr = 1e-3;
  std::size_t batch = 32;
  std::size_t epochs = 50;
  double adam_eps = 1e-8;
  double margin = 0.1;
  std::uint64_t seed = 0;
};

struct DeviseTrainResult {
  DeviseModel model;
  std::vector<double> loss_history;
};

inline DeviseTrainResult devise_train(const FeatureSet& train,
                                      const CandidateSet& candidates,
                                      const DeviseConfig& cfg) {
  if (train.size() == 0) fail("devise_train: empty feature set");
  if (!candidates.has_embeddings()) fail("devise_train: candidates need embeddings");
  std::size_t emb_dim = candidates.embeddings[0].size();

  DeviseTrainResult res;
  res.model.margin = cfg.margin;
  res.model.w_emb = Mat(emb_dim, train.dim);

  std::unordered_map<std::string, std::size_t> cand_index;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    cand_index.emplace(candidates.verbs[i], i);
  std::vector<std::size_t> targets(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto it = cand_index.find(train.verbs[train.labels[i]]);
    if (it == cand_index.end())
      fail("devise_train: label outside the candidate set");
    targets[i] = it->second;
  }

  Mat grad(emb_dim, train.dim);
  AdamState state(res.model.w_emb.a.size(), {cfg.lr, 0.9, 0.999, cfg.adam_eps});
  Prng order_rng(derive_seed(cfg.seed, 0));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      std::size_t stop = std::min(order.size(), start + cfg.batch);
      grad.zero();
      for (std::size_t i = start; i < stop; ++i)
        epoch_loss += devise_instance_loss(res.model, candidates,
                                           train.features[order[i]],
                                           targets[order[i]], &grad);
      double inv = 1.0 / static_cast<double>(stop - start);
      for (double& x : grad.a) x *= inv;
      adam_step(res.model.w_emb.a, grad.a, state);
    }
    res.loss_history.push_back(epoch_loss / static_cast<double>(train.size()));
  }
  return res;
}

// Inference ranks candidates by class-embedding / projected-feature dot product.
inline Vec devise_scores(const DeviseModel& m, const CandidateSet& c,
                         std::span<const double> g) {
  if (!c.has_embeddings()) fail("devise: candidate set lacks embedding rows");
  Vec proj = matvec(m.w_emb, g);
  Vec scores(c.size());
  for (std::size_t i = 0; i < c.size(); ++i)
    scores[i] = dot(c.embeddings[i], proj);
  return scores;
}

// ---------------------------------------------------------------------------
// direct attribute prediction

// One logistic classifier per binarized signature column; test-time score is
// the product over columns of the probability of the class's entry.
struct DapModel {
  std::size_t feat_dim = 0;
  Mat w;                    // n_attr x feat_dim
  Vec bias;                 // n_attr
  std::vector<int> is_degenerate;  // 1 if replaced by a constant rate
  Vec const_rate;           // empirical P(entry = +1) for degenerate columns
  Vec prior_pos;            // train-set P(entry = +1), for the prior variant
  bool use_prior = false;

  std::size_t n_attr() const { return w.rows; }
};

// P(entry_j = +1 | g) per binarized column.
inline Vec dap_attribute_probs(const DapModel& m, std::span<const double> g) {
  Vec p(m.n_attr());
  for (std::size_t j = 0; j < m.n_attr(); ++j) {
    if (m.is_degenerate[j])
      p[j] = m.const_rate[j];
    else
      p[j] = sigmoid(dot(m.w.row(j), g) + m.bias[j]);
  }
  return p;
}

// Raw product scores per candidate, evaluated in the log domain with
// probabilities clamped to [1e-12, 1 - 1e-12].
inline Vec dap_scores(const DapModel& m, const CandidateSet& c,
                      std::span<const double> g) {
  if (!c.has_signatures()) fail("dap: candidate set lacks signature rows");
  Vec p = dap_attribute_probs(m, g);
  auto clamp = [](double x) { return std::min(1.0 - 1e-12, std::max(1e-12, x)); };
  Vec scores(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.signatures[i].size() != p.size()) fail("dap: signature width mismatch");
    double lg = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      double pj = c.signatures[i][j] > 0 ? p[j] : 1.0 - p[j];
      lg += std::log(clamp(pj));
      if (m.use_prior) {
        double prior = c.signatures[i][j] > 0 ? m.prior_pos[j] : 1.0 - m.prior_pos[j];
        lg -= std::log(clamp(prior));
      }
    }
    scores[i] = std::exp(lg);
  }
  return scores;
}

// Scores renormalized into a distribution over the candidates.
inline Vec dap_predict(const DapModel& m, const CandidateSet& c,
                       std::span<const double> g) {
  Vec s = dap_scores(m, c, g);
  double z = 0.0;
  for (double x : s) z += x;
  if (z <= 0.0) fail("dap_predict: all scores vanished");
  for (double& x : s) x /= z;
  return s;
}

struct DapConfig {
  double lr = 1e-2;
  std::size_t epochs = 200;
  double adam_eps = 1e-8;
  double l2 = 0.0;
  std::uint64_t seed = 0;
};

struct DapTrainResult {
  DapModel model;
  std::vector<std::string> warnings;
};

inline DapTrainResult dap_train(const FeatureSet& train,
                                const CandidateSet& candidates,
                                const DapConfig& cfg) {
  if (train.size() == 0) fail("dap_train: empty feature set");
  if (!candidates.has_signatures()) fail("dap_train: candidates need signature rows");
  std::size_t n_attr = candidates.signatures[0].size();

  std::unordered_map<std::string, std::size_t> cand_index;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    cand_index.emplace(candidates.verbs[i], i);
  std::vector<std::size_t> cls(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto it = cand_index.find(train.verbs[train.labels[i]]);
    if (it == cand_index.end()) fail("dap_train: label outside the candidate set");
    cls[i] = it->second;
  }

  DapTrainResult res;
  DapModel& m = res.model;
  m.feat_dim = train.dim;
  m.w = Mat(n_attr, train.dim);
  m.bias.assign(n_attr, 0.0);
  m.is_degenerate.assign(n_attr, 0);
  m.const_rate.assign(n_attr, 0.0);
  m.prior_pos.assign(n_attr, 0.0);

  // Class-level degeneracy check plus item-level priors.
  for (std::size_t j = 0; j < n_attr; ++j) {
    bool any_pos = false, any_neg = false;
    for (const Vec& s : candidates.signatures)
      (s[j] > 0 ? any_pos : any_neg) = true;
    std::size_t pos_items = 0;
    for (std::size_t i = 0; i < train.size(); ++i)
      if (candidates.signatures[cls[i]][j] > 0) ++pos_items;
    double rate = static_cast<double>(pos_items) / static_cast<double>(train.size());
    m.prior_pos[j] = rate;
    if (!any_pos || !any_neg) {
      m.is_degenerate[j] = 1;
      m.const_rate[j] = rate;
      char buf[128];
      std::snprintf(buf, sizeof buf,
                    "attribute column %zu is constant across training classes; "
                    "using its empirical rate %.4f", j, rate);
      res.warnings.emplace_back(buf);
    }
  }

  // Independent logistic fits, full-batch Adam.
  for (std::size_t j = 0; j < n_attr; ++j) {
    if (m.is_degenerate[j]) continue;
    Vec params(train.dim + 1, 0.0);  // weights then bias
    AdamState state(params.size(), {cfg.lr, 0.9, 0.999, cfg.adam_eps});
    Vec grad(params.size());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = 0; i < train.size(); ++i) {
        double logit = dot({params.data(), train.dim}, train.features[i]) +
                       params[train.dim];
        int y = candidates.signatures[cls[i]][j] > 0 ? 1 : 0;
        double d = sigmoid(logit) - static_cast<double>(y);
        axpy(d, train.features[i], {grad.data(), train.dim});
        grad[train.dim] += d;
      }
      double inv = 1.0 / static_cast<double>(train.size());
      for (std::size_t t = 0; t < grad.size(); ++t)
        grad[t] = grad[t] * inv + cfg.l2 * params[t];
      adam_step(params, grad, state);
    }
    std::copy(params.begin(), params.begin() + train.dim, m.w.row(j).begin());
    m.bias[j] = params[train.dim];
  }
  return res;
}

// ---------------------------------------------------------------------------
// closed-form bilinear ridge model

// V = (G G^T + gamma I)^-1 G Y S^T (S S^T + lambda I)^-1 with features as
// the columns of G (F x N), one-hot labels Y (N x C), and class signatures
// as the columns of S (A x C).
inline Mat eszl_solve(const Mat& g, const Mat& y, const Mat& s, double gamma,
                      double lambda) {
  if (g.cols != y.rows) fail("eszl_solve: feature/label count mismatch");
  if (s.cols != y.cols) fail("eszl_solve: signature/label class mismatch");
  Mat gg = matmul_nt(g, g);  // F x F
  for (std::size_t i = 0; i < gg.rows; ++i) gg(i, i) += gamma;
  Mat ss = matmul_nt(s, s);  // A x A
  for (std::size_t i = 0; i < ss.rows; ++i) ss(i, i) += lambda;
  Mat gys = matmul(matmul(g, y), transpose(s));  // F x A
  Mat t1 = chol_solve(gg, gys);                  // (GG^T + gI)^-1 G Y S^T
  return transpose(chol_solve(ss, transpose(t1)));
}

// Gradient of the regularized least-squares objective at V; zero (to
// rounding) exactly when V is the closed-form solution.
inline double eszl_grad_norm(const Mat& g, const Mat& y, const Mat& s,
                             double gamma, double lambda, const Mat& v) {
  Mat gg = matmul_nt(g, g);
  for (std::size_t i = 0; i < gg.rows; ++i) gg(i, i) += gamma;
  Mat ss = matmul_nt(s, s);
  for (std::size_t i = 0; i < ss.rows; ++i) ss(i, i) += lambda;
  Mat grad = matmul(matmul(gg, v), ss);
  Mat gys = matmul(matmul(g, y), transpose(s));
  double norm2 = 0.0;
  for (std::size_t i = 0; i < grad.a.size(); ++i) {
    double d = 2.0 * (grad.a[i] - gys.a[i]);
    norm2 += d * d;
  }
  return std::sqrt(norm2);
}

// Assembles G, Y, S from a labelled feature set and candidate signatures.
inline Mat eszl_fit(const FeatureSet& train, const CandidateSet& candidates,
                    double gamma, double lambda) {
  if (train.size() == 0) fail("eszl_fit: empty feature set");
  if (!candidates.has_signatures()) fail("eszl_fit: candidates need signature rows");
  std::unordered_map<std::string, std::size_t> cand_index;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    cand_index.emplace(candidates.verbs[i], i);

  std::size_t n = train.size(), f = train.dim;
  std::size_t c = candidates.size();
  std::size_t a = candidates.signatures[0].size();
  Mat g(f, n), y(n, c), s(a, c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < f; ++r) g(r, i) = train.features[i][r];
    auto it = cand_index.find(train.verbs[train.labels[i]]);
    if (it == cand_index.end()) fail("eszl_fit: label outside the candidate set");
    y(i, it->second) = 1.0;
  }
  for (std::size_t j = 0; j < c; ++j)
    for (std::size_t r = 0; r < a; ++r) s(r, j) = candidates.signatures[j][r];
  return eszl_solve(g, y, s, gamma, lambda);
}

inline Vec eszl_scores(const Mat& v, const CandidateSet& c,
                       std::span<const double> g) {
  if (!c.has_signatures()) fail("eszl: candidate set lacks signature rows");
  Vec proj = matvec_t(v, g);  // V^T g, length A
  Vec scores(c.size());
  for (std::size_t i = 0; i < c.size(); ++i)
    scores[i] = dot(c.signatures[i], proj);
  return scores;
}

struct EszlSelection {
  double gamma = 1.0;
  double lambda = 1.0;
  double val_top1 = 0.0;
  Mat v;
};

// Grid-search over {1e-3 .. 1e3} by validation top-1; first grid point wins
// ties (ascending gamma, then lambda).
inline EszlSelection eszl_select(const FeatureSet& train,
                                 const CandidateSet& train_cands,
                                 const FeatureSet& val,
                                 const CandidateSet& val_cands) {
  static const double grid[] = {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
  EszlSelection best;
  bool first = true;
  for (double gamma : grid)
    for (double lambda : grid) {
      Mat v = eszl_fit(train, train_cands, gamma, lambda);
      ZsEval ev = eval_topk(
          val, val_cands,
          [&](std::span<const double> g) { return eszl_scores(v, val_cands, g); },
          1);
      if (first || ev.top1 > best.val_top1) {
        best = {gamma, lambda, ev.top1, std::move(v)};
        first = false;
      }
    }
  return best;
}

}  // namespace vatt
