#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vatt/adam.hpp"
#include "vatt/encoders.hpp"
#include "vatt/gradcheck.hpp"
#include "vatt/metrics.hpp"
#include "vatt/ops.hpp"
#include "vatt/prng.hpp"
#include "vatt/schema.hpp"
#include "vatt/tensor.hpp"

namespace vatt {

enum class EncoderKind { Emb, Bow, Nbow, Bgru, BowEmb, NbowEmb, BgruEmb };

inline bool kind_uses_definitions(EncoderKind k) { return k != EncoderKind::Emb; }
inline bool kind_uses_bow(EncoderKind k) {
  return k == EncoderKind::Bow || k == EncoderKind::BowEmb;
}
inline bool kind_uses_nbow(EncoderKind k) {
  return k == EncoderKind::Nbow || k == EncoderKind::NbowEmb;
}
inline bool kind_uses_bgru(EncoderKind k) {
  return k == EncoderKind::Bgru || k == EncoderKind::BgruEmb;
}
inline bool kind_uses_verb_embedding(EncoderKind k) {
  return k == EncoderKind::Emb || k == EncoderKind::BowEmb ||
         k == EncoderKind::NbowEmb || k == EncoderKind::BgruEmb;
}

inline std::string encoder_kind_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::Emb: return "emb";
    case EncoderKind::Bow: return "bow";
    case EncoderKind::Nbow: return "nbow";
    case EncoderKind::Bgru: return "bgru";
    case EncoderKind::BowEmb: return "bow+emb";
    case EncoderKind::NbowEmb: return "nbow+emb";
    case EncoderKind::BgruEmb: return "bgru+emb";
  }
  fail("unknown encoder kind");
}

inline EncoderKind parse_encoder_kind(const std::string& s) {
  if (s == "emb") return EncoderKind::Emb;
  if (s == "bow") return EncoderKind::Bow;
  if (s == "nbow") return EncoderKind::Nbow;
  if (s == "bgru") return EncoderKind::Bgru;
  if (s == "bow+emb") return EncoderKind::BowEmb;
  if (s == "nbow+emb") return EncoderKind::NbowEmb;
  if (s == "bgru+emb") return EncoderKind::BgruEmb;
  fail("unknown encoder kind '" + s + "'");
}

// ---------------------------------------------------------------------------

// Per-attribute linear heads over a shared encoding (no bias terms). Binary
// attributes hold a 1-row matrix read through a sigmoid; categorical ones a
// card x width matrix read through a softmax.
struct AttrModel {
  EncoderKind kind = EncoderKind::Emb;
  AttributeSchema schema;
  std::size_t in_dim = 0;
  std::vector<Mat> heads;

  BowVocab bow;     // kind_uses_bow only
  BgruParams bgru;  // kind_uses_bgru only

  void init_heads() {
    heads.clear();
    for (const auto& a : schema.attrs)
      heads.emplace_back(a.binary ? 1 : a.card(), in_dim);
  }
};

struct AttrGrads {
  std::vector<Mat> heads;
  BgruGrads bgru;

  void init(const AttrModel& m) {
    heads.clear();
    for (const Mat& h : m.heads) heads.emplace_back(h.rows, h.cols);
    if (kind_uses_bgru(m.kind)) bgru.init(m.bgru);
  }

  void zero() {
    for (Mat& h : heads) h.zero();
    if (!bgru.embed.a.empty() || bgru.fwd.wr.rows) bgru.zero();
  }
};

// Trainable blocks in a fixed order, shared by Adam and grad_check.
inline std::vector<ParamRef> attr_param_refs(AttrModel& m, AttrGrads& g,
                                             bool train_token_embeddings) {
  std::vector<ParamRef> refs;
  for (std::size_t k = 0; k < m.heads.size(); ++k)
    refs.push_back({"head/" + m.schema.attrs[k].name, m.heads[k].a.data(),
                    g.heads[k].a.data(), m.heads[k].a.size()});
  if (kind_uses_bgru(m.kind)) {
    auto cell = [&](const char* tag, GruCell& c, GruGrads& cg) {
      refs.push_back({std::string(tag) + "/wr", c.wr.a.data(), cg.wr.a.data(), c.wr.a.size()});
      refs.push_back({std::string(tag) + "/wz", c.wz.a.data(), cg.wz.a.data(), c.wz.a.size()});
      refs.push_back({std::string(tag) + "/wh", c.wh.a.data(), cg.wh.a.data(), c.wh.a.size()});
      refs.push_back({std::string(tag) + "/ur", c.ur.a.data(), cg.ur.a.data(), c.ur.a.size()});
      refs.push_back({std::string(tag) + "/uz", c.uz.a.data(), cg.uz.a.data(), c.uz.a.size()});
      refs.push_back({std::string(tag) + "/uh", c.uh.a.data(), cg.uh.a.data(), c.uh.a.size()});
    };
    cell("gru_fwd", m.bgru.fwd, g.bgru.fwd);
    cell("gru_bwd", m.bgru.bwd, g.bgru.bwd);
    if (train_token_embeddings)
      refs.push_back({"gru_embed", m.bgru.embed.a.data(), g.bgru.embed.a.data(),
                      m.bgru.embed.a.size()});
  }
  return refs;
}

// ---------------------------------------------------------------------------
// forward paths

inline std::size_t encoder_out_dim(const AttrModel& m, std::size_t emb_dim) {
  std::size_t d = 0;
  if (kind_uses_bow(m.kind)) d += m.bow.words.size();
  if (kind_uses_nbow(m.kind)) d += emb_dim;
  if (kind_uses_bgru(m.kind)) d += m.bgru.out_dim();
  if (kind_uses_verb_embedding(m.kind)) d += emb_dim;
  return d;
}

// Definition block first, verb-embedding block last; width must match heads.
inline Vec encode_instance(const AttrModel& m, const std::string& verb,
                           std::span<const std::string> def_tokens,
                           const EmbeddingTable& table, BgruTrace* trace) {
  std::vector<Vec> parts;
  if (kind_uses_bow(m.kind)) parts.push_back(encode_bow(def_tokens, m.bow));
  if (kind_uses_nbow(m.kind)) parts.push_back(encode_nbow(def_tokens, table));
  if (kind_uses_bgru(m.kind)) parts.push_back(encode_bgru(m.bgru, def_tokens, trace));
  if (kind_uses_verb_embedding(m.kind)) parts.push_back(encode_emb(verb, table));
  Vec enc = fuse(parts);
  if (enc.size() != m.in_dim) fail("encode_instance: width mismatch with heads");
  return enc;
}

// Per-attribute distributions: length-1 vector {p} for binary heads,
// length-card softmax for categorical ones.
inline std::vector<Vec> predict_attributes(const AttrModel& m,
                                           std::span<const double> encoding) {
  if (encoding.size() != m.in_dim) fail("predict_attributes: width mismatch");
  std::vector<Vec> out;
  out.reserve(m.heads.size());
  for (std::size_t k = 0; k < m.heads.size(); ++k) {
    Vec logits = matvec(m.heads[k], encoding);
    if (m.schema.attrs[k].binary)
      out.push_back({sigmoid(logits[0])});
    else
      out.push_back(softmax(logits));
  }
  return out;
}

// Threshold 0.5 for binary; argmax with ties toward the lowest index.
inline LabelVector hard_labels(const std::vector<Vec>& dists,
                               const AttributeSchema& schema) {
  if (dists.size() != schema.attrs.size()) fail("hard_labels: attribute count mismatch");
  LabelVector out(dists.size());
  for (std::size_t k = 0; k < dists.size(); ++k) {
    if (schema.attrs[k].binary) {
      out[k] = dists[k][0] > 0.5 ? 1 : 0;
    } else {
      std::size_t best = 0;
      for (std::size_t i = 1; i < dists[k].size(); ++i)
        if (dists[k][i] > dists[k][best]) best = i;
      out[k] = static_cast<int>(best);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// training

struct AttrInstance {
  std::string verb;
  std::size_t def_index = 0;  // unused for the plain embedding encoder
};

// Every verb contributes max-count instances: all originals plus seeded
// uniform-with-replacement padding from its own definitions.
inline std::vector<AttrInstance> oversample_definitions(
    const DefinitionCorpus& corpus, std::span<const std::string> train_verbs,
    std::uint64_t seed) {
  std::size_t max_defs = 0;
  for (const auto& v : train_verbs) {
    std::size_t n = corpus.definitions(v).size();
    if (n == 0) fail("oversample_definitions: no definitions for verb '" + v + "'");
    max_defs = std::max(max_defs, n);
  }
  Prng rng(seed);
  std::vector<AttrInstance> out;
  for (const auto& v : train_verbs) {
    std::size_t n = corpus.definitions(v).size();
    for (std::size_t i = 0; i < n; ++i) out.push_back({v, i});
    for (std::size_t i = n; i < max_defs; ++i) out.push_back({v, rng.below(n)});
  }
  return out;
}

// Sum over attributes of cross-entropy at one instance. Accumulates head
// gradients (and BGRU gradients when applicable) into `grads` when non-null.
// `dropout_mask`, when present, scales the BGRU block of the encoding
// (inverted dropout; entries are 0 or 1/keep).
inline double attr_instance_loss(const AttrModel& m, const std::string& verb,
                                 std::span<const std::string> def_tokens,
                                 const LabelVector& gold,
                                 const EmbeddingTable& table, AttrGrads* grads,
                                 const Vec* dropout_mask = nullptr,
                                 bool train_token_embeddings = false) {
  validate_labels(m.schema, gold);
  BgruTrace trace;
  Vec enc = encode_instance(m, verb, def_tokens, table,
                            kind_uses_bgru(m.kind) && grads ? &trace : nullptr);

  std::size_t bgru_off = 0, bgru_w = 0;
  if (kind_uses_bgru(m.kind)) {
    if (kind_uses_bow(m.kind)) bgru_off += m.bow.words.size();
    if (kind_uses_nbow(m.kind)) bgru_off += table.dim;
    bgru_w = m.bgru.out_dim();
  }
  if (dropout_mask) {
    if (dropout_mask->size() != bgru_w) fail("dropout mask width mismatch");
    for (std::size_t i = 0; i < bgru_w; ++i) enc[bgru_off + i] *= (*dropout_mask)[i];
  }

  double loss = 0.0;
  Vec d_enc(m.in_dim, 0.0);
  for (std::size_t k = 0; k < m.heads.size(); ++k) {
    Vec logits = matvec(m.heads[k], enc);
    if (m.schema.attrs[k].binary) {
      loss += cross_entropy(logits[0], gold[k]);
      if (grads) {
        double d = sigmoid(logits[0]) - static_cast<double>(gold[k]);
        axpy(d, enc, grads->heads[k].row(0));
        axpy(d, m.heads[k].row(0), d_enc);
      }
    } else {
      loss += cross_entropy(logits, static_cast<std::size_t>(gold[k]));
      if (grads) {
        Vec p = softmax(logits);
        p[static_cast<std::size_t>(gold[k])] -= 1.0;
        add_outer(grads->heads[k], 1.0, p, enc);
        axpy(1.0, matvec_t(m.heads[k], p), d_enc);
      }
    }
  }

  if (grads && kind_uses_bgru(m.kind)) {
    Vec d_bgru(d_enc.begin() + bgru_off, d_enc.begin() + bgru_off + bgru_w);
    if (dropout_mask)
      for (std::size_t i = 0; i < bgru_w; ++i) d_bgru[i] *= (*dropout_mask)[i];
    bgru_backward(m.bgru, trace, d_bgru, grads->bgru, train_token_embeddings);
  }
  return loss;
}

struct AttrTrainConfig {
  double lr = 1e-4;
  std::size_t batch = 32;
  std::size_t epochs = 30;
  double adam_eps = 1.0;
  double l2 = 0.0;
  double dropout = 0.5;  // BGRU block only, training only
  std::uint64_t seed = 0;
  std::size_t max_def_len = 32;
  std::size_t bow_vocab = 5000;
  std::size_t gru_vocab = 30000;
  std::size_t hidden = 300;
  bool train_token_embeddings = false;  // frozen by default
};

struct AttrTrainResult {
  AttrModel model;
  std::vector<double> loss_history;  // mean instance loss per epoch
};

namespace detail {

struct BlockAdam {
  std::vector<AdamState> states;

  void init(std::span<const ParamRef> refs, const AdamConfig& cfg) {
    states.clear();
    for (const auto& r : refs) states.emplace_back(r.n, cfg);
  }

  void step(std::span<const ParamRef> refs) {
    for (std::size_t i = 0; i < refs.size(); ++i)
      adam_step({refs[i].w, refs[i].n},
                {refs[i].g, refs[i].n}, states[i]);
  }
};

}  // namespace detail

// Builds the encoder for `kind` from training data and minimizes the summed
// cross-entropy with Adam mini-batches. A pretrained BGRU (with its
// vocabulary and token embeddings) replaces the fresh one when supplied.
inline AttrTrainResult train_attr_model(
    const AttributeSchema& schema, std::span<const std::string> train_verbs,
    const std::unordered_map<std::string, LabelVector>& gold,
    const DefinitionCorpus& corpus, const EmbeddingTable& table,
    EncoderKind kind, const AttrTrainConfig& cfg,
    const BgruParams* pretrained = nullptr) {
  if (train_verbs.empty()) fail("train_attr_model: empty training set");
  for (const auto& v : train_verbs)
    if (!gold.count(v)) fail("train_attr_model: no labels for verb '" + v + "'");

  AttrTrainResult res;
  AttrModel& m = res.model;
  m.kind = kind;
  m.schema = schema;

  Prng rng(derive_seed(cfg.seed, 0));
  if (kind_uses_bow(kind)) m.bow = build_bow_vocab(corpus, train_verbs, cfg.bow_vocab);
  if (kind_uses_bgru(kind)) {
    if (pretrained) {
      m.bgru = *pretrained;
    } else {
      m.bgru.vocab = build_gru_vocab(corpus, train_verbs, cfg.gru_vocab);
      m.bgru.max_len = cfg.max_def_len;
      m.bgru.init(table.dim, cfg.hidden, rng);
      m.bgru.seed_embeddings(table);
    }
  }
  m.in_dim = encoder_out_dim(m, table.dim);
  m.init_heads();

  std::vector<AttrInstance> instances;
  if (kind_uses_definitions(kind)) {
    instances = oversample_definitions(corpus, train_verbs, derive_seed(cfg.seed, 1));
  } else {
    for (const auto& v : train_verbs) instances.push_back({v, 0});
  }

  AttrGrads grads;
  grads.init(m);
  auto refs = attr_param_refs(m, grads, cfg.train_token_embeddings);
  detail::BlockAdam adam;
  adam.init(refs, {cfg.lr, 0.9, 0.999, cfg.adam_eps});

  const std::size_t bgru_w = kind_uses_bgru(kind) ? m.bgru.out_dim() : 0;
  Prng order_rng(derive_seed(cfg.seed, 2));
  Prng drop_rng(derive_seed(cfg.seed, 3));
  std::vector<std::size_t> order(instances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      std::size_t stop = std::min(order.size(), start + cfg.batch);
      grads.zero();
      for (std::size_t i = start; i < stop; ++i) {
        const AttrInstance& inst = instances[order[i]];
        std::span<const std::string> tokens;
        if (kind_uses_definitions(kind))
          tokens = corpus.definitions(inst.verb)[inst.def_index];
        Vec mask;
        const Vec* mask_ptr = nullptr;
        if (bgru_w && cfg.dropout > 0.0) {
          double keep = 1.0 - cfg.dropout;
          mask.resize(bgru_w);
          for (double& x : mask) x = drop_rng.uniform() < keep ? 1.0 / keep : 0.0;
          mask_ptr = &mask;
        }
        epoch_loss += attr_instance_loss(m, inst.verb, tokens, gold.at(inst.verb),
                                         table, &grads, mask_ptr,
                                         cfg.train_token_embeddings);
      }
      double inv = 1.0 / static_cast<double>(stop - start);
      for (const auto& r : refs) {
        double* g = const_cast<double*>(r.g);
        for (std::size_t j = 0; j < r.n; ++j) g[j] = g[j] * inv + cfg.l2 * r.w[j];
      }
      adam.step(refs);
    }
    res.loss_history.push_back(epoch_loss / static_cast<double>(instances.size()));
  }
  return res;
}

// First-definition-only evaluation path (dropout off).
inline LabelledVerbs predict_labels(const AttrModel& m,
                                    std::span<const std::string> verbs,
                                    const DefinitionCorpus& corpus,
                                    const EmbeddingTable& table) {
  LabelledVerbs out;
  for (const auto& v : verbs) {
    std::span<const std::string> tokens;
    if (kind_uses_definitions(m.kind)) tokens = corpus.first_definition(v);
    Vec enc = encode_instance(m, v, tokens, table, nullptr);
    out.emplace_back(v, hard_labels(predict_attributes(m, enc), m.schema));
  }
  return out;
}

// ---------------------------------------------------------------------------
// ranking-loss pretraining of the definition encoder

// Hinge max{0, margin - cos(w, W f) + cos(w, w_neg)} for one (definition,
// word) pair; f is the definition encoding, W the projection head. Gradients
// accumulate only while the margin is active.
inline double pretrain_instance_loss(const BgruParams& enc, const Mat& w_emb,
                                     std::span<const std::string> tokens,
                                     std::span<const double> w,
                                     std::span<const double> wneg, double margin,
                                     BgruGrads* enc_grads, Mat* w_emb_grad) {
  BgruTrace trace;
  Vec f = encode_bgru(enc, tokens, enc_grads ? &trace : nullptr);
  Vec what = matvec(w_emb, f);
  double nw = nrm2(w), nh = nrm2(what);
  if (nw == 0.0) fail("pretrain: target word has a zero-norm embedding");
  if (nh == 0.0) return 0.0;  // dead encoder output; no gradient signal
  double cos_pos = dot(w, what) / (nw * nh);
  double cos_neg = cosine(w, wneg);
  double loss = margin - cos_pos + cos_neg;
  if (loss <= 0.0) return 0.0;
  if (enc_grads && w_emb_grad) {
    // d(-cos_pos)/d(what) = cos_pos*what/|what|^2 - w/(|w||what|)
    Vec dwhat(what.size());
    for (std::size_t j = 0; j < what.size(); ++j)
      dwhat[j] = cos_pos * what[j] / (nh * nh) - w[j] / (nw * nh);
    add_outer(*w_emb_grad, 1.0, dwhat, f);
    Vec df = matvec_t(w_emb, dwhat);
    bgru_backward(enc, trace, df, *enc_grads, true);
  }
  return loss;
}

struct PretrainConfig {
  double lr = 1e-4;
  std::size_t batch = 64;
  std::size_t epochs = 5;
  double adam_eps = 1e-8;
  double margin = 0.1;
  std::uint64_t seed = 0;
  std::size_t max_def_len = 32;
  std::size_t gru_vocab = 30000;
  std::size_t hidden = 300;
};

struct PretrainResult {
  BgruParams encoder;
  Mat w_emb;  // projection head, discarded before attribute training
  std::vector<double> loss_history;
};

// Hinge max{0, margin - cos(w, w_hat) + cos(w, w_neg)} with w_hat the
// projected definition encoding and w_neg one seeded random other dictionary
// word per instance. Token embeddings train here and freeze afterwards.
inline PretrainResult pretrain_definition_encoder(const DefinitionCorpus& dict,
                                                  const EmbeddingTable& table,
                                                  const PretrainConfig& cfg) {
  std::vector<std::pair<std::string, std::size_t>> pairs;  // (word, def idx)
  std::vector<std::string> known_words;
  for (const auto& w : dict.verbs) {
    if (!table.contains(w)) continue;
    known_words.push_back(w);
    for (std::size_t i = 0; i < dict.definitions(w).size(); ++i) pairs.emplace_back(w, i);
  }
  if (pairs.empty()) fail("pretrain_definition_encoder: empty dictionary");
  if (known_words.size() < 2)
    fail("pretrain_definition_encoder: need at least two dictionary words");

  PretrainResult res;
  Prng rng(derive_seed(cfg.seed, 0));
  res.encoder.vocab = build_gru_vocab(dict, dict.verbs, cfg.gru_vocab);
  res.encoder.max_len = cfg.max_def_len;
  res.encoder.init(table.dim, cfg.hidden, rng);
  res.encoder.seed_embeddings(table);
  res.w_emb = Mat(table.dim, res.encoder.out_dim());
  {
    double scale = 1.0 / std::sqrt(static_cast<double>(res.w_emb.cols));
    for (double& x : res.w_emb.a) x = rng.uniform(-scale, scale);
  }

  // One negative word per instance, fixed for the whole run.
  Prng neg_rng(derive_seed(cfg.seed, 1));
  std::vector<std::size_t> neg(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::size_t pick;
    do {
      pick = neg_rng.below(known_words.size());
    } while (known_words[pick] == pairs[i].first);
    neg[i] = pick;
  }

  BgruGrads enc_grads;
  enc_grads.init(res.encoder);
  Mat w_emb_grad(res.w_emb.rows, res.w_emb.cols);

  std::vector<ParamRef> refs;
  auto cell = [&](const char* tag, GruCell& c, GruGrads& cg) {
    refs.push_back({std::string(tag) + "/wr", c.wr.a.data(), cg.wr.a.data(), c.wr.a.size()});
    refs.push_back({std::string(tag) + "/wz", c.wz.a.data(), cg.wz.a.data(), c.wz.a.size()});
    refs.push_back({std::string(tag) + "/wh", c.wh.a.data(), cg.wh.a.data(), c.wh.a.size()});
    refs.push_back({std::string(tag) + "/ur", c.ur.a.data(), cg.ur.a.data(), c.ur.a.size()});
    refs.push_back({std::string(tag) + "/uz", c.uz.a.data(), cg.uz.a.data(), c.uz.a.size()});
    refs.push_back({std::string(tag) + "/uh", c.uh.a.data(), cg.uh.a.data(), c.uh.a.size()});
  };
  cell("gru_fwd", res.encoder.fwd, enc_grads.fwd);
  cell("gru_bwd", res.encoder.bwd, enc_grads.bwd);
  refs.push_back({"gru_embed", res.encoder.embed.a.data(), enc_grads.embed.a.data(),
                  res.encoder.embed.a.size()});
  refs.push_back({"w_emb", res.w_emb.a.data(), w_emb_grad.a.data(), res.w_emb.a.size()});

  detail::BlockAdam adam;
  adam.init(refs, {cfg.lr, 0.9, 0.999, cfg.adam_eps});

  Prng order_rng(derive_seed(cfg.seed, 2));
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      std::size_t stop = std::min(order.size(), start + cfg.batch);
      enc_grads.zero();
      w_emb_grad.zero();
      for (std::size_t i = start; i < stop; ++i) {
        const auto& [word, def_idx] = pairs[order[i]];
        Vec w = table.lookup(word);
        Vec wneg = table.lookup(known_words[neg[order[i]]]);
        epoch_loss += pretrain_instance_loss(
            res.encoder, res.w_emb, dict.definitions(word)[def_idx], w, wneg,
            cfg.margin, &enc_grads, &w_emb_grad);
      }
      double inv = 1.0 / static_cast<double>(stop - start);
      for (const auto& r : refs) {
        double* g = const_cast<double*>(r.g);
        for (std::size_t j = 0; j < r.n; ++j) g[j] *= inv;
      }
      adam.step(refs);
    }
    res.loss_history.push_back(epoch_loss / static_cast<double>(pairs.size()));
  }
  return res;
}

}  // namespace vatt
