#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "vatt/dataio.hpp"
#include "vatt/features.hpp"
#include "vatt/metrics.hpp"
#include "vatt/prng.hpp"
#include "vatt/schema.hpp"
#include "vatt/tensor.hpp"
#include "vatt/text.hpp"

namespace vatt {

struct SynthConfig {
  std::size_t classes = 8;
  std::size_t per_class = 4;  // instances per class, each feature set
  std::size_t feat_dim = 16;
  std::size_t emb_dim = 8;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  bool distinct_signatures = true;
  std::size_t val_classes = 0;
  std::size_t test_classes = 2;

  void validate() const {
    if (classes < 2) fail("synth: need at least 2 classes");
    if (per_class < 1) fail("synth: need at least 1 instance per class");
    if (feat_dim < 1 || emb_dim < 1) fail("synth: widths must be >= 1");
    if (sigma < 0.0) fail("synth: sigma must be >= 0");
    if (val_classes + test_classes >= classes)
      fail("synth: val + test classes must leave at least one train class");
  }
};

struct SynthData {
  std::vector<std::string> verbs;
  LabelledVerbs gold;  // schema-order labels, one row per verb
  DefinitionCorpus corpus;
  EmbeddingTable table;
  FeatureSet train_features, val_features, test_features;
  Split split;

  std::unordered_map<std::string, LabelVector> gold_map() const {
    std::unordered_map<std::string, LabelVector> m;
    for (const auto& [v, l] : gold) m.emplace(v, l);
    return m;
  }
};

namespace detail {

inline std::string synth_verb_name(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "verb%03zu", i);
  return buf;
}

// Signature-space block for one attribute value: zero outside attribute k.
inline Vec value_block(const AttributeSchema& schema, std::size_t k, int value) {
  Vec b(schema.binarized_width(), 0.0);
  std::size_t off = 0;
  for (std::size_t j = 0; j < k; ++j) off += schema.attrs[j].width();
  const auto& a = schema.attrs[k];
  if (a.binary) {
    b[off] = value == 1 ? 1.0 : -1.0;
  } else {
    for (std::size_t i = 0; i < a.values.size(); ++i)
      b[off + i] = static_cast<int>(i) == value ? 1.0 : -1.0;
  }
  return b;
}

}  // namespace detail

// Deterministic desk-scale dataset: class signatures drawn per attribute,
// features = M s_c + sigma noise (f32-quantized so feature files round-trip
// losslessly), verb embeddings = P s_c + sigma noise, and definitions made of
// per-attribute-value tokens so the text carries the attribute signal.
inline SynthData synth_generate(const SynthConfig& cfg,
                                const AttributeSchema& schema) {
  cfg.validate();
  const std::size_t B = schema.binarized_width();

  if (cfg.distinct_signatures) {
    double cap = 1.0;
    for (const auto& a : schema.attrs) {
      cap *= static_cast<double>(a.card());
      if (cap > 1e18) break;
    }
    if (static_cast<double>(cfg.classes) > cap)
      fail("synth: " + std::to_string(cfg.classes) +
           " distinct signatures requested but the signature space has only " +
           std::to_string(static_cast<long long>(cap)) + " points");
  }

  SynthData out;

  // class labels / signatures
  Prng sig_rng(derive_seed(cfg.seed, 0));
  std::unordered_set<std::string> seen;
  std::vector<Vec> signatures;
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    LabelVector labels(schema.attrs.size());
    while (true) {
      for (std::size_t k = 0; k < schema.attrs.size(); ++k)
        labels[k] = static_cast<int>(sig_rng.below(schema.attrs[k].card()));
      if (!cfg.distinct_signatures) break;
      std::string key;
      for (int v : labels) key += static_cast<char>('0' + v), key += ',';
      if (seen.insert(key).second) break;
    }
    out.verbs.push_back(detail::synth_verb_name(c));
    out.gold.emplace_back(out.verbs.back(), labels);
    signatures.push_back(binarize(schema, labels));
  }

  // mixing matrices
  auto gaussian_mat = [&](std::size_t rows, std::size_t cols, std::uint64_t stream) {
    Prng rng(derive_seed(cfg.seed, stream));
    Mat m(rows, cols);
    double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (double& x : m.a) x = scale * rng.gaussian();
    return m;
  };
  Mat mix_feat = gaussian_mat(cfg.feat_dim, B, 1);
  Mat mix_emb = gaussian_mat(cfg.emb_dim, B, 2);

  // split by class index: leading classes train, then val, then test
  std::size_t n_train = cfg.classes - cfg.val_classes - cfg.test_classes;
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    if (c < n_train)
      out.split.train.push_back(out.verbs[c]);
    else if (c < n_train + cfg.val_classes)
      out.split.val.push_back(out.verbs[c]);
    else
      out.split.test.push_back(out.verbs[c]);
  }

  // features (quantized to f32)
  auto fill_features = [&](FeatureSet& fs, std::size_t c_begin, std::size_t c_end,
                           const char* tag, std::uint64_t stream) {
    Prng rng(derive_seed(cfg.seed, stream));
    fs.dim = cfg.feat_dim;
    fs.verbs = out.verbs;
    fs.split_tag = tag;
    for (std::size_t c = c_begin; c < c_end; ++c) {
      Vec proto = matvec(mix_feat, signatures[c]);
      for (std::size_t i = 0; i < cfg.per_class; ++i) {
        Vec f(cfg.feat_dim);
        for (std::size_t j = 0; j < cfg.feat_dim; ++j)
          f[j] = static_cast<double>(
              static_cast<float>(proto[j] + cfg.sigma * rng.gaussian()));
        fs.labels.push_back(static_cast<std::uint32_t>(c));
        fs.features.push_back(std::move(f));
      }
    }
    fs.validate();
  };
  fill_features(out.train_features, 0, n_train, "train", 3);
  fill_features(out.val_features, n_train, n_train + cfg.val_classes, "val", 4);
  fill_features(out.test_features, n_train + cfg.val_classes, cfg.classes, "test", 5);

  // verb embeddings
  {
    Prng rng(derive_seed(cfg.seed, 6));
    out.table.reserve_dim(cfg.emb_dim);
    for (std::size_t c = 0; c < cfg.classes; ++c) {
      Vec e = matvec(mix_emb, signatures[c]);
      for (double& x : e) x += cfg.sigma * rng.gaussian();
      out.table.add(out.verbs[c], e);
    }
  }

  // definition-token embeddings: three variants per attribute value, plus
  // ten filler tokens
  {
    Prng rng(derive_seed(cfg.seed, 7));
    for (std::size_t k = 0; k < schema.attrs.size(); ++k)
      for (std::size_t v = 0; v < schema.attrs[k].card(); ++v) {
        Vec base = matvec(mix_emb, detail::value_block(schema, k, static_cast<int>(v)));
        for (std::size_t j = 0; j < 3; ++j) {
          Vec e = base;
          for (double& x : e) x += 0.05 * rng.gaussian();
          char name[32];
          std::snprintf(name, sizeof name, "a%zuv%zux%zu", k, v, j);
          out.table.add(name, e);
        }
      }
    for (std::size_t j = 0; j < 10; ++j) {
      Vec e(cfg.emb_dim);
      for (double& x : e) x = 0.1 * rng.gaussian();
      char name[16];
      std::snprintf(name, sizeof name, "f%zu", j);
      out.table.add(name, e);
    }
  }

  // definitions: one token per attribute naming the gold value, then fillers
  {
    Prng rng(derive_seed(cfg.seed, 8));
    for (std::size_t c = 0; c < cfg.classes; ++c) {
      std::size_t n_defs = 1 + rng.below(3);
      for (std::size_t d = 0; d < n_defs; ++d) {
        std::vector<std::string> tokens;
        for (std::size_t k = 0; k < schema.attrs.size(); ++k) {
          char name[32];
          std::snprintf(name, sizeof name, "a%zuv%dx%zu", k,
                        out.gold[c].second[k], rng.below(3));
          tokens.emplace_back(name);
        }
        std::size_t n_fill = rng.below(3);
        for (std::size_t j = 0; j < n_fill; ++j) {
          char name[16];
          std::snprintf(name, sizeof name, "f%zu", rng.below(10));
          tokens.emplace_back(name);
        }
        out.corpus.add(out.verbs[c], std::move(tokens));
      }
    }
  }

  return out;
}

}  // namespace vatt
