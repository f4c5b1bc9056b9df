#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vatt/attr_model.hpp"
#include "vatt/dataio.hpp"
#include "vatt/gradcheck.hpp"
#include "vatt/metrics.hpp"
#include "vatt/model_io.hpp"
#include "vatt/report.hpp"
#include "vatt/synth.hpp"
#include "vatt/zeroshot.hpp"

namespace vatt {

struct RunConfig {
  // inputs and outputs
  std::string schema_path, embeddings_path, definitions_path, attributes_path;
  std::string features_path, val_features_path, split_path;
  std::string model_in, model_out, report_out, out_dir;
  std::string pretrained_path, attr_model_path;

  // selections
  std::string encoder = "emb";
  std::string head = "auto";

  // hyperparameters; negative / zero sentinels mean "per-command default"
  double lr = -1.0;
  std::size_t batch = 0;
  std::size_t epochs = 0;
  double eps = -1.0;
  double l2 = -1.0;
  double dropout = 0.5;
  double gamma = 1.0;
  double lambda_ = 1.0;
  std::size_t topk = 5;
  std::uint64_t seed = 0;
  std::size_t hidden = 300;
  std::size_t bow_vocab = 5000;
  std::size_t gru_vocab = 30000;
  std::size_t max_def_len = 32;

  // synthetic data
  std::size_t classes = 8, per_class = 4, feat_dim = 16, emb_dim = 8;
  std::size_t val_classes = 0, test_classes = 2;
  double sigma = 0.0;
  bool no_distinct = false;

  // flags
  bool gold_attrs = false;
  bool pred_attrs = false;
  bool ensemble_product = false;
  bool effects_conditional = false;
  bool dap_prior = false;
  std::string corrupt;  // gradcheck fault-injection hook (testing only)
};

namespace detail {

inline double pick(double v, double dflt) { return v < 0.0 ? dflt : v; }
inline std::size_t pick(std::size_t v, std::size_t dflt) { return v == 0 ? dflt : v; }

// Hash of the semantic configuration (never paths), for report metadata.
inline std::uint64_t hash_fields(
    const std::vector<std::pair<const char*, std::string>>& fields) {
  std::string s;
  for (const auto& [k, v] : fields) {
    s += k;
    s += '=';
    s += v;
    s += ';';
  }
  return fnv1a64(s);
}

inline std::string fmt_sz(std::size_t v) { return std::to_string(v); }

inline void emit_report(const Report& r, const RunConfig& cfg) {
  std::string text = r.text();
  std::fputs(text.c_str(), stdout);
  if (!cfg.report_out.empty()) write_file(cfg.report_out, text);
}

inline std::unordered_map<std::string, LabelVector> label_map(
    const LabelledVerbs& rows) {
  std::unordered_map<std::string, LabelVector> m;
  for (const auto& [v, l] : rows) m.emplace(v, l);
  return m;
}

inline std::vector<std::string> universe_of(const LabelledVerbs& rows) {
  std::vector<std::string> verbs;
  for (const auto& [v, l] : rows) verbs.push_back(v);
  return verbs;
}

inline LabelledVerbs rows_for(const std::vector<std::string>& verbs,
                              const std::unordered_map<std::string, LabelVector>& m) {
  LabelledVerbs out;
  for (const auto& v : verbs) {
    auto it = m.find(v);
    if (it == m.end()) fail("no attribute labels for verb '" + v + "'");
    out.emplace_back(v, it->second);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int cmd_synth(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) fail("synth: --out is required");
  AttributeSchema schema =
      cfg.schema_path.empty() ? build_schema() : load_schema(cfg.schema_path);

  SynthConfig sc;
  sc.classes = cfg.classes;
  sc.per_class = cfg.per_class;
  sc.feat_dim = cfg.feat_dim;
  sc.emb_dim = cfg.emb_dim;
  sc.sigma = cfg.sigma;
  sc.seed = cfg.seed;
  sc.distinct_signatures = !cfg.no_distinct;
  sc.val_classes = cfg.val_classes;
  sc.test_classes = cfg.test_classes;
  SynthData data = synth_generate(sc, schema);

  std::filesystem::create_directories(cfg.out_dir);
  auto at = [&](const char* name) {
    return (std::filesystem::path(cfg.out_dir) / name).string();
  };
  write_schema(schema, at("schema.tsv"));
  write_attributes(data.gold, schema, at("attributes.csv"));
  write_definitions(data.corpus, at("definitions.tsv"));
  write_embeddings(data.table, at("embeddings.txt"));
  write_split(data.split, at("split.txt"));
  write_feature_file(data.train_features, at("train.feat"));
  if (sc.val_classes) write_feature_file(data.val_features, at("val.feat"));
  if (sc.test_classes) write_feature_file(data.test_features, at("test.feat"));

  std::uint64_t hash = detail::hash_fields({
      {"cmd", "synth"},
      {"classes", detail::fmt_sz(sc.classes)},
      {"per_class", detail::fmt_sz(sc.per_class)},
      {"feat_dim", detail::fmt_sz(sc.feat_dim)},
      {"emb_dim", detail::fmt_sz(sc.emb_dim)},
      {"sigma", detail::fmt_double(sc.sigma)},
      {"distinct", sc.distinct_signatures ? "1" : "0"},
      {"val_classes", detail::fmt_sz(sc.val_classes)},
      {"test_classes", detail::fmt_sz(sc.test_classes)},
  });
  Report r;
  char line[160];
  std::snprintf(line, sizeof line,
                "synthetic dataset: %zu classes, %zu train / %zu val / %zu test "
                "items, feature width %zu\n",
                sc.classes, data.train_features.size(), data.val_features.size(),
                data.test_features.size(), sc.feat_dim);
  r.human = line;
  char hex[20];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
  r.add("report", "synth");
  r.add_int("seed", cfg.seed);
  r.add("config_hash", hex);
  r.add_int("classes", sc.classes);
  r.add_int("train_items", data.train_features.size());
  r.add_int("val_items", data.val_features.size());
  r.add_int("test_items", data.test_features.size());
  r.add_int("definitions", data.corpus.total_definitions());
  detail::emit_report(r, cfg);
  return 0;
}

// ---------------------------------------------------------------------------

namespace detail {

struct AttrEvalInputs {
  AttributeSchema schema;
  LabelledVerbs gold_rows;
  std::unordered_map<std::string, LabelVector> gold;
  DefinitionCorpus corpus;
  EmbeddingTable table;
  Split split;
};

inline AttrEvalInputs load_attr_inputs(const RunConfig& cfg, bool need_defs,
                                       bool need_embs) {
  AttrEvalInputs in;
  in.schema = load_schema(cfg.schema_path);
  in.gold_rows = load_attributes(cfg.attributes_path, in.schema);
  in.gold = label_map(in.gold_rows);
  if (need_defs) {
    if (cfg.definitions_path.empty())
      fail("--definitions is required for this encoder");
    in.corpus = load_definitions(cfg.definitions_path);
  }
  if (need_embs) {
    if (cfg.embeddings_path.empty())
      fail("--embeddings is required for this encoder");
    in.table = load_embeddings(cfg.embeddings_path);
  }
  in.split = load_split(cfg.split_path, universe_of(in.gold_rows));
  return in;
}

inline Report attr_eval_report(const AttrModel& model, const AttrEvalInputs& in,
                               const RunConfig& cfg, std::uint64_t hash,
                               const std::vector<double>* loss_history) {
  LabelledVerbs pred =
      predict_labels(model, in.split.test, in.corpus, in.table);
  LabelledVerbs gold_test = rows_for(in.split.test, in.gold);
  AccuracyReport acc =
      attribute_accuracy(pred, gold_test, in.schema, cfg.effects_conditional);
  Report r = make_attr_report(acc, cfg.seed, hash);
  if (loss_history && !loss_history->empty()) {
    r.add_num("loss/first", loss_history->front());
    r.add_num("loss/final", loss_history->back());
  }
  return r;
}

}  // namespace detail

inline int cmd_train_attributes(const RunConfig& cfg) {
  EncoderKind kind = parse_encoder_kind(cfg.encoder);
  bool need_embs = kind_uses_verb_embedding(kind) || kind_uses_nbow(kind) ||
                   kind_uses_bgru(kind);
  auto in = detail::load_attr_inputs(cfg, kind_uses_definitions(kind), need_embs);

  AttrTrainConfig tc;
  tc.lr = detail::pick(cfg.lr, 1e-4);
  tc.batch = detail::pick(cfg.batch, std::size_t{32});
  tc.epochs = detail::pick(cfg.epochs, std::size_t{30});
  tc.adam_eps = detail::pick(cfg.eps, 1.0);
  tc.l2 = detail::pick(cfg.l2, 0.0);
  tc.dropout = cfg.dropout;
  tc.seed = cfg.seed;
  tc.max_def_len = cfg.max_def_len;
  tc.bow_vocab = cfg.bow_vocab;
  tc.gru_vocab = cfg.gru_vocab;
  tc.hidden = cfg.hidden;

  BgruParams pre;
  const BgruParams* prep = nullptr;
  if (!cfg.pretrained_path.empty()) {
    pre = load_pretrained_encoder(cfg.pretrained_path);
    prep = &pre;
  }

  AttrTrainResult res = train_attr_model(in.schema, in.split.train, in.gold,
                                         in.corpus, in.table, kind, tc, prep);
  if (!cfg.model_out.empty()) save_attr_model(res.model, cfg.model_out);

  std::uint64_t hash = detail::hash_fields({
      {"cmd", "train-attributes"},
      {"encoder", cfg.encoder},
      {"lr", detail::fmt_double(tc.lr)},
      {"batch", detail::fmt_sz(tc.batch)},
      {"epochs", detail::fmt_sz(tc.epochs)},
      {"eps", detail::fmt_double(tc.adam_eps)},
      {"l2", detail::fmt_double(tc.l2)},
      {"dropout", detail::fmt_double(tc.dropout)},
      {"hidden", detail::fmt_sz(tc.hidden)},
      {"pretrained", prep ? "1" : "0"},
      {"effects_conditional", cfg.effects_conditional ? "1" : "0"},
  });
  Report r = detail::attr_eval_report(res.model, in, cfg, hash, &res.loss_history);
  detail::emit_report(r, cfg);
  return 0;
}

inline int cmd_eval_attributes(const RunConfig& cfg) {
  AttributeSchema schema = load_schema(cfg.schema_path);
  AttrModel model = load_attr_model(cfg.model_in, schema);
  bool need_embs = kind_uses_verb_embedding(model.kind) ||
                   kind_uses_nbow(model.kind) || kind_uses_bgru(model.kind);
  auto in = detail::load_attr_inputs(cfg, kind_uses_definitions(model.kind),
                                     need_embs);
  std::uint64_t hash = detail::hash_fields({
      {"cmd", "eval-attributes"},
      {"encoder", encoder_kind_name(model.kind)},
      {"effects_conditional", cfg.effects_conditional ? "1" : "0"},
  });
  Report r = detail::attr_eval_report(model, in, cfg, hash, nullptr);
  detail::emit_report(r, cfg);
  return 0;
}

inline int cmd_pretrain_dictionary(const RunConfig& cfg) {
  DefinitionCorpus dict = load_definitions(cfg.definitions_path);
  EmbeddingTable table = load_embeddings(cfg.embeddings_path);

  PretrainConfig pc;
  pc.lr = detail::pick(cfg.lr, 1e-4);
  pc.batch = detail::pick(cfg.batch, std::size_t{64});
  pc.epochs = detail::pick(cfg.epochs, std::size_t{5});
  pc.adam_eps = detail::pick(cfg.eps, 1e-8);
  pc.seed = cfg.seed;
  pc.max_def_len = cfg.max_def_len;
  pc.gru_vocab = cfg.gru_vocab;
  pc.hidden = cfg.hidden;

  PretrainResult res = pretrain_definition_encoder(dict, table, pc);
  if (!cfg.model_out.empty()) save_pretrained_encoder(res.encoder, cfg.model_out);

  std::uint64_t hash = detail::hash_fields({
      {"cmd", "pretrain-dictionary"},
      {"lr", detail::fmt_double(pc.lr)},
      {"batch", detail::fmt_sz(pc.batch)},
      {"epochs", detail::fmt_sz(pc.epochs)},
      {"eps", detail::fmt_double(pc.adam_eps)},
      {"hidden", detail::fmt_sz(pc.hidden)},
  });
  Report r;
  char line[120], hex[20];
  std::snprintf(line, sizeof line,
                "pretrained definition encoder: hinge loss %.4f -> %.4f over %zu "
                "epochs\n",
                res.loss_history.front(), res.loss_history.back(), pc.epochs);
  r.human = line;
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
  r.add("report", "pretrain");
  r.add_int("seed", cfg.seed);
  r.add("config_hash", hex);
  r.add_num("loss/first", res.loss_history.front());
  r.add_num("loss/final", res.loss_history.back());
  detail::emit_report(r, cfg);
  return 0;
}

// ---------------------------------------------------------------------------

namespace detail {

struct ZsInputs {
  AttributeSchema schema;
  LabelledVerbs gold_rows;
  std::unordered_map<std::string, LabelVector> gold;
  LookupTable lookup;
  EmbeddingTable table;
  Split split;
};

inline ZsInputs load_zs_inputs(const RunConfig& cfg, bool need_embs) {
  ZsInputs in;
  in.schema = load_schema(cfg.schema_path);
  in.gold_rows = load_attributes(cfg.attributes_path, in.schema);
  in.gold = label_map(in.gold_rows);
  in.lookup = encode_lookup(universe_of(in.gold_rows), in.gold, in.schema);
  if (need_embs) {
    if (cfg.embeddings_path.empty())
      fail("--embeddings is required for this head");
    in.table = load_embeddings(cfg.embeddings_path);
  }
  in.split = load_split(cfg.split_path, universe_of(in.gold_rows));
  return in;
}

}  // namespace detail

inline int cmd_train_zeroshot(const RunConfig& cfg) {
  const std::string& head = cfg.head;
  bool need_sig = head == "attr" || head == "joint" || head == "dap" || head == "eszl";
  bool need_emb = head == "emb" || head == "joint" || head == "devise";
  if (!need_sig && !need_emb) fail("unknown head '" + head + "'");

  auto in = detail::load_zs_inputs(cfg, need_emb);
  FeatureSet train = read_feature_file(cfg.features_path);
  CandidateSet cands = make_candidates(in.split.train,
                                       need_sig ? &in.lookup : nullptr,
                                       need_emb ? &in.table : nullptr);

  Report r;
  char hex[20], line[160];
  std::vector<std::pair<const char*, std::string>> hash_fields = {
      {"cmd", "train-zeroshot"}, {"head", head}};

  if (head == "attr" || head == "emb" || head == "joint") {
    ZsTrainConfig zc;
    zc.branch = parse_zs_branch(head);
    zc.lr = detail::pick(cfg.lr, 1e-3);
    zc.batch = detail::pick(cfg.batch, std::size_t{32});
    zc.epochs = detail::pick(cfg.epochs, std::size_t{50});
    zc.adam_eps = detail::pick(cfg.eps, 1e-8);
    zc.l2 = detail::pick(cfg.l2, 1e-4);
    zc.seed = cfg.seed;
    ZsTrainResult res =
        train_zeroshot(train, cands, in.table.dim, in.schema, zc);
    if (!cfg.model_out.empty()) save_zs_head(res.head, cfg.model_out);
    hash_fields.insert(hash_fields.end(),
                       {{"lr", detail::fmt_double(zc.lr)},
                        {"batch", detail::fmt_sz(zc.batch)},
                        {"epochs", detail::fmt_sz(zc.epochs)},
                        {"l2", detail::fmt_double(zc.l2)}});
    std::snprintf(line, sizeof line, "%s head: loss %.4f -> %.4f\n", head.c_str(),
                  res.loss_history.front(), res.loss_history.back());
    r.human = line;
    r.add("report", "train-zeroshot");
    r.add("head", head);
    r.add_num("loss/first", res.loss_history.front());
    r.add_num("loss/final", res.loss_history.back());
  } else if (head == "dap") {
    DapConfig dc;
    dc.lr = detail::pick(cfg.lr, 1e-2);
    dc.epochs = detail::pick(cfg.epochs, std::size_t{200});
    dc.adam_eps = detail::pick(cfg.eps, 1e-8);
    dc.l2 = detail::pick(cfg.l2, 0.0);
    dc.seed = cfg.seed;
    DapTrainResult res = dap_train(train, cands, dc);
    res.model.use_prior = cfg.dap_prior;
    if (!cfg.model_out.empty())
      save_dap_model(res.model, in.schema, cfg.model_out);
    hash_fields.insert(hash_fields.end(),
                       {{"lr", detail::fmt_double(dc.lr)},
                        {"epochs", detail::fmt_sz(dc.epochs)},
                        {"prior", cfg.dap_prior ? "1" : "0"}});
    std::snprintf(line, sizeof line,
                  "independent attribute classifiers: %zu trained, %zu constant\n",
                  res.model.n_attr() - res.warnings.size(), res.warnings.size());
    r.human = line;
    for (const auto& w : res.warnings) r.human += "warning: " + w + "\n";
    r.add("report", "train-zeroshot");
    r.add("head", head);
    r.add_int("constant_attributes", res.warnings.size());
  } else if (head == "eszl") {
    double gamma = cfg.gamma, lambda = cfg.lambda_, val_top1 = -1.0;
    Mat v;
    if (!cfg.val_features_path.empty()) {
      FeatureSet val = read_feature_file(cfg.val_features_path);
      CandidateSet val_cands = make_candidates(in.split.val, &in.lookup, nullptr);
      EszlSelection sel = eszl_select(train, cands, val, val_cands);
      gamma = sel.gamma;
      lambda = sel.lambda;
      val_top1 = sel.val_top1;
      v = std::move(sel.v);
    } else {
      v = eszl_fit(train, cands, gamma, lambda);
    }
    if (!cfg.model_out.empty())
      save_eszl_model(v, gamma, lambda, in.schema, cfg.model_out);
    hash_fields.insert(hash_fields.end(),
                       {{"gamma", detail::fmt_double(gamma)},
                        {"lambda", detail::fmt_double(lambda)}});
    std::snprintf(line, sizeof line,
                  "closed-form bilinear model: gamma %g, lambda %g\n", gamma,
                  lambda);
    r.human = line;
    r.add("report", "train-zeroshot");
    r.add("head", head);
    r.add_num("gamma", gamma);
    r.add_num("lambda", lambda);
    if (val_top1 >= 0.0) r.add_num("val_top1", val_top1);
  } else {  // devise
    DeviseConfig dc;
    dc.lr = detail::pick(cfg.lr, 1e-3);
    dc.batch = detail::pick(cfg.batch, std::size_t{32});
    dc.epochs = detail::pick(cfg.epochs, std::size_t{50});
    dc.adam_eps = detail::pick(cfg.eps, 1e-8);
    dc.seed = cfg.seed;
    DeviseTrainResult res = devise_train(train, cands, dc);
    if (!cfg.model_out.empty())
      save_devise_model(res.model, in.schema, cfg.model_out);
    hash_fields.insert(hash_fields.end(),
                       {{"lr", detail::fmt_double(dc.lr)},
                        {"batch", detail::fmt_sz(dc.batch)},
                        {"epochs", detail::fmt_sz(dc.epochs)}});
    std::snprintf(line, sizeof line, "margin projection: loss %.4f -> %.4f\n",
                  res.loss_history.front(), res.loss_history.back());
    r.human = line;
    r.add("report", "train-zeroshot");
    r.add("head", head);
    r.add_num("loss/first", res.loss_history.front());
    r.add_num("loss/final", res.loss_history.back());
  }

  std::uint64_t hash = detail::hash_fields(hash_fields);
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
  r.add_int("seed", cfg.seed);
  r.add("config_hash", hex);
  detail::emit_report(r, cfg);
  return 0;
}

inline int cmd_eval_zeroshot(const RunConfig& cfg) {
  std::string kind = model_kind(cfg.model_in);
  // Embeddings are mandatory only for heads that rank by them; otherwise the
  // table is loaded when supplied so embedding branches can be evaluated.
  bool need_emb = kind == "devise" || !cfg.embeddings_path.empty();
  auto in = detail::load_zs_inputs(cfg, need_emb);
  FeatureSet test = read_feature_file(cfg.features_path);

  CandidateSet cands_gold = make_candidates(
      in.split.test, &in.lookup, in.table.dim ? &in.table : nullptr);

  bool want_pred = cfg.pred_attrs || cfg.ensemble_product;
  CandidateSet cands_pred;
  if (want_pred) {
    if (kind == "devise")
      fail("predicted attributes do not apply to this head");
    if (cfg.attr_model_path.empty())
      fail("--attr-model is required for predicted-attribute evaluation");
    AttrModel am = load_attr_model(cfg.attr_model_path, in.schema);
    DefinitionCorpus corpus;
    if (kind_uses_definitions(am.kind)) {
      if (cfg.definitions_path.empty())
        fail("--definitions is required to predict attributes");
      corpus = load_definitions(cfg.definitions_path);
    }
    EmbeddingTable am_table;
    const EmbeddingTable* tbl = &in.table;
    if (!in.table.dim) {
      am_table = load_embeddings(cfg.embeddings_path);
      tbl = &am_table;
    }
    LabelledVerbs pred = predict_labels(am, in.split.test, corpus, *tbl);
    auto pred_map = detail::label_map(pred);
    LookupTable pred_lookup =
        encode_lookup(in.split.test, pred_map, in.schema);
    cands_pred = make_candidates(in.split.test, &pred_lookup,
                                 in.table.dim ? &in.table : nullptr);
  }
  const CandidateSet& cands_main =
      (cfg.pred_attrs && !cfg.ensemble_product) ? cands_pred : cands_gold;

  std::function<Vec(std::span<const double>)> scorer;
  std::string head_name = kind;

  if (kind == "zs_head") {
    ZeroShotHead h = load_zs_head(cfg.model_in, in.schema);
    ZsBranch branch;
    if (cfg.head == "auto")
      branch = h.has_attr ? (h.has_emb ? ZsBranch::Joint : ZsBranch::Attr)
                          : ZsBranch::Emb;
    else
      branch = parse_zs_branch(cfg.head);
    head_name = zs_branch_name(branch);
    if (branch != ZsBranch::Attr && !cands_gold.has_embeddings())
      fail("--embeddings is required for this head");
    if (cfg.ensemble_product) {
      if (branch == ZsBranch::Emb) fail("ensemble needs an attribute branch");
      scorer = [h, branch, &cands_gold, &cands_pred](std::span<const double> g) {
        std::vector<Vec> dists = {softmax(zs_logits(h, cands_gold, g, branch)),
                                  softmax(zs_logits(h, cands_pred, g, branch))};
        return prob_product_ensemble(dists);
      };
      head_name += "+ensemble";
    } else {
      scorer = [h, branch, &cands_main](std::span<const double> g) {
        return zs_logits(h, cands_main, g, branch);
      };
    }
  } else if (kind == "dap") {
    DapModel m = load_dap_model(cfg.model_in, in.schema);
    if (cfg.ensemble_product) {
      scorer = [m, &cands_gold, &cands_pred](std::span<const double> g) {
        std::vector<Vec> dists = {dap_predict(m, cands_gold, g),
                                  dap_predict(m, cands_pred, g)};
        return prob_product_ensemble(dists);
      };
      head_name += "+ensemble";
    } else {
      scorer = [m, &cands_main](std::span<const double> g) {
        return dap_scores(m, cands_main, g);
      };
    }
  } else if (kind == "eszl") {
    if (cfg.ensemble_product) fail("ensemble not supported for this head");
    EszlLoaded m = load_eszl_model(cfg.model_in, in.schema);
    scorer = [m = std::move(m), &cands_main](std::span<const double> g) {
      return eszl_scores(m.v, cands_main, g);
    };
  } else if (kind == "devise") {
    if (cfg.ensemble_product) fail("ensemble not supported for this head");
    DeviseModel m = load_devise_model(cfg.model_in, in.schema);
    scorer = [m = std::move(m), &cands_gold](std::span<const double> g) {
      return devise_scores(m, cands_gold, g);
    };
  } else {
    fail("cannot evaluate a model of kind '" + kind + "'");
  }

  ZsEval ev = eval_topk(test, cands_gold, scorer, cfg.topk);
  HubnessStats hub = hubness_stats(ev.top1_pred, cands_gold.size());

  std::uint64_t hash = detail::hash_fields({
      {"cmd", "eval-zeroshot"},
      {"head", head_name},
      {"topk", detail::fmt_sz(cfg.topk)},
      {"pred_attrs", cfg.pred_attrs ? "1" : "0"},
      {"ensemble", cfg.ensemble_product ? "1" : "0"},
  });
  Report r = make_zeroshot_report(ev, hub, head_name, cfg.seed, hash);
  detail::emit_report(r, cfg);
  return 0;
}

// ---------------------------------------------------------------------------
// gradient checking across every trainable component

namespace detail {

struct CheckRow {
  std::string name;
  double err = 0.0;
  bool pass = false;
};

inline AttributeSchema toy_schema() {
  AttributeSchema s;
  s.attrs.push_back({"speed", "pace", false, {"slow", "steady", "fast"}});
  s.attrs.push_back({"indoor", "setting", true, {"0", "1"}});
  s.attrs.push_back({"paired", "setting", true, {"0", "1"}});
  s.validate();
  return s;
}

// Corrupt hook: nudges the first analytic gradient entry so the check must
// report a failure naming this component.
inline void maybe_corrupt(const RunConfig& cfg, const std::string& name,
                          std::span<const ParamRef> refs) {
  if (cfg.corrupt != name || refs.empty()) return;
  const_cast<double*>(refs[0].g)[0] += 0.5;
}

}  // namespace detail

// Runs finite-difference checks over every trainable component at toy shapes
// and returns one row per (encoder, head) pair.
inline std::vector<detail::CheckRow> gradient_suite(const RunConfig& cfg) {
  const double tol = 1e-4;
  std::vector<detail::CheckRow> rows;

  auto record = [&](const std::string& name, std::span<const ParamRef> refs,
                    const std::function<double()>& loss) {
    detail::maybe_corrupt(cfg, name, refs);
    GradCheckResult gc = grad_check(loss, refs, 1e-5);
    rows.push_back({name, gc.max_rel_err, gc.max_rel_err <= tol});
  };

  AttributeSchema schema = detail::toy_schema();
  Prng rng(derive_seed(cfg.seed, 40));

  // shared toy text data
  EmbeddingTable table;
  table.reserve_dim(4);
  for (const char* tok : {"swim", "walk", "rest", "move", "fast", "slow", "alone"}) {
    Vec v(4);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    table.add(tok, v);
  }
  DefinitionCorpus corpus;
  corpus.add("swim", {"move", "fast", "alone"});
  corpus.add("walk", {"move", "slow"});
  corpus.add("rest", {"slow", "alone", "rest"});
  std::vector<std::string> verbs = {"swim", "walk", "rest"};
  std::unordered_map<std::string, LabelVector> gold = {
      {"swim", {2, 0, 0}}, {"walk", {1, 0, 1}}, {"rest", {0, 1, 0}}};

  // per-attribute softmax heads across every encoder kind
  for (EncoderKind kind :
       {EncoderKind::Emb, EncoderKind::Bow, EncoderKind::Nbow, EncoderKind::Bgru,
        EncoderKind::BowEmb, EncoderKind::NbowEmb, EncoderKind::BgruEmb}) {
    AttrModel m;
    m.kind = kind;
    m.schema = schema;
    if (kind_uses_bow(kind)) m.bow = build_bow_vocab(corpus, verbs, 16);
    if (kind_uses_bgru(kind)) {
      m.bgru.vocab = build_gru_vocab(corpus, verbs, 16);
      m.bgru.max_len = 8;
      m.bgru.init(4, 3, rng);
      m.bgru.seed_embeddings(table);
    }
    m.in_dim = encoder_out_dim(m, table.dim);
    m.init_heads();
    for (Mat& h : m.heads)
      for (double& x : h.a) x = rng.uniform(-0.5, 0.5);

    AttrGrads grads;
    grads.init(m);
    auto loss_all = [&]() {
      double L = 0.0;
      for (const auto& v : verbs) {
        std::span<const std::string> toks;
        if (kind_uses_definitions(kind)) toks = corpus.first_definition(v);
        L += attr_instance_loss(m, v, toks, gold.at(v), table, nullptr, nullptr,
                                false);
      }
      return L;
    };
    grads.zero();
    for (const auto& v : verbs) {
      std::span<const std::string> toks;
      if (kind_uses_definitions(kind)) toks = corpus.first_definition(v);
      attr_instance_loss(m, v, toks, gold.at(v), table, &grads, nullptr, true);
    }
    auto refs = attr_param_refs(m, grads, true);
    record("attr/" + encoder_kind_name(kind), refs, loss_all);
  }

  // recurrent cell through a scalar readout, T=3 tokens, H=5
  {
    BgruParams p;
    p.vocab.set_words({"move", "fast", "slow"});
    p.max_len = 8;
    p.init(4, 5, rng);
    std::vector<std::string> toks = {"move", "fast", "slow"};
    Vec w(p.out_dim());
    for (double& x : w) x = rng.uniform(-0.5, 0.5);

    BgruGrads grads;
    grads.init(p);
    Vec w_grad(w.size(), 0.0);
    auto loss = [&]() { return dot(w, encode_bgru(p, toks, nullptr)); };
    BgruTrace trace;
    Vec enc = encode_bgru(p, toks, &trace);
    w_grad = enc;
    bgru_backward(p, trace, w, grads, true);
    std::vector<ParamRef> refs = {
        {"readout", w.data(), w_grad.data(), w.size()},
        {"fwd/wr", p.fwd.wr.a.data(), grads.fwd.wr.a.data(), p.fwd.wr.a.size()},
        {"fwd/wz", p.fwd.wz.a.data(), grads.fwd.wz.a.data(), p.fwd.wz.a.size()},
        {"fwd/wh", p.fwd.wh.a.data(), grads.fwd.wh.a.data(), p.fwd.wh.a.size()},
        {"fwd/ur", p.fwd.ur.a.data(), grads.fwd.ur.a.data(), p.fwd.ur.a.size()},
        {"fwd/uz", p.fwd.uz.a.data(), grads.fwd.uz.a.data(), p.fwd.uz.a.size()},
        {"fwd/uh", p.fwd.uh.a.data(), grads.fwd.uh.a.data(), p.fwd.uh.a.size()},
        {"bwd/wr", p.bwd.wr.a.data(), grads.bwd.wr.a.data(), p.bwd.wr.a.size()},
        {"bwd/wz", p.bwd.wz.a.data(), grads.bwd.wz.a.data(), p.bwd.wz.a.size()},
        {"bwd/wh", p.bwd.wh.a.data(), grads.bwd.wh.a.data(), p.bwd.wh.a.size()},
        {"bwd/ur", p.bwd.ur.a.data(), grads.bwd.ur.a.data(), p.bwd.ur.a.size()},
        {"bwd/uz", p.bwd.uz.a.data(), grads.bwd.uz.a.data(), p.bwd.uz.a.size()},
        {"bwd/uh", p.bwd.uh.a.data(), grads.bwd.uh.a.data(), p.bwd.uh.a.size()},
        {"embed", p.embed.a.data(), grads.embed.a.data(), p.embed.a.size()},
    };
    record("bgru_cell", refs, loss);
  }

  // zero-shot heads over 3 candidates, 2 features
  {
    std::size_t feat_dim = 4, emb_dim = 3;
    CandidateSet cands;
    cands.verbs = {"swim", "walk", "rest"};
    for (const auto& verb : cands.verbs) {
      cands.signatures.push_back(binarize(schema, gold.at(verb)));
      Vec e(emb_dim);
      for (double& x : e) x = rng.uniform(-1.0, 1.0);
      cands.embeddings.push_back(e);
    }
    std::vector<Vec> feats(2, Vec(feat_dim));
    for (auto& f : feats)
      for (double& x : f) x = rng.uniform(-1.0, 1.0);
    std::vector<std::size_t> targets = {0, 2};

    for (ZsBranch branch : {ZsBranch::Attr, ZsBranch::Emb, ZsBranch::Joint}) {
      ZeroShotHead h;
      h.init(schema, feat_dim, emb_dim, branch != ZsBranch::Emb,
             branch != ZsBranch::Attr);
      for (Mat& w : h.w_attr)
        for (double& x : w.a) x = rng.uniform(-0.5, 0.5);
      for (double& x : h.w_emb.a) x = rng.uniform(-0.5, 0.5);

      ZsGrads grads;
      grads.init(h);
      auto loss = [&]() {
        double L = 0.0;
        for (std::size_t i = 0; i < feats.size(); ++i)
          L += zs_instance_loss(h, cands, feats[i], targets[i], branch, nullptr);
        return L;
      };
      for (std::size_t i = 0; i < feats.size(); ++i)
        zs_instance_loss(h, cands, feats[i], targets[i], branch, &grads);
      std::vector<ParamRef> refs;
      for (std::size_t k = 0; k < h.w_attr.size(); ++k)
        refs.push_back({"w_attr" + std::to_string(k), h.w_attr[k].a.data(),
                        grads.w_attr[k].a.data(), h.w_attr[k].a.size()});
      if (h.has_emb)
        refs.push_back({"w_emb", h.w_emb.a.data(), grads.w_emb.a.data(),
                        h.w_emb.a.size()});
      record("zs/" + zs_branch_name(branch), refs, loss);
    }

    // hinge projection, re-drawn until every margin term is off its kink
    {
      DeviseModel m;
      for (std::uint64_t attempt = 0;; ++attempt) {
        Prng drng(derive_seed(cfg.seed, 50 + attempt));
        m.w_emb = Mat(emb_dim, feat_dim);
        for (double& x : m.w_emb.a) x = drng.uniform(-0.5, 0.5);
        double closest = 1e9;
        for (std::size_t i = 0; i < feats.size(); ++i) {
          Vec proj = matvec(m.w_emb, feats[i]);
          for (std::size_t c = 0; c < cands.size(); ++c) {
            if (c == targets[i]) continue;
            double t = m.margin + dot(cands.embeddings[c], proj) -
                       dot(cands.embeddings[targets[i]], proj);
            closest = std::min(closest, std::fabs(t));
          }
        }
        if (closest > 1e-2) break;
      }
      Mat grad(emb_dim, feat_dim);
      auto loss = [&]() {
        double L = 0.0;
        for (std::size_t i = 0; i < feats.size(); ++i)
          L += devise_instance_loss(m, cands, feats[i], targets[i], nullptr);
        return L;
      };
      for (std::size_t i = 0; i < feats.size(); ++i)
        devise_instance_loss(m, cands, feats[i], targets[i], &grad);
      std::vector<ParamRef> refs = {
          {"w_emb", m.w_emb.a.data(), grad.a.data(), m.w_emb.a.size()}};
      record("devise", refs, loss);
    }
  }

  // ranking-loss pretraining step (wide margin keeps the hinge active)
  {
    BgruParams enc;
    enc.vocab.set_words({"move", "fast", "alone"});
    enc.max_len = 8;
    enc.init(4, 3, rng);
    Mat w_emb(4, enc.out_dim());
    for (double& x : w_emb.a) x = rng.uniform(-0.5, 0.5);
    std::vector<std::string> toks = {"move", "fast"};
    Vec w(4), wneg(4);
    for (double& x : w) x = rng.uniform(-1.0, 1.0);
    for (double& x : wneg) x = rng.uniform(-1.0, 1.0);
    const double margin = 1.5;

    BgruGrads enc_grads;
    enc_grads.init(enc);
    Mat w_emb_grad(w_emb.rows, w_emb.cols);
    auto loss = [&]() {
      return pretrain_instance_loss(enc, w_emb, toks, w, wneg, margin, nullptr,
                                    nullptr);
    };
    pretrain_instance_loss(enc, w_emb, toks, w, wneg, margin, &enc_grads,
                           &w_emb_grad);
    std::vector<ParamRef> refs = {
        {"w_emb", w_emb.a.data(), w_emb_grad.a.data(), w_emb.a.size()},
        {"fwd/wr", enc.fwd.wr.a.data(), enc_grads.fwd.wr.a.data(), enc.fwd.wr.a.size()},
        {"fwd/uh", enc.fwd.uh.a.data(), enc_grads.fwd.uh.a.data(), enc.fwd.uh.a.size()},
        {"bwd/wh", enc.bwd.wh.a.data(), enc_grads.bwd.wh.a.data(), enc.bwd.wh.a.size()},
        {"embed", enc.embed.a.data(), enc_grads.embed.a.data(), enc.embed.a.size()},
    };
    record("pretrain", refs, loss);
  }

  return rows;
}

inline int cmd_gradcheck(const RunConfig& cfg) {
  std::vector<detail::CheckRow> rows = gradient_suite(cfg);
  bool all_pass = true;
  for (const auto& row : rows) {
    std::printf("%-14s %s  max rel err %.3g\n", row.name.c_str(),
                row.pass ? "PASS" : "FAIL", row.err);
    all_pass = all_pass && row.pass;
  }
  std::printf("%zu components, %s\n", rows.size(),
              all_pass ? "all gradients match" : "FAILURES above");
  return all_pass ? 0 : 1;
}

// ---------------------------------------------------------------------------

inline int run_cli(int argc, char** argv) {
  CLI::App app{"verb-attribute models and zero-shot activity recognition"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--seed", cfg.seed, "root random seed (default 0)");
    c->add_option("--report-out", cfg.report_out, "also write the report here");
  };
  auto add_hypers = [&](CLI::App* c) {
    c->add_option("--lr", cfg.lr, "learning rate");
    c->add_option("--batch", cfg.batch, "mini-batch size");
    c->add_option("--epochs", cfg.epochs, "training epochs");
    c->add_option("--eps", cfg.eps, "Adam epsilon");
    c->add_option("--l2", cfg.l2, "L2 penalty");
  };
  auto add_data = [&](CLI::App* c, bool attrs_required) {
    auto* s = c->add_option("--schema", cfg.schema_path, "attribute schema TSV");
    s->required();
    auto* a = c->add_option("--attributes", cfg.attributes_path,
                            "verb attribute CSV");
    if (attrs_required) a->required();
    c->add_option("--split", cfg.split_path, "split file")->required();
    c->add_option("--embeddings", cfg.embeddings_path, "word embedding text file");
    c->add_option("--definitions", cfg.definitions_path, "definition TSV");
  };

  auto* ta = app.add_subcommand("train-attributes",
                                "train attribute heads over an encoder");
  add_data(ta, true);
  add_hypers(ta);
  add_common(ta);
  ta->add_option("--encoder", cfg.encoder,
                 "emb | bow | nbow | bgru | bow+emb | nbow+emb | bgru+emb");
  ta->add_option("--dropout", cfg.dropout, "dropout on the recurrent block");
  ta->add_option("--hidden", cfg.hidden, "recurrent hidden size");
  ta->add_option("--bow-vocab", cfg.bow_vocab, "bag-of-words vocabulary size");
  ta->add_option("--gru-vocab", cfg.gru_vocab, "recurrent vocabulary size");
  ta->add_option("--max-def-len", cfg.max_def_len, "definition length cap");
  ta->add_option("--pretrained", cfg.pretrained_path,
                 "pretrained definition encoder to start from");
  ta->add_option("--model-out", cfg.model_out, "write the trained model here");
  ta->add_flag("--effects-conditional", cfg.effects_conditional,
               "score effect attributes only on verbs with the matching "
               "transitivity");

  auto* ea = app.add_subcommand("eval-attributes",
                                "evaluate a trained attribute model");
  add_data(ea, true);
  add_common(ea);
  ea->add_option("--model", cfg.model_in, "attribute model file")->required();
  ea->add_flag("--effects-conditional", cfg.effects_conditional,
               "score effect attributes only on verbs with the matching "
               "transitivity");

  auto* pd = app.add_subcommand("pretrain-dictionary",
                                "pretrain the definition encoder on "
                                "(definition, word) pairs");
  pd->add_option("--definitions", cfg.definitions_path, "dictionary TSV")
      ->required();
  pd->add_option("--embeddings", cfg.embeddings_path, "word embedding text file")
      ->required();
  pd->add_option("--hidden", cfg.hidden, "recurrent hidden size");
  pd->add_option("--gru-vocab", cfg.gru_vocab, "recurrent vocabulary size");
  pd->add_option("--max-def-len", cfg.max_def_len, "definition length cap");
  pd->add_option("--model-out", cfg.model_out, "write the encoder here");
  add_hypers(pd);
  add_common(pd);

  auto* tz = app.add_subcommand("train-zeroshot",
                                "train a zero-shot head on labelled features");
  add_data(tz, true);
  add_hypers(tz);
  add_common(tz);
  tz->add_option("--features", cfg.features_path, "training feature file")
      ->required();
  tz->add_option("--val-features", cfg.val_features_path,
                 "validation features (enables ridge grid search)");
  tz->add_option("--head", cfg.head, "attr | emb | joint | dap | eszl | devise")
      ->required();
  tz->add_option("--gamma", cfg.gamma, "feature-side ridge");
  tz->add_option("--lambda", cfg.lambda_, "signature-side ridge");
  tz->add_flag("--dap-prior", cfg.dap_prior,
               "divide attribute posteriors by their training priors");
  tz->add_option("--model-out", cfg.model_out, "write the trained head here");

  auto* ez = app.add_subcommand("eval-zeroshot",
                                "evaluate a zero-shot head on test features");
  add_data(ez, true);
  add_common(ez);
  ez->add_option("--model", cfg.model_in, "zero-shot model file")->required();
  ez->add_option("--features", cfg.features_path, "test feature file")
      ->required();
  ez->add_option("--head", cfg.head, "branch override: attr | emb | joint");
  ez->add_option("--topk", cfg.topk, "k for top-k accuracy (default 5)")
      ->check(CLI::PositiveNumber);
  ez->add_flag("--gold-attrs", cfg.gold_attrs,
               "use annotated candidate signatures (default)");
  ez->add_flag("--pred-attrs", cfg.pred_attrs,
               "use signatures predicted by an attribute model");
  ez->add_option("--attr-model", cfg.attr_model_path,
                 "attribute model for --pred-attrs / --ensemble-product");
  ez->add_flag("--ensemble-product", cfg.ensemble_product,
               "multiply gold- and predicted-signature distributions");

  auto* sy = app.add_subcommand("synth", "generate a synthetic dataset");
  sy->add_option("--out", cfg.out_dir, "output directory")->required();
  sy->add_option("--schema", cfg.schema_path,
                 "schema TSV (defaults to the built-in taxonomy)");
  sy->add_option("--classes", cfg.classes, "number of verb classes");
  sy->add_option("--per-class", cfg.per_class, "instances per class");
  sy->add_option("--feat-dim", cfg.feat_dim, "feature width");
  sy->add_option("--emb-dim", cfg.emb_dim, "embedding width");
  sy->add_option("--sigma", cfg.sigma, "feature/embedding noise");
  sy->add_option("--val-classes", cfg.val_classes, "classes held out for validation");
  sy->add_option("--test-classes", cfg.test_classes, "classes held out for testing");
  sy->add_flag("--no-distinct", cfg.no_distinct,
               "allow duplicate class signatures");
  add_common(sy);

  auto* gc = app.add_subcommand("gradcheck",
                                "finite-difference check of every trainable "
                                "component");
  gc->add_option("--seed", cfg.seed, "root random seed (default 0)");
  gc->add_option("--corrupt", cfg.corrupt, "")->group("");  // test hook, hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (ta->parsed()) return cmd_train_attributes(cfg);
    if (ea->parsed()) return cmd_eval_attributes(cfg);
    if (pd->parsed()) return cmd_pretrain_dictionary(cfg);
    if (tz->parsed()) return cmd_train_zeroshot(cfg);
    if (ez->parsed()) return cmd_eval_zeroshot(cfg);
    if (sy->parsed()) return cmd_synth(cfg);
    if (gc->parsed()) return cmd_gradcheck(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  std::fprintf(stderr, "error: no subcommand\n");
  return 1;
}

}  // namespace vatt
