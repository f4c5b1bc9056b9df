#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "vatt/dataio.hpp"
#include "vatt/model_io.hpp"
#include "vatt/synth.hpp"
#include "vatt/zeroshot.hpp"

using namespace vatt;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string tmp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "vatt_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

FeatureSet sample_features() {
  FeatureSet fs;
  fs.dim = 3;
  fs.verbs = {"swim", "walk"};
  fs.features = {Vec{0.5, -1.25, 3.0}, Vec{0.1, 0.2, -0.3}};
  fs.labels = {1, 0};
  fs.split_tag = "train";
  fs.validate();
  return fs;
}

}  // namespace

TEST_CASE("feature files round-trip losslessly") {
  FeatureSet fs = sample_features();
  std::string path = tmp_path("feat.bin");
  write_feature_file(fs, path);

  // fixed-layout header: 16 bytes + per item (4 + 4 * width)
  CHECK(std::filesystem::file_size(path) == 48);
  std::ifstream in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  CHECK(std::string(magic, 4) == "VAFT");

  FeatureSet back = read_feature_file(path);
  CHECK(back.dim == 3);
  CHECK(back.verbs == fs.verbs);
  CHECK(back.labels == fs.labels);
  // float32 payload: values chosen to be exactly representable
  CHECK(back.features[0] == fs.features[0]);
  CHECK(back.features[1][2] ==
        Approx(fs.features[1][2]).epsilon(1e-7));  // -0.3 quantizes
}

TEST_CASE("feature reader rejects malformed files") {
  std::string path = tmp_path("bad.bin");
  {
    std::ofstream out(path, std::ios::binary);
    out.write("NOPE", 4);
  }
  CHECK_THROWS_WITH(read_feature_file(path), ContainsSubstring("magic"));

  FeatureSet fs = sample_features();
  std::string trunc = tmp_path("trunc.bin");
  write_feature_file(fs, trunc);
  std::filesystem::resize_file(trunc, 30);
  CHECK_THROWS_WITH(read_feature_file(trunc), ContainsSubstring("truncated"));

  CHECK_THROWS(read_feature_file(tmp_path("missing.bin")));
}

TEST_CASE("split files round-trip and enforce full coverage") {
  std::vector<std::string> universe = {"a", "b", "c", "d"};
  Split s;
  s.train = {"a", "b"};
  s.val = {"c"};
  s.test = {"d"};
  std::string path = tmp_path("split.txt");
  write_split(s, path);
  Split back = load_split(path, universe);
  CHECK(back.train == s.train);
  CHECK(back.val == s.val);
  CHECK(back.test == s.test);

  Split missing;
  missing.train = {"a"};
  missing.test = {"d"};
  write_split(missing, tmp_path("missing_split.txt"));
  CHECK_THROWS_WITH(load_split(tmp_path("missing_split.txt"), universe),
                    ContainsSubstring("does not cover"));

  Split dup;
  dup.train = {"a", "b", "c"};
  dup.test = {"c", "d"};
  write_split(dup, tmp_path("dup_split.txt"));
  CHECK_THROWS_WITH(load_split(tmp_path("dup_split.txt"), universe),
                    ContainsSubstring("two split sections"));

  Split unknown;
  unknown.train = {"a", "b", "zzz", "c"};
  unknown.test = {"d"};
  write_split(unknown, tmp_path("unknown_split.txt"));
  CHECK_THROWS(load_split(tmp_path("unknown_split.txt"), universe));
}

TEST_CASE("attribute tables round-trip with schema validation") {
  AttributeSchema schema = build_schema();
  Prng rng(30);
  LabelledVerbs rows;
  for (const char* v : {"swim", "walk", "put up"}) {
    LabelVector l(24);
    for (std::size_t k = 0; k < 24; ++k)
      l[k] = static_cast<int>(rng.below(schema.attrs[k].card()));
    rows.emplace_back(v, l);
  }
  std::string path = tmp_path("attrs.csv");
  write_attributes(rows, schema, path);
  LabelledVerbs back = load_attributes(path, schema);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].first == rows[i].first);
    CHECK(back[i].second == rows[i].second);
  }
}

TEST_CASE("attribute loader reports the offending line") {
  AttributeSchema schema = build_schema();
  std::string path = tmp_path("bad_attrs.csv");
  {
    LabelledVerbs rows = {{"swim", LabelVector(24, 0)}};
    write_attributes(rows, schema, path);
    std::ofstream out(path, std::ios::app);
    out << "walk,9";
    for (int i = 0; i < 23; ++i) out << ",0";
    out << "\n";
  }
  CHECK_THROWS_WITH(load_attributes(path, schema), ContainsSubstring(":3:"));

  std::string dup = tmp_path("dup_attrs.csv");
  {
    LabelledVerbs rows = {{"swim", LabelVector(24, 0)},
                          {"swim", LabelVector(24, 0)}};
    write_attributes(rows, schema, dup);
  }
  CHECK_THROWS_WITH(load_attributes(dup, schema), ContainsSubstring("duplicate"));

  std::string hdr = tmp_path("hdr_attrs.csv");
  {
    std::ofstream out(hdr);
    out << "verb,wrong_column\nswim,0\n";
  }
  CHECK_THROWS(load_attributes(hdr, schema));
}

TEST_CASE("definition files round-trip") {
  DefinitionCorpus c;
  c.add("swim", {"move", "through", "water"});
  c.add("swim", {"propel", "oneself"});
  c.add("put up", {"build", "or", "erect"});
  std::string path = tmp_path("defs.tsv");
  write_definitions(c, path);
  DefinitionCorpus back = load_definitions(path);
  CHECK(back.total_definitions() == 3);
  CHECK(back.definitions("swim")[1] ==
        std::vector<std::string>{"propel", "oneself"});
  CHECK(back.has("put up"));

  std::string bad = tmp_path("bad_defs.tsv");
  {
    std::ofstream out(bad);
    out << "swim no tab here\n";
  }
  CHECK_THROWS_WITH(load_definitions(bad), ContainsSubstring("verb<TAB>"));
}

TEST_CASE("embedding files round-trip at full precision") {
  EmbeddingTable t;
  t.reserve_dim(3);
  t.add("swim", Vec{0.1, 1.0 / 3.0, -2.5e-17});
  t.add("walk", Vec{1e300, -1.0, 0.0});
  std::string path = tmp_path("emb.txt");
  write_embeddings(t, path);
  EmbeddingTable back = load_embeddings(path);
  CHECK(back.dim == 3);
  CHECK(back.lookup("swim") == t.lookup("swim"));  // %.17g is lossless
  CHECK(back.lookup("walk") == t.lookup("walk"));

  std::string ragged = tmp_path("ragged_emb.txt");
  {
    std::ofstream out(ragged);
    out << "swim 0.5 0.5\nwalk 0.5\n";
  }
  CHECK_THROWS_WITH(load_embeddings(ragged), ContainsSubstring(":2:"));
}

TEST_CASE("model containers round-trip every block type") {
  ModelFile mf;
  mf.kind = "test_kind";
  mf.fingerprint = 0xdeadbeefcafeull;
  mf.f64s.emplace_back("weights", Vec{1.5, -2.25, 1.0 / 3.0});
  mf.strs.emplace_back("words", std::vector<std::string>{"alpha", "beta"});
  mf.u64s.emplace_back("dims", std::vector<std::uint64_t>{7, 9});
  std::string path = tmp_path("model.vamd");
  write_model_file(mf, path);

  ModelFile back = read_model_file(path);
  CHECK(back.kind == "test_kind");
  CHECK(back.fingerprint == mf.fingerprint);
  CHECK(back.f64("weights") == mf.f64s[0].second);
  CHECK(back.str("words") == mf.strs[0].second);
  CHECK(back.u64("dims") == mf.u64s[0].second);
  CHECK(model_kind(path) == "test_kind");
  CHECK_THROWS_WITH(back.f64("nope"), ContainsSubstring("lacks block"));
}

TEST_CASE("models refuse to load against a different schema") {
  AttributeSchema schema = build_schema();
  ZeroShotHead h;
  h.init(schema, 4, 3, true, true);
  std::string path = tmp_path("head.vamd");
  save_zs_head(h, path);
  CHECK_NOTHROW(load_zs_head(path, schema));

  AttributeSchema other = build_schema();
  other.attrs[0].name = "tempo";
  CHECK_THROWS_WITH(load_zs_head(path, other),
                    ContainsSubstring("fingerprint mismatch"));
}

TEST_CASE("zero-shot heads round-trip through disk") {
  AttributeSchema schema = build_schema();
  Prng rng(31);
  ZeroShotHead h;
  h.init(schema, 4, 3, true, true);
  for (Mat& w : h.w_attr)
    for (double& x : w.a) x = rng.uniform(-1, 1);
  for (double& x : h.w_emb.a) x = rng.uniform(-1, 1);

  std::string path = tmp_path("head2.vamd");
  save_zs_head(h, path);
  ZeroShotHead back = load_zs_head(path, schema);

  CandidateSet c;
  c.verbs = {"x", "y"};
  LabelVector l0(24, 0), l1(24, 0);
  l1[0] = 1;
  c.signatures = {binarize(schema, l0), binarize(schema, l1)};
  c.embeddings = {Vec{0.1, 0.2, 0.3}, Vec{-0.1, 0.0, 0.4}};
  Vec g{0.5, -0.5, 0.25, 1.0};
  Vec a = zs_logits(h, c, g, ZsBranch::Joint);
  Vec b = zs_logits(back, c, g, ZsBranch::Joint);
  CHECK(a == b);
}

TEST_CASE("dap, eszl and devise models round-trip through disk") {
  AttributeSchema schema = build_schema();
  Prng rng(33);

  DapModel dap;
  dap.feat_dim = 3;
  dap.w = Mat(40, 3);
  for (double& x : dap.w.a) x = rng.uniform(-1, 1);
  dap.bias = Vec(40);
  for (double& x : dap.bias) x = rng.uniform(-1, 1);
  dap.is_degenerate.assign(40, false);
  dap.is_degenerate[2] = true;
  dap.const_rate.assign(40, 0.0);
  dap.const_rate[2] = 0.75;
  dap.prior_pos.assign(40, 0.5);
  dap.use_prior = true;
  std::string dpath = tmp_path("dap.vamd");
  save_dap_model(dap, schema, dpath);
  DapModel dback = load_dap_model(dpath, schema);
  CHECK(dback.w.a == dap.w.a);
  CHECK(dback.bias == dap.bias);
  CHECK(dback.is_degenerate == dap.is_degenerate);
  CHECK(dback.const_rate == dap.const_rate);
  CHECK(dback.use_prior);

  Mat v(3, 40);
  for (double& x : v.a) x = rng.uniform(-1, 1);
  std::string epath = tmp_path("eszl.vamd");
  save_eszl_model(v, 0.25, 4.0, schema, epath);
  EszlLoaded eback = load_eszl_model(epath, schema);
  CHECK(eback.v.a == v.a);
  CHECK(eback.gamma == 0.25);
  CHECK(eback.lambda == 4.0);

  DeviseModel dev;
  dev.w_emb = Mat(3, 5);
  for (double& x : dev.w_emb.a) x = rng.uniform(-1, 1);
  dev.margin = 0.2;
  std::string vpath = tmp_path("devise.vamd");
  save_devise_model(dev, schema, vpath);
  DeviseModel vback = load_devise_model(vpath, schema);
  CHECK(vback.w_emb.a == dev.w_emb.a);
  CHECK(vback.margin == 0.2);
}

TEST_CASE("synthetic data is deterministic and covers the universe") {
  SynthConfig cfg;
  cfg.classes = 10;
  cfg.per_class = 3;
  cfg.feat_dim = 6;
  cfg.emb_dim = 4;
  cfg.sigma = 0.2;
  cfg.seed = 5;
  cfg.val_classes = 2;
  cfg.test_classes = 3;
  AttributeSchema schema = build_schema();

  SynthData a = synth_generate(cfg, schema);
  SynthData b = synth_generate(cfg, schema);
  CHECK(a.verbs == b.verbs);
  CHECK(a.train_features.features == b.train_features.features);
  CHECK(a.table.vectors.a == b.table.vectors.a);

  CHECK(a.split.train.size() == 5);
  CHECK(a.split.val.size() == 2);
  CHECK(a.split.test.size() == 3);
  CHECK(a.train_features.size() == 15);
  CHECK(a.test_features.size() == 9);

  // all signatures distinct by construction
  auto gold = a.gold_map();
  LookupTable lt = encode_lookup(a.verbs, gold, schema);
  CHECK(find_signature_collisions(lt).empty());

  // definitions exist for every verb
  for (const auto& v : a.verbs) CHECK(a.corpus.has(v));
}

TEST_CASE("noise-free synthetic features collapse to class prototypes") {
  SynthConfig cfg;
  cfg.classes = 4;
  cfg.per_class = 3;
  cfg.feat_dim = 5;
  cfg.emb_dim = 3;
  cfg.sigma = 0.0;
  cfg.seed = 8;
  cfg.test_classes = 1;
  SynthData d = synth_generate(cfg, build_schema());
  for (std::size_t i = 1; i < d.train_features.size(); ++i) {
    if (d.train_features.labels[i] == d.train_features.labels[0])
      CHECK(d.train_features.features[i] == d.train_features.features[0]);
  }
}

TEST_CASE("synthetic generator refuses an oversubscribed signature space") {
  AttributeSchema s;
  s.attrs.push_back({"x", "g", true, {"0", "1"}});
  s.attrs.push_back({"y", "g", true, {"0", "1"}});
  s.validate();
  SynthConfig cfg;
  cfg.classes = 5;  // only 4 distinct signatures exist
  cfg.per_class = 1;
  cfg.feat_dim = 2;
  cfg.emb_dim = 2;
  cfg.test_classes = 1;
  CHECK_THROWS_WITH(synth_generate(cfg, s), ContainsSubstring("signature space"));
}

TEST_CASE("number formatting round-trips doubles exactly") {
  for (double x : {0.1, 1.0 / 3.0, 1e300, 5e-324, -1.25, 0.0}) {
    std::string s = detail::fmt_double(x);
    CHECK(detail::parse_double(s, "t", 1) == x);
  }
}
