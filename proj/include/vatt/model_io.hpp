#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "vatt/attr_model.hpp"
#include "vatt/dataio.hpp"
#include "vatt/schema.hpp"
#include "vatt/tensor.hpp"
#include "vatt/zeroshot.hpp"

namespace vatt {

// ---------------------------------------------------------------------------
// container: magic "VAMD", u32 version=1, u64 schema fingerprint,
// length-prefixed kind string, u32 block count, then per block a type byte
// (0 = f64 array, 1 = string list, 2 = u64 array), a length-prefixed name,
// and the payload. All integers little-endian.

struct ModelFile {
  std::string kind;
  std::uint64_t fingerprint = 0;
  std::vector<std::pair<std::string, Vec>> f64s;
  std::vector<std::pair<std::string, std::vector<std::string>>> strs;
  std::vector<std::pair<std::string, std::vector<std::uint64_t>>> u64s;

  const Vec& f64(const std::string& name) const {
    for (const auto& [n, v] : f64s)
      if (n == name) return v;
    fail("model file lacks block '" + name + "'");
  }
  const std::vector<std::string>& str(const std::string& name) const {
    for (const auto& [n, v] : strs)
      if (n == name) return v;
    fail("model file lacks block '" + name + "'");
  }
  const std::vector<std::uint64_t>& u64(const std::string& name) const {
    for (const auto& [n, v] : u64s)
      if (n == name) return v;
    fail("model file lacks block '" + name + "'");
  }
};

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  buf.append(b, 4);
}
inline void put_u64(std::string& buf, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  buf.append(b, 8);
}
inline void put_f64(std::string& buf, double v) {
  char b[8];
  std::memcpy(b, &v, 8);
  buf.append(b, 8);
}
inline void put_str(std::string& buf, const std::string& s) {
  put_u32(buf, static_cast<std::uint32_t>(s.size()));
  buf.append(s);
}

struct Reader {
  const std::string& buf;
  std::size_t off = 0;
  const std::string& path;

  void need(std::size_t n) {
    if (off + n > buf.size()) fail("truncated model file '" + path + "'");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, buf.data() + off, 4);
    off += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, buf.data() + off, 8);
    off += 8;
    return v;
  }
  double f64() {
    need(8);
    double v;
    std::memcpy(&v, buf.data() + off, 8);
    off += 8;
    return v;
  }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s = buf.substr(off, n);
    off += n;
    return s;
  }
};

}  // namespace detail

inline void write_model_file(const ModelFile& mf, const std::string& path) {
  std::string buf;
  buf.append("VAMD", 4);
  detail::put_u32(buf, 1);
  detail::put_u64(buf, mf.fingerprint);
  detail::put_str(buf, mf.kind);
  detail::put_u32(buf, static_cast<std::uint32_t>(mf.f64s.size() + mf.strs.size() +
                                                  mf.u64s.size()));
  for (const auto& [name, v] : mf.f64s) {
    buf.push_back(0);
    detail::put_str(buf, name);
    detail::put_u64(buf, v.size());
    for (double x : v) detail::put_f64(buf, x);
  }
  for (const auto& [name, v] : mf.strs) {
    buf.push_back(1);
    detail::put_str(buf, name);
    detail::put_u64(buf, v.size());
    for (const auto& s : v) detail::put_str(buf, s);
  }
  for (const auto& [name, v] : mf.u64s) {
    buf.push_back(2);
    detail::put_str(buf, name);
    detail::put_u64(buf, v.size());
    for (std::uint64_t x : v) detail::put_u64(buf, x);
  }
  detail::write_file(path, buf);
}

inline ModelFile read_model_file(const std::string& path) {
  std::string buf = detail::read_file(path);
  if (buf.size() < 8 || buf.compare(0, 4, "VAMD") != 0)
    fail("bad magic in model file '" + path + "'");
  detail::Reader r{buf, 4, path};
  std::uint32_t version = r.u32();
  if (version != 1) fail("unsupported model file version " + std::to_string(version));
  ModelFile mf;
  mf.fingerprint = r.u64();
  mf.kind = r.str();
  std::uint32_t n_blocks = r.u32();
  for (std::uint32_t b = 0; b < n_blocks; ++b) {
    r.need(1);
    unsigned char type = static_cast<unsigned char>(buf[r.off]);
    r.off += 1;
    std::string name = r.str();
    std::uint64_t count = r.u64();
    if (type == 0) {
      Vec v(count);
      for (std::uint64_t i = 0; i < count; ++i) v[i] = r.f64();
      mf.f64s.emplace_back(std::move(name), std::move(v));
    } else if (type == 1) {
      std::vector<std::string> v;
      for (std::uint64_t i = 0; i < count; ++i) v.push_back(r.str());
      mf.strs.emplace_back(std::move(name), std::move(v));
    } else if (type == 2) {
      std::vector<std::uint64_t> v(count);
      for (std::uint64_t i = 0; i < count; ++i) v[i] = r.u64();
      mf.u64s.emplace_back(std::move(name), std::move(v));
    } else {
      fail("unknown block type in model file '" + path + "'");
    }
  }
  if (r.off != buf.size()) fail("trailing bytes in model file '" + path + "'");
  return mf;
}

inline void check_fingerprint(const ModelFile& mf, const AttributeSchema& schema,
                              const std::string& path) {
  if (mf.fingerprint != schema_fingerprint(schema))
    fail("schema fingerprint mismatch for '" + path +
         "': the model was built against a different attribute schema");
}

inline std::string model_kind(const std::string& path) {
  return read_model_file(path).kind;
}

// ---------------------------------------------------------------------------
// typed adapters

namespace detail {

inline void put_gru_cell(ModelFile& mf, const std::string& tag, const GruCell& c) {
  mf.u64s.push_back({tag + "/dims", {c.in_dim, c.hid}});
  mf.f64s.push_back({tag + "/wr", c.wr.a});
  mf.f64s.push_back({tag + "/wz", c.wz.a});
  mf.f64s.push_back({tag + "/wh", c.wh.a});
  mf.f64s.push_back({tag + "/ur", c.ur.a});
  mf.f64s.push_back({tag + "/uz", c.uz.a});
  mf.f64s.push_back({tag + "/uh", c.uh.a});
}

inline GruCell get_gru_cell(const ModelFile& mf, const std::string& tag) {
  auto dims = mf.u64(tag + "/dims");
  GruCell c;
  c.in_dim = dims[0];
  c.hid = dims[1];
  auto take = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    const Vec& v = mf.f64(name);
    if (v.size() != rows * cols) fail("block '" + name + "' has wrong size");
    Mat m(rows, cols);
    m.a = v;
    return m;
  };
  c.wr = take(tag + "/wr", c.hid, c.in_dim);
  c.wz = take(tag + "/wz", c.hid, c.in_dim);
  c.wh = take(tag + "/wh", c.hid, c.in_dim);
  c.ur = take(tag + "/ur", c.hid, c.hid);
  c.uz = take(tag + "/uz", c.hid, c.hid);
  c.uh = take(tag + "/uh", c.hid, c.hid);
  return c;
}

}  // namespace detail

inline void save_attr_model(const AttrModel& m, const std::string& path) {
  ModelFile mf;
  mf.kind = "attr";
  mf.fingerprint = schema_fingerprint(m.schema);
  mf.strs.push_back({"encoder", {encoder_kind_name(m.kind)}});
  mf.u64s.push_back({"in_dim", {m.in_dim}});
  for (std::size_t k = 0; k < m.heads.size(); ++k)
    mf.f64s.push_back({"head" + std::to_string(k), m.heads[k].a});
  if (kind_uses_bow(m.kind)) mf.strs.push_back({"bow_words", m.bow.words});
  if (kind_uses_bgru(m.kind)) {
    mf.strs.push_back({"gru_words", m.bgru.vocab.words});
    mf.u64s.push_back({"gru_embed_dims",
                       {m.bgru.embed.rows, m.bgru.embed.cols, m.bgru.max_len}});
    mf.f64s.push_back({"gru_embed", m.bgru.embed.a});
    detail::put_gru_cell(mf, "gru_fwd", m.bgru.fwd);
    detail::put_gru_cell(mf, "gru_bwd", m.bgru.bwd);
  }
  write_model_file(mf, path);
}

inline AttrModel load_attr_model(const std::string& path,
                                 const AttributeSchema& schema) {
  ModelFile mf = read_model_file(path);
  if (mf.kind != "attr") fail("'" + path + "' is not an attribute model (kind '" +
                              mf.kind + "')");
  check_fingerprint(mf, schema, path);
  AttrModel m;
  m.kind = parse_encoder_kind(mf.str("encoder")[0]);
  m.schema = schema;
  m.in_dim = mf.u64("in_dim")[0];
  m.init_heads();
  for (std::size_t k = 0; k < m.heads.size(); ++k) {
    const Vec& v = mf.f64("head" + std::to_string(k));
    if (v.size() != m.heads[k].a.size()) fail("head block size mismatch");
    m.heads[k].a = v;
  }
  if (kind_uses_bow(m.kind)) {
    m.bow.set_words(mf.str("bow_words"));
  }
  if (kind_uses_bgru(m.kind)) {
    auto words = mf.str("gru_words");
    if (words.empty() || words[0] != "<unk>") fail("gru vocabulary lacks <unk>");
    m.bgru.vocab.set_words({words.begin() + 1, words.end()});
    auto dims = mf.u64("gru_embed_dims");
    m.bgru.embed = Mat(dims[0], dims[1]);
    const Vec& e = mf.f64("gru_embed");
    if (e.size() != m.bgru.embed.a.size()) fail("gru embedding block size mismatch");
    m.bgru.embed.a = e;
    m.bgru.max_len = dims[2];
    m.bgru.fwd = detail::get_gru_cell(mf, "gru_fwd");
    m.bgru.bwd = detail::get_gru_cell(mf, "gru_bwd");
  }
  return m;
}

// Pretrained definition encoder (no heads, no schema dependence).
inline void save_pretrained_encoder(const BgruParams& p, const std::string& path) {
  ModelFile mf;
  mf.kind = "bgru_encoder";
  mf.fingerprint = 0;
  mf.strs.push_back({"gru_words", p.vocab.words});
  mf.u64s.push_back({"gru_embed_dims", {p.embed.rows, p.embed.cols, p.max_len}});
  mf.f64s.push_back({"gru_embed", p.embed.a});
  detail::put_gru_cell(mf, "gru_fwd", p.fwd);
  detail::put_gru_cell(mf, "gru_bwd", p.bwd);
  write_model_file(mf, path);
}

inline BgruParams load_pretrained_encoder(const std::string& path) {
  ModelFile mf = read_model_file(path);
  if (mf.kind != "bgru_encoder")
    fail("'" + path + "' is not a pretrained definition encoder");
  BgruParams p;
  auto words = mf.str("gru_words");
  if (words.empty() || words[0] != "<unk>") fail("gru vocabulary lacks <unk>");
  p.vocab.set_words({words.begin() + 1, words.end()});
  auto dims = mf.u64("gru_embed_dims");
  p.embed = Mat(dims[0], dims[1]);
  const Vec& e = mf.f64("gru_embed");
  if (e.size() != p.embed.a.size()) fail("gru embedding block size mismatch");
  p.embed.a = e;
  p.max_len = dims[2];
  p.fwd = detail::get_gru_cell(mf, "gru_fwd");
  p.bwd = detail::get_gru_cell(mf, "gru_bwd");
  return p;
}

inline void save_zs_head(const ZeroShotHead& h, const std::string& path) {
  ModelFile mf;
  mf.kind = "zs_head";
  mf.fingerprint = schema_fingerprint(h.schema);
  mf.u64s.push_back({"dims", {h.feat_dim, h.emb_dim,
                              static_cast<std::uint64_t>(h.has_attr),
                              static_cast<std::uint64_t>(h.has_emb)}});
  for (std::size_t k = 0; k < h.w_attr.size(); ++k)
    mf.f64s.push_back({"w_attr" + std::to_string(k), h.w_attr[k].a});
  if (h.has_emb) mf.f64s.push_back({"w_emb", h.w_emb.a});
  write_model_file(mf, path);
}

inline ZeroShotHead load_zs_head(const std::string& path,
                                 const AttributeSchema& schema) {
  ModelFile mf = read_model_file(path);
  if (mf.kind != "zs_head") fail("'" + path + "' is not a zero-shot head");
  check_fingerprint(mf, schema, path);
  auto dims = mf.u64("dims");
  ZeroShotHead h;
  h.init(schema, dims[0], dims[1], dims[2] != 0, dims[3] != 0);
  for (std::size_t k = 0; k < h.w_attr.size(); ++k) {
    const Vec& v = mf.f64("w_attr" + std::to_string(k));
    if (v.size() != h.w_attr[k].a.size()) fail("w_attr block size mismatch");
    h.w_attr[k].a = v;
  }
  if (h.has_emb) {
    const Vec& v = mf.f64("w_emb");
    if (v.size() != h.w_emb.a.size()) fail("w_emb block size mismatch");
    h.w_emb.a = v;
  }
  return h;
}

inline void save_dap_model(const DapModel& m, const AttributeSchema& schema,
                           const std::string& path) {
  ModelFile mf;
  mf.kind = "dap";
  mf.fingerprint = schema_fingerprint(schema);
  mf.u64s.push_back({"dims", {m.feat_dim, m.n_attr(),
                              static_cast<std::uint64_t>(m.use_prior)}});
  mf.f64s.push_back({"w", m.w.a});
  mf.f64s.push_back({"bias", m.bias});
  Vec deg(m.is_degenerate.begin(), m.is_degenerate.end());
  mf.f64s.push_back({"degenerate", deg});
  mf.f64s.push_back({"const_rate", m.const_rate});
  mf.f64s.push_back({"prior_pos", m.prior_pos});
  write_model_file(mf, path);
}

inline DapModel load_dap_model(const std::string& path,
                               const AttributeSchema& schema) {
  ModelFile mf = read_model_file(path);
  if (mf.kind != "dap") fail("'" + path + "' is not a DAP model");
  check_fingerprint(mf, schema, path);
  auto dims = mf.u64("dims");
  DapModel m;
  m.feat_dim = dims[0];
  std::size_t n_attr = dims[1];
  m.use_prior = dims[2] != 0;
  m.w = Mat(n_attr, m.feat_dim);
  const Vec& w = mf.f64("w");
  if (w.size() != m.w.a.size()) fail("dap weight block size mismatch");
  m.w.a = w;
  m.bias = mf.f64("bias");
  const Vec& deg = mf.f64("degenerate");
  m.is_degenerate.assign(deg.size(), 0);
  for (std::size_t i = 0; i < deg.size(); ++i)
    m.is_degenerate[i] = deg[i] != 0.0 ? 1 : 0;
  m.const_rate = mf.f64("const_rate");
  m.prior_pos = mf.f64("prior_pos");
  return m;
}

inline void save_eszl_model(const Mat& v, double gamma, double lambda,
                            const AttributeSchema& schema,
                            const std::string& path) {
  ModelFile mf;
  mf.kind = "eszl";
  mf.fingerprint = schema_fingerprint(schema);
  mf.u64s.push_back({"dims", {v.rows, v.cols}});
  mf.f64s.push_back({"v", v.a});
  mf.f64s.push_back({"ridge", {gamma, lambda}});
  write_model_file(mf, path);
}

struct EszlLoaded {
  Mat v;
  double gamma = 0.0, lambda = 0.0;
};

inline EszlLoaded load_eszl_model(const std::string& path,
                                  const AttributeSchema& schema) {
  ModelFile mf = read_model_file(path);
  if (mf.kind != "eszl") fail("'" + path + "' is not a closed-form bilinear model");
  check_fingerprint(mf, schema, path);
  auto dims = mf.u64("dims");
  EszlLoaded out;
  out.v = Mat(dims[0], dims[1]);
  const Vec& v = mf.f64("v");
  if (v.size() != out.v.a.size()) fail("bilinear map block size mismatch");
  out.v.a = v;
  const Vec& ridge = mf.f64("ridge");
  out.gamma = ridge[0];
  out.lambda = ridge[1];
  return out;
}

inline void save_devise_model(const DeviseModel& m, const AttributeSchema& schema,
                              const std::string& path) {
  ModelFile mf;
  mf.kind = "devise";
  mf.fingerprint = schema_fingerprint(schema);
  mf.u64s.push_back({"dims", {m.w_emb.rows, m.w_emb.cols}});
  mf.f64s.push_back({"w_emb", m.w_emb.a});
  mf.f64s.push_back({"margin", {m.margin}});
  write_model_file(mf, path);
}

inline DeviseModel load_devise_model(const std::string& path,
                                     const AttributeSchema& schema) {
  ModelFile mf = read_model_file(path);
  if (mf.kind != "devise") fail("'" + path + "' is not a margin-projection model");
  check_fingerprint(mf, schema, path);
  auto dims = mf.u64("dims");
  DeviseModel m;
  m.w_emb = Mat(dims[0], dims[1]);
  const Vec& v = mf.f64("w_emb");
  if (v.size() != m.w_emb.a.size()) fail("projection block size mismatch");
  m.w_emb.a = v;
  m.margin = mf.f64("margin")[0];
  return m;
}

}  // namespace vatt
