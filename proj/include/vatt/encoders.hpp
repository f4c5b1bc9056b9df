#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vatt/ops.hpp"
#include "vatt/prng.hpp"
#include "vatt/tensor.hpp"
#include "vatt/text.hpp"

namespace vatt {

// ---------------------------------------------------------------------------
// word-embedding encoder

// Verb templates ("put up") encode as the mean of their known token vectors.
inline Vec encode_emb(std::string_view verb_template, const EmbeddingTable& table) {
  std::string tmpl(verb_template);
  std::vector<std::string> parts;
  std::string cur;
  for (char c : tmpl) {
    if (c == ' ') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) parts.push_back(cur);
  if (parts.empty()) fail("encode_emb: empty verb template");

  Vec out(table.dim, 0.0);
  std::size_t known = 0;
  for (const auto& p : parts) {
    if (const double* row = table.row_or_null(p)) {
      axpy(1.0, {row, table.dim}, out);
      ++known;
    } else {
      ++table.miss_count;
    }
  }
  if (known == 0)
    fail("encode_emb: no embedding for any token of '" + tmpl + "'");
  for (double& x : out) x /= static_cast<double>(known);
  return out;
}

// ---------------------------------------------------------------------------
// bag-of-words encoders

// Tokens ranked by frequency; ties break toward earlier first occurrence.
inline std::vector<std::string> rank_by_frequency(
    const std::vector<std::string>& stream, std::size_t max_size) {
  std::unordered_map<std::string, std::size_t> count, first_seen;
  std::vector<std::string> order;
  for (const auto& t : stream) {
    auto [it, inserted] = count.try_emplace(t, 0);
    it->second += 1;
    if (inserted) {
      first_seen.emplace(t, order.size());
      order.push_back(t);
    }
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](const std::string& a, const std::string& b) {
                     if (count[a] != count[b]) return count[a] > count[b];
                     return first_seen[a] < first_seen[b];
                   });
  if (order.size() > max_size) order.resize(max_size);
  return order;
}

struct BowVocab {
  std::vector<std::string> words;
  std::unordered_map<std::string, std::size_t> index;

  void set_words(std::vector<std::string> w) {
    words = std::move(w);
    index.clear();
    for (std::size_t i = 0; i < words.size(); ++i) index.emplace(words[i], i);
  }
};

inline BowVocab build_bow_vocab(const DefinitionCorpus& corpus,
                                std::span<const std::string> train_verbs,
                                std::size_t max_size) {
  std::vector<std::string> stream;
  for (const auto& v : train_verbs)
    for (const auto& def : corpus.definitions(v))
      stream.insert(stream.end(), def.begin(), def.end());
  BowVocab vocab;
  vocab.set_words(rank_by_frequency(stream, max_size));
  return vocab;
}

// Set-semantics one-hot: entry i is 1 iff vocab word i occurs in the
// definition. OOV tokens are ignored.
inline Vec encode_bow(std::span<const std::string> tokens, const BowVocab& vocab) {
  Vec out(vocab.words.size(), 0.0);
  for (const auto& t : tokens) {
    auto it = vocab.index.find(t);
    if (it != vocab.index.end()) out[it->second] = 1.0;
  }
  return out;
}

// Mean of token embeddings; absent tokens contribute the zero vector.
inline Vec encode_nbow(std::span<const std::string> tokens,
                       const EmbeddingTable& table) {
  if (tokens.empty()) fail("encode_nbow: empty definition");
  Vec out(table.dim, 0.0);
  for (const auto& t : tokens) {
    Vec e = table.lookup(t);
    axpy(1.0, e, out);
  }
  for (double& x : out) x /= static_cast<double>(tokens.size());
  return out;
}

// ---------------------------------------------------------------------------
// GRU cell
//
// Convention: r = sigma(Wr x + Ur h), z = sigma(Wz x + Uz h),
// hbar = tanh(Wh x + Uh (r.h)), h' = (1-z).h + z.hbar  (no bias terms).

struct GruCell {
  std::size_t in_dim = 0, hid = 0;
  Mat wr, wz, wh;  // hid x in_dim
  Mat ur, uz, uh;  // hid x hid

  void init(std::size_t in, std::size_t h, Prng& rng) {
    in_dim = in;
    hid = h;
    auto randm = [&](std::size_t r, std::size_t c) {
      Mat m(r, c);
      double scale = 1.0 / std::sqrt(static_cast<double>(c));
      for (double& x : m.a) x = rng.uniform(-scale, scale);
      return m;
    };
    wr = randm(h, in);
    wz = randm(h, in);
    wh = randm(h, in);
    ur = randm(h, h);
    uz = randm(h, h);
    uh = randm(h, h);
  }
};

struct GruGrads {
  Mat wr, wz, wh, ur, uz, uh;

  void init(const GruCell& c) {
    wr = Mat(c.hid, c.in_dim);
    wz = Mat(c.hid, c.in_dim);
    wh = Mat(c.hid, c.in_dim);
    ur = Mat(c.hid, c.hid);
    uz = Mat(c.hid, c.hid);
    uh = Mat(c.hid, c.hid);
  }

  void zero() {
    for (Mat* m : {&wr, &wz, &wh, &ur, &uz, &uh}) m->zero();
  }
};

struct GruStep {
  Vec x, h_prev, r, z, hbar, h;
};

struct GruTrace {
  std::vector<GruStep> steps;
};

inline Vec gru_forward(const GruCell& c, std::span<const Vec> xs, GruTrace* trace) {
  Vec h(c.hid, 0.0);
  if (trace) trace->steps.clear();
  for (const Vec& x : xs) {
    Vec ar = matvec(c.wr, x);
    axpy(1.0, matvec(c.ur, h), ar);
    Vec az = matvec(c.wz, x);
    axpy(1.0, matvec(c.uz, h), az);
    Vec r(c.hid), z(c.hid);
    for (std::size_t i = 0; i < c.hid; ++i) {
      r[i] = sigmoid(ar[i]);
      z[i] = sigmoid(az[i]);
    }
    Vec rh(c.hid);
    for (std::size_t i = 0; i < c.hid; ++i) rh[i] = r[i] * h[i];
    Vec ah = matvec(c.wh, x);
    axpy(1.0, matvec(c.uh, rh), ah);
    Vec hbar(c.hid);
    for (std::size_t i = 0; i < c.hid; ++i) hbar[i] = std::tanh(ah[i]);
    Vec hn(c.hid);
    for (std::size_t i = 0; i < c.hid; ++i)
      hn[i] = (1.0 - z[i]) * h[i] + z[i] * hbar[i];
    if (trace) trace->steps.push_back({x, h, r, z, hbar, hn});
    h = std::move(hn);
  }
  return h;
}

// Backpropagates d(loss)/d(h_final) through the unrolled cell. Accumulates
// into `g`; when `dxs` is given it receives d(loss)/d(x_t) per step.
inline void gru_backward(const GruCell& c, const GruTrace& trace, Vec dh,
                         GruGrads& g, std::vector<Vec>* dxs) {
  const std::size_t T = trace.steps.size();
  if (dxs) dxs->assign(T, Vec(c.in_dim, 0.0));
  for (std::size_t t = T; t-- > 0;) {
    const GruStep& st = trace.steps[t];
    Vec dz(c.hid), dhbar(c.hid), dh_prev(c.hid);
    for (std::size_t i = 0; i < c.hid; ++i) {
      dz[i] = dh[i] * (st.hbar[i] - st.h_prev[i]);
      dhbar[i] = dh[i] * st.z[i];
      dh_prev[i] = dh[i] * (1.0 - st.z[i]);
    }
    Vec daz(c.hid), dah(c.hid);
    for (std::size_t i = 0; i < c.hid; ++i) {
      daz[i] = dz[i] * st.z[i] * (1.0 - st.z[i]);
      dah[i] = dhbar[i] * (1.0 - st.hbar[i] * st.hbar[i]);
    }
    Vec rh(c.hid);
    for (std::size_t i = 0; i < c.hid; ++i) rh[i] = st.r[i] * st.h_prev[i];
    add_outer(g.wh, 1.0, dah, st.x);
    add_outer(g.uh, 1.0, dah, rh);
    Vec drh = matvec_t(c.uh, dah);
    Vec dr(c.hid);
    for (std::size_t i = 0; i < c.hid; ++i) {
      dr[i] = drh[i] * st.h_prev[i];
      dh_prev[i] += drh[i] * st.r[i];
    }
    Vec dar(c.hid);
    for (std::size_t i = 0; i < c.hid; ++i) dar[i] = dr[i] * st.r[i] * (1.0 - st.r[i]);
    add_outer(g.wr, 1.0, dar, st.x);
    add_outer(g.ur, 1.0, dar, st.h_prev);
    axpy(1.0, matvec_t(c.ur, dar), dh_prev);
    add_outer(g.wz, 1.0, daz, st.x);
    add_outer(g.uz, 1.0, daz, st.h_prev);
    axpy(1.0, matvec_t(c.uz, daz), dh_prev);
    if (dxs) {
      Vec dx = matvec_t(c.wr, dar);
      axpy(1.0, matvec_t(c.wz, daz), dx);
      axpy(1.0, matvec_t(c.wh, dah), dx);
      (*dxs)[t] = std::move(dx);
    }
    dh = std::move(dh_prev);
  }
}

// ---------------------------------------------------------------------------
// bidirectional GRU encoder

struct GruVocab {
  std::vector<std::string> words;  // index 0 reserved for <unk>
  std::unordered_map<std::string, std::size_t> index;

  void set_words(std::vector<std::string> ranked) {
    words.clear();
    words.push_back("<unk>");
    for (auto& w : ranked) words.push_back(std::move(w));
    index.clear();
    for (std::size_t i = 0; i < words.size(); ++i) index.emplace(words[i], i);
  }

  std::size_t id(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? 0 : it->second;
  }
};

struct BgruParams {
  GruVocab vocab;
  Mat embed;  // vocab x in_dim
  GruCell fwd, bwd;
  std::size_t max_len = 32;

  std::size_t out_dim() const { return fwd.hid + bwd.hid; }

  void init(std::size_t in_dim, std::size_t hid, Prng& rng) {
    embed = Mat(vocab.words.size(), in_dim);
    double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (double& x : embed.a) x = rng.uniform(-scale, scale);
    fwd.init(in_dim, hid, rng);
    bwd.init(in_dim, hid, rng);
  }

  // Copies pretrained vectors into the token embedding rows where available.
  void seed_embeddings(const EmbeddingTable& table) {
    if (table.dim != embed.cols) fail("seed_embeddings: dimension mismatch");
    for (std::size_t i = 1; i < vocab.words.size(); ++i)
      if (const double* row = table.row_or_null(vocab.words[i])) {
        auto dst = embed.row(i);
        std::copy(row, row + embed.cols, dst.begin());
      }
  }
};

struct BgruTrace {
  std::vector<std::size_t> ids;
  GruTrace ftrace, btrace;
};

// Truncates at max_len, maps tokens through the vocabulary (OOV -> <unk>),
// runs both directions, returns fwd_h_T || bwd_h_1 (width 2H).
inline Vec encode_bgru(const BgruParams& p, std::span<const std::string> tokens,
                       BgruTrace* trace) {
  if (tokens.empty()) fail("encode_bgru: empty definition");
  std::size_t T = std::min(tokens.size(), p.max_len);
  std::vector<std::size_t> ids(T);
  for (std::size_t t = 0; t < T; ++t) ids[t] = p.vocab.id(tokens[t]);

  std::vector<Vec> xs(T), rxs(T);
  for (std::size_t t = 0; t < T; ++t) {
    auto row = p.embed.row(ids[t]);
    xs[t] = Vec(row.begin(), row.end());
    rxs[T - 1 - t] = xs[t];
  }
  Vec hf = gru_forward(p.fwd, xs, trace ? &trace->ftrace : nullptr);
  Vec hb = gru_forward(p.bwd, rxs, trace ? &trace->btrace : nullptr);
  if (trace) trace->ids = std::move(ids);
  return concat(hf, hb);
}

struct BgruGrads {
  GruGrads fwd, bwd;
  Mat embed;

  void init(const BgruParams& p) {
    fwd.init(p.fwd);
    bwd.init(p.bwd);
    embed = Mat(p.embed.rows, p.embed.cols);
  }

  void zero() {
    fwd.zero();
    bwd.zero();
    embed.zero();
  }
};

inline void bgru_backward(const BgruParams& p, const BgruTrace& trace,
                          std::span<const double> d_out, BgruGrads& g,
                          bool into_embeddings) {
  if (d_out.size() != p.out_dim()) fail("bgru_backward: gradient width mismatch");
  Vec dhf(d_out.begin(), d_out.begin() + p.fwd.hid);
  Vec dhb(d_out.begin() + p.fwd.hid, d_out.end());
  std::vector<Vec> dxf, dxb;
  gru_backward(p.fwd, trace.ftrace, std::move(dhf), g.fwd,
               into_embeddings ? &dxf : nullptr);
  gru_backward(p.bwd, trace.btrace, std::move(dhb), g.bwd,
               into_embeddings ? &dxb : nullptr);
  if (into_embeddings) {
    const std::size_t T = trace.ids.size();
    for (std::size_t t = 0; t < T; ++t) {
      auto row = g.embed.row(trace.ids[t]);
      axpy(1.0, dxf[t], row);
      axpy(1.0, dxb[T - 1 - t], row);
    }
  }
}

inline GruVocab build_gru_vocab(const DefinitionCorpus& corpus,
                                std::span<const std::string> train_verbs,
                                std::size_t max_size) {
  std::vector<std::string> stream;
  for (const auto& v : train_verbs)
    for (const auto& def : corpus.definitions(v))
      stream.insert(stream.end(), def.begin(), def.end());
  GruVocab vocab;
  vocab.set_words(rank_by_frequency(stream, max_size ? max_size - 1 : 0));
  return vocab;
}

// ---------------------------------------------------------------------------

// Early fusion: concatenation in declared order.
inline Vec fuse(std::span<const Vec> encodings) {
  if (encodings.empty()) fail("fuse: no encodings");
  Vec out;
  for (const Vec& e : encodings) out.insert(out.end(), e.begin(), e.end());
  return out;
}

}  // namespace vatt
