#pragma once
#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fatiguenet/ops.hpp"
#include "json.hpp"

namespace fatiguenet::nn {

enum class Variant { IADAN, IDAN, IAN, ADAN };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::IADAN: return "IADAN";
    case Variant::IDAN: return "IDAN";
    case Variant::IAN: return "IAN";
    case Variant::ADAN: return "ADAN";
  }
  return "?";
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "IADAN") return Variant::IADAN;
  if (s == "IDAN") return Variant::IDAN;
  if (s == "IAN") return Variant::IAN;
  if (s == "ADAN") return Variant::ADAN;
  fail(ErrorKind::InvalidConfig, "unknown model variant '" + s + "'");
}

inline double lambda_schedule(double p, double gamma = 5.0, double k = 0.2) {
  if (!(gamma > 0) || !(k > 0)) fail(ErrorKind::InvalidSpec, "schedule needs gamma,k > 0");
  if (p < 0 || p > 1) fail(ErrorKind::InvalidSpec, "schedule progress outside [0,1]");
  return k * (2.0 / (1.0 + std::exp(-gamma * p)) - 1.0);
}

struct LossWeights {
  double alpha = 0.5;
  double beta = 0.8;
  double tau = 0.05;
};

// ---------------------------------------------------------------------------

template <class T>
struct InceptionBlock {
  Conv2d<T> b1c;
  BatchNorm2d<T> b1n;
  ReLU<T> b1r;
  Conv2d<T> b2c1, b2c2;
  BatchNorm2d<T> b2n1, b2n2;
  ReLU<T> b2r1, b2r2;
  Conv2d<T> b3c1, b3c2;
  BatchNorm2d<T> b3n1, b3n2;
  ReLU<T> b3r1, b3r2;
  MaxPool2d<T> b4p;
  Conv2d<T> b4c;
  BatchNorm2d<T> b4n;
  ReLU<T> b4r;
  std::array<std::vector<size_t>, 4> branch_shapes_;

  explicit InceptionBlock(const std::string& nm)
      : b1c(nm + ".b1c", 64, 8, 1),
        b1n(nm + ".b1n", 8),
        b2c1(nm + ".b2c1", 64, 16, 1),
        b2c2(nm + ".b2c2", 16, 16, 3, 1, 1, 1),
        b2n1(nm + ".b2n1", 16),
        b2n2(nm + ".b2n2", 16),
        b3c1(nm + ".b3c1", 64, 16, 1),
        b3c2(nm + ".b3c2", 16, 32, 5, 1, 1, 2),
        b3n1(nm + ".b3n1", 16),
        b3n2(nm + ".b3n2", 32),
        b4p(3, 1, 1),
        b4c(nm + ".b4c", 64, 8, 1),
        b4n(nm + ".b4n", 8) {}

  void init(Rng& rng) {
    b1c.init(rng);
    b2c1.init(rng);
    b2c2.init(rng);
    b3c1.init(rng);
    b3c2.init(rng);
    b4c.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> y1 = b1r.forward(b1n.forward(b1c.forward(x), mode));
    Tensor<T> y2 = b2r1.forward(b2n1.forward(b2c1.forward(x), mode));
    y2 = b2r2.forward(b2n2.forward(b2c2.forward(y2), mode));
    Tensor<T> y3 = b3r1.forward(b3n1.forward(b3c1.forward(x), mode));
    y3 = b3r2.forward(b3n2.forward(b3c2.forward(y3), mode));
    Tensor<T> y4 = b4r.forward(b4n.forward(b4c.forward(b4p.forward(x)), mode));
    branch_shapes_ = {y1.shape, y2.shape, y3.shape, y4.shape};
    size_t n = x.shape[0], h = x.shape[2], w = x.shape[3];
    size_t hw = h * w;
    Tensor<T> y({n, 64, h, w});
    const Tensor<T>* parts[4] = {&y1, &y2, &y3, &y4};
    for (size_t ni = 0; ni < n; ++ni) {
      size_t co = 0;
      for (auto* part : parts) {
        size_t pc = part->shape[1];
        std::copy(part->v.begin() + ni * pc * hw,
                  part->v.begin() + (ni + 1) * pc * hw,
                  y.v.begin() + (ni * 64 + co) * hw);
        co += pc;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    size_t n = dy.shape[0], hw = dy.shape[2] * dy.shape[3];
    std::array<Tensor<T>, 4> dparts;
    for (int i = 0; i < 4; ++i) dparts[i] = Tensor<T>(branch_shapes_[i]);
    for (size_t ni = 0; ni < n; ++ni) {
      size_t co = 0;
      for (int i = 0; i < 4; ++i) {
        size_t pc = dparts[i].shape[1];
        std::copy(dy.v.begin() + (ni * 64 + co) * hw,
                  dy.v.begin() + (ni * 64 + co + pc) * hw,
                  dparts[i].v.begin() + ni * pc * hw);
        co += pc;
      }
    }
    Tensor<T> dx1 = b1c.backward(b1n.backward(b1r.backward(dparts[0])));
    Tensor<T> d2 = b2c2.backward(b2n2.backward(b2r2.backward(dparts[1])));
    Tensor<T> dx2 = b2c1.backward(b2n1.backward(b2r1.backward(d2)));
    Tensor<T> d3 = b3c2.backward(b3n2.backward(b3r2.backward(dparts[2])));
    Tensor<T> dx3 = b3c1.backward(b3n1.backward(b3r1.backward(d3)));
    Tensor<T> d4 = b4c.backward(b4n.backward(b4r.backward(dparts[3])));
    Tensor<T> dx4 = b4p.backward(d4);
    Tensor<T> dx(dx1.shape);
    for (size_t i = 0; i < dx.size(); ++i)
      dx.v[i] = dx1.v[i] + dx2.v[i] + dx3.v[i] + dx4.v[i];
    return dx;
  }

  void collect(std::vector<Param<T>*>& ps) {
    b1c.collect(ps);
    b1n.collect(ps);
    b2c1.collect(ps);
    b2n1.collect(ps);
    b2c2.collect(ps);
    b2n2.collect(ps);
    b3c1.collect(ps);
    b3n1.collect(ps);
    b3c2.collect(ps);
    b3n2.collect(ps);
    b4c.collect(ps);
    b4n.collect(ps);
  }

  void collect_bn(std::vector<BatchNorm2d<T>*>& bs) {
    for (auto* b : {&b1n, &b2n1, &b2n2, &b3n1, &b3n2, &b4n}) bs.push_back(b);
  }
};

// ---------------------------------------------------------------------------

template <class T>
struct AttentionBlock {
  ChannelAttention<T> cab;
  SpatialAttention<T> sab;

  explicit AttentionBlock(const std::string& nm)
      : cab(nm + ".cab", 64, 8), sab(nm + ".sab", 7) {}

  void init(Rng& rng) {
    cab.init(rng);
    sab.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x) { return sab.forward(cab.forward(x)); }

  Tensor<T> backward(const Tensor<T>& dy) {
    return cab.backward(sab.backward(dy));
  }

  void collect(std::vector<Param<T>*>& ps) {
    cab.collect(ps);
    sab.collect(ps);
  }
};

// x + block(attention(x)), with the pieces switchable for ablation variants.
template <class T>
struct ResidualUnit {
  AttentionBlock<T> att;
  InceptionBlock<T> inc;
  Conv2d<T> plain_c;
  BatchNorm2d<T> plain_n;
  ReLU<T> plain_r;
  bool use_attention = true;
  bool use_inception = true;

  explicit ResidualUnit(const std::string& nm)
      : att(nm), inc(nm), plain_c(nm + ".plain", 64, 64, 3, 1, 1, 1),
        plain_n(nm + ".plain_n", 64) {}

  void init(Rng& rng) {
    att.init(rng);
    inc.init(rng);
    plain_c.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> h = use_attention ? att.forward(x) : x;
    Tensor<T> b = use_inception
                      ? inc.forward(h, mode)
                      : plain_r.forward(plain_n.forward(plain_c.forward(h), mode));
    Tensor<T> y(x.shape);
    for (size_t i = 0; i < y.size(); ++i) y.v[i] = x.v[i] + b.v[i];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dh = use_inception
                       ? inc.backward(dy)
                       : plain_c.backward(plain_n.backward(plain_r.backward(dy)));
    if (use_attention) dh = att.backward(dh);
    Tensor<T> dx(dy.shape);
    for (size_t i = 0; i < dx.size(); ++i) dx.v[i] = dy.v[i] + dh.v[i];
    return dx;
  }

  void collect(std::vector<Param<T>*>& ps) {
    att.collect(ps);
    inc.collect(ps);
    plain_c.collect(ps);
    plain_n.collect(ps);
  }

  void collect_bn(std::vector<BatchNorm2d<T>*>& bs) {
    inc.collect_bn(bs);
    bs.push_back(&plain_n);
  }
};

// ---------------------------------------------------------------------------

template <class T>
struct ModelOutput {
  Tensor<T> embedding;       // (n,128)
  Tensor<T> embedding_norm;  // unit-L2 rows
  Tensor<T> fatigue_logits;  // (n,3)
  Tensor<T> domain_logits;   // (n,n_domains); empty for IAN
};

using ShapeTrace = std::vector<std::pair<std::string, std::vector<size_t>>>;

template <class T>
struct Iadan {
  Variant variant;
  int n_domains;

  Conv2d<T> conv1;
  BatchNorm2d<T> bn1;
  ReLU<T> r1;
  MaxPool2d<T> pool1;
  Conv2d<T> conv2;
  BatchNorm2d<T> bn2;
  ReLU<T> r2;
  MaxPool2d<T> pool2;
  std::vector<ResidualUnit<T>> units;
  GlobalMaxPool<T> gmp;
  Linear<T> fc;
  ReLU<T> fcr;
  Linear<T> fat1;
  ReLU<T> fatr;
  Dropout<T> fat_drop;
  Linear<T> fat2;
  Grl<T> grl;
  Linear<T> dom1;
  ReLU<T> domr;
  Dropout<T> dom_drop;
  Linear<T> dom2;

  Iadan(Variant v, int n_domains_)
      : variant(v),
        n_domains(n_domains_),
        conv1("conv1", 6, 32, 7, 2, 1, 6),
        bn1("bn1", 32),
        pool1(2, 2),
        conv2("conv2", 32, 64, 5, 2, 1, 4),
        bn2("bn2", 64),
        pool2(2, 2),
        fc("fc", 64, 128),
        fat1("fat1", 128, 64),
        fat_drop(0.5),
        fat2("fat2", 64, 3),
        dom1("dom1", 128, 64),
        dom_drop(0.5),
        dom2("dom2", 64, std::max(1, n_domains_)) {
    if (n_domains_ < 1 && v != Variant::IAN)
      fail(ErrorKind::InvalidConfig, "model needs n_domains >= 1");
    conv1.need_input_grad = false;
    units.reserve(3);
    for (int i = 0; i < 3; ++i) units.emplace_back("u" + std::to_string(i));
    bool att = v != Variant::IDAN;
    bool inc = v != Variant::ADAN;
    for (auto& u : units) {
      u.use_attention = att;
      u.use_inception = inc;
    }
  }

  void init(Rng& rng) {
    conv1.init(rng);
    conv2.init(rng);
    for (auto& u : units) u.init(rng);
    fc.init(rng);
    fat1.init(rng);
    fat2.init(rng);
    dom1.init(rng);
    dom2.init(rng);
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> ps;
    conv1.collect(ps);
    bn1.collect(ps);
    conv2.collect(ps);
    bn2.collect(ps);
    for (auto& u : units) u.collect(ps);
    fc.collect(ps);
    fat1.collect(ps);
    fat2.collect(ps);
    dom1.collect(ps);
    dom2.collect(ps);
    return ps;
  }

  std::vector<BatchNorm2d<T>*> batchnorms() {
    std::vector<BatchNorm2d<T>*> bs{&bn1, &bn2};
    for (auto& u : units) u.collect_bn(bs);
    return bs;
  }

  void zero_grad() {
    for (auto* p : params()) p->t.zero_grad();
  }

  // pin every max selection to its cached winner so the loss is smooth for
  // finite-difference probes; training never turns this on
  void freeze_argmax(bool on) {
    pool1.frozen = on;
    pool2.frozen = on;
    gmp.frozen = on;
    for (auto& u : units) {
      u.inc.b4p.frozen = on;
      u.att.cab.frozen = on;
      u.att.sab.frozen = on;
    }
  }

  ModelOutput<T> forward(const Tensor<T>& x, Mode mode, Rng* rng,
                         double lambda, ShapeTrace* trace = nullptr) {
    if (x.shape.size() != 4 || x.shape[1] != 6)
      fail(ErrorKind::Shape, "model input must be (n,6,H,W), got " + shape_str(x.shape));
    auto tr = [&](const char* nm, const Tensor<T>& t) {
      if (trace) trace->emplace_back(nm, t.shape);
    };
    tr("input", x);
    Tensor<T> h = r1.forward(bn1.forward(conv1.forward(x), mode));
    tr("conv1", h);
    h = pool1.forward(h);
    tr("pool1", h);
    h = r2.forward(bn2.forward(conv2.forward(h), mode));
    tr("conv2", h);
    h = pool2.forward(h);
    tr("pool2", h);
    for (size_t i = 0; i < units.size(); ++i) {
      h = units[i].forward(h, mode);
      tr(("unit" + std::to_string(i)).c_str(), h);
    }
    h = gmp.forward(h);
    tr("gmp", h);
    ModelOutput<T> out;
    out.embedding = fcr.forward(fc.forward(h));
    tr("fc", out.embedding);
    size_t n = out.embedding.shape[0];
    out.embedding_norm = Tensor<T>({n, 128});
    for (size_t i = 0; i < n; ++i) {
      double s = 0;
      const T* p = out.embedding.v.data() + i * 128;
      for (int j = 0; j < 128; ++j) s += double(p[j]) * double(p[j]);
      T nv = T(std::sqrt(s));
      if (nv > T(0))
        for (int j = 0; j < 128; ++j) out.embedding_norm.v[i * 128 + j] = p[j] / nv;
    }
    Tensor<T> f = fat_drop.forward(fatr.forward(fat1.forward(out.embedding)), mode, rng);
    tr("fat1", f);
    out.fatigue_logits = fat2.forward(f);
    tr("fat2", out.fatigue_logits);
    if (variant != Variant::IAN) {
      grl.lambda = lambda;
      Tensor<T> d = grl.forward(out.embedding);
      d = dom_drop.forward(domr.forward(dom1.forward(d)), mode, rng);
      tr("dom1", d);
      out.domain_logits = dom2.forward(d);
      tr("dom2", out.domain_logits);
    }
    return out;
  }

  // d_fat: (n,3); d_dom: (n,n_domains) or empty; d_emb: (n,128) or empty.
  void backward(const Tensor<T>& d_fat, const Tensor<T>& d_dom,
                const Tensor<T>& d_emb) {
    size_t n = d_fat.shape[0];
    Tensor<T> de({n, 128});
    if (d_emb.size()) {
      if (!d_emb.same_shape(de)) fail(ErrorKind::Shape, "embedding grad shape");
      de = d_emb;
    }
    {
      Tensor<T> g = fat1.backward(fatr.backward(fat_drop.backward(fat2.backward(d_fat))));
      for (size_t i = 0; i < de.size(); ++i) de.v[i] += g.v[i];
    }
    if (d_dom.size()) {
      if (variant == Variant::IAN)
        fail(ErrorKind::InvalidConfig, "domain gradient on a model without a domain head");
      Tensor<T> g = dom1.backward(domr.backward(dom_drop.backward(dom2.backward(d_dom))));
      g = grl.backward(g);
      for (size_t i = 0; i < de.size(); ++i) de.v[i] += g.v[i];
    }
    Tensor<T> dh = fc.backward(fcr.backward(de));
    dh = gmp.backward(dh);
    for (size_t i = units.size(); i-- > 0;) dh = units[i].backward(dh);
    dh = pool2.backward(dh);
    dh = conv2.backward(bn2.backward(r2.backward(dh)));
    dh = pool1.backward(dh);
    conv1.backward(bn1.backward(r1.backward(dh)));
  }
};

// ---------------------------------------------------------------------------

struct LossParts {
  double fatigue = 0, supcon = 0, domain = 0, total = 0;
};

// Joint objective; backward hands the model the three upstream gradients.
template <class T>
struct JointLoss {
  SoftmaxCrossEntropy<T> fat_ce, dom_ce;
  SupConLoss<T> sc;
  LossWeights w;
  bool used_sc = false, used_dom = false;
  size_t batch_ = 0;

  explicit JointLoss(LossWeights w_) : sc(w_.tau), w(w_) {}

  LossParts forward(const ModelOutput<T>& out, const std::vector<int>& fat_labels,
                    const std::vector<int>& dom_labels, bool with_domain,
                    bool with_sc) {
    LossParts parts;
    batch_ = out.fatigue_logits.shape[0];
    parts.fatigue = double(fat_ce.forward(out.fatigue_logits, fat_labels));
    used_sc = with_sc && w.alpha != 0;
    used_dom = with_domain && w.beta != 0 && out.domain_logits.size() > 0;
    if (used_sc) parts.supcon = double(sc.forward(out.embedding, fat_labels));
    if (used_dom) parts.domain = double(dom_ce.forward(out.domain_logits, dom_labels));
    parts.total = parts.fatigue + w.alpha * parts.supcon + w.beta * parts.domain;
    return parts;
  }

  void backward(Iadan<T>& model) {
    Tensor<T> d_fat = fat_ce.backward(T(1));
    Tensor<T> d_dom, d_emb;
    if (used_dom) d_dom = dom_ce.backward(T(w.beta));
    if (used_sc) d_emb = sc.backward(T(w.alpha));
    model.backward(d_fat, d_dom, d_emb);
  }
};

// ---------------------------------------------------------------------------
// Checkpoint: one file — magic, manifest length, JSON manifest, then packed
// little-endian f32 blobs. Round-trips bit-exactly when T = float.

namespace detail {
inline constexpr char kCkptMagic[8] = {'F', 'N', 'C', 'K', 'P', 'T', '1', '\n'};
}

template <class T>
void save_checkpoint(Iadan<T>& model, const std::string& path) {
  nlohmann::json manifest;
  manifest["variant"] = variant_name(model.variant);
  manifest["n_domains"] = model.n_domains;
  std::vector<float> blob;
  auto put = [&](const std::string& name, const std::vector<size_t>& shape,
                 const auto& vals) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = shape;
    e["offset"] = blob.size() * sizeof(float);
    for (auto v : vals) blob.push_back(float(v));
    manifest["params"].push_back(e);
  };
  for (auto* p : model.params()) put(p->name, p->t.shape, p->t.v);
  auto bns = model.batchnorms();
  for (size_t i = 0; i < bns.size(); ++i) {
    put(bns[i]->gamma.name + ".running_mean", {bns[i]->running_mean.size()},
        bns[i]->running_mean);
    put(bns[i]->gamma.name + ".running_var", {bns[i]->running_var.size()},
        bns[i]->running_var);
  }
  std::string mtxt = manifest.dump();
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) fail(ErrorKind::Io, "cannot write " + tmp);
    f.write(detail::kCkptMagic, 8);
    uint64_t mlen = mtxt.size();
    f.write(reinterpret_cast<const char*>(&mlen), 8);
    f.write(mtxt.data(), std::streamsize(mtxt.size()));
    f.write(reinterpret_cast<const char*>(blob.data()),
            std::streamsize(blob.size() * sizeof(float)));
    if (!f) fail(ErrorKind::Io, "short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    fail(ErrorKind::Io, "cannot move " + tmp + " into place");
}

template <class T>
void load_checkpoint(Iadan<T>& model, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
    fail(ErrorKind::Io, path + " is not a checkpoint");
  uint64_t mlen = 0;
  f.read(reinterpret_cast<char*>(&mlen), 8);
  std::string mtxt(mlen, '\0');
  f.read(mtxt.data(), std::streamsize(mlen));
  if (!f) fail(ErrorKind::Io, "truncated manifest in " + path);
  nlohmann::json manifest = nlohmann::json::parse(mtxt, nullptr, false);
  if (manifest.is_discarded()) fail(ErrorKind::Io, "bad manifest in " + path);
  if (manifest["variant"] != variant_name(model.variant))
    fail(ErrorKind::InvalidConfig,
         "checkpoint variant " + manifest["variant"].get<std::string>() +
             " does not match model " + variant_name(model.variant));
  if (manifest["n_domains"].get<int>() != model.n_domains)
    fail(ErrorKind::InvalidConfig, "checkpoint n_domains mismatch");
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)),
                          std::istreambuf_iterator<char>());
  std::vector<float> blob(bytes.size() / sizeof(float), 0.f);
  std::memcpy(blob.data(), bytes.data(), blob.size() * sizeof(float));
  std::unordered_map<std::string, std::pair<size_t, size_t>> index;  // offset,count
  for (auto& e : manifest["params"]) {
    size_t count = 1;
    for (auto d : e["shape"].get<std::vector<size_t>>()) count *= d;
    index[e["name"].get<std::string>()] = {e["offset"].get<size_t>() / sizeof(float), count};
  }
  auto take = [&](const std::string& name, auto& dst) {
    auto it = index.find(name);
    if (it == index.end()) fail(ErrorKind::Io, "checkpoint missing " + name);
    auto [off, count] = it->second;
    if (count != dst.size() || off + count > blob.size())
      fail(ErrorKind::Io, "checkpoint shape mismatch for " + name);
    for (size_t i = 0; i < count; ++i)
      dst[i] = typename std::decay_t<decltype(dst)>::value_type(blob[off + i]);
  };
  for (auto* p : model.params()) take(p->name, p->t.v);
  for (auto* b : model.batchnorms()) {
    take(b->gamma.name + ".running_mean", b->running_mean);
    take(b->gamma.name + ".running_var", b->running_var);
  }
}

}  // namespace fatiguenet::nn
