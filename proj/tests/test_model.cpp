#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "fatiguenet/model.hpp"

using namespace fatiguenet;
using namespace fatiguenet::nn;

namespace {

TensorD randt(const std::vector<size_t>& shape, Rng& rng, double lo = -1,
              double hi = 1) {
  TensorD t(shape);
  for (auto& v : t.v) v = rng.uniform(lo, hi);
  return t;
}

template <class T>
Tensor<T> image_batch(size_t n, size_t s, Rng& rng) {
  Tensor<T> x({n, 6, s, s});
  for (auto& v : x.v) v = T(rng.uniform(0.0, 1.0));
  return x;
}

}  // namespace

TEST_CASE("lambda schedule endpoints and shape") {
  CHECK(lambda_schedule(0.0) == 0.0);
  CHECK(std::abs(lambda_schedule(1.0) - 0.19732) < 1e-5);
  CHECK(lambda_schedule(0.5) == doctest::Approx(0.1696567).epsilon(1e-5));
  double prev = -1;
  for (int i = 0; i <= 20; ++i) {
    double v = lambda_schedule(double(i) / 20.0);
    CHECK(v > prev);
    prev = v;
  }
  CHECK_THROWS_AS(lambda_schedule(-0.01), Error);
  CHECK_THROWS_AS(lambda_schedule(1.01), Error);
  CHECK_THROWS_AS(lambda_schedule(0.5, 0.0, 0.2), Error);
  CHECK_THROWS_AS(lambda_schedule(0.5, 5.0, 0.0), Error);
}

TEST_CASE("variant names round-trip") {
  for (auto v : {Variant::IADAN, Variant::IDAN, Variant::IAN, Variant::ADAN})
    CHECK(variant_from_name(variant_name(v)) == v);
  CHECK_THROWS_AS(variant_from_name("IADANX"), Error);
}

TEST_CASE("forward trace matches the layer table at 64x64") {
  Rng rng(21, 0);
  Iadan<float> model(Variant::IADAN, 9);
  model.init(rng);
  auto x = image_batch<float>(4, 64, rng);
  ShapeTrace trace;
  model.forward(x, Mode::Eval, nullptr, 0.0, &trace);

  const std::vector<std::pair<std::string, std::vector<size_t>>> want = {
      {"input", {4, 6, 64, 64}}, {"conv1", {4, 32, 64, 64}},
      {"pool1", {4, 32, 32, 32}}, {"conv2", {4, 64, 32, 32}},
      {"pool2", {4, 64, 16, 16}}, {"unit0", {4, 64, 16, 16}},
      {"unit1", {4, 64, 16, 16}}, {"unit2", {4, 64, 16, 16}},
      {"gmp", {4, 64}},           {"fc", {4, 128}},
      {"fat1", {4, 64}},          {"fat2", {4, 3}},
      {"dom1", {4, 64}},          {"dom2", {4, 9}},
  };
  REQUIRE(trace.size() == want.size());
  for (size_t i = 0; i < want.size(); ++i) {
    CAPTURE(i);
    CHECK(trace[i].first == want[i].first);
    CHECK(trace[i].second == want[i].second);
  }
}

TEST_CASE("all variants run at 32x32 and expose the right heads") {
  Rng rng(22, 0);
  for (auto v : {Variant::IADAN, Variant::IDAN, Variant::IAN, Variant::ADAN}) {
    CAPTURE(variant_name(v));
    Iadan<float> model(v, 4);
    model.init(rng);
    auto x = image_batch<float>(2, 32, rng);
    auto out = model.forward(x, Mode::Eval, nullptr, 0.1);
    CHECK(out.fatigue_logits.shape == std::vector<size_t>{2, 3});
    CHECK(out.embedding.shape == std::vector<size_t>{2, 128});
    if (v == Variant::IAN) {
      CHECK(out.domain_logits.size() == 0);
    } else {
      CHECK(out.domain_logits.shape == std::vector<size_t>{2, 4});
    }
    for (size_t i = 0; i < 2; ++i) {
      double s = 0;
      for (int j = 0; j < 128; ++j) {
        double z = out.embedding_norm.v[i * 128 + j];
        s += z * z;
      }
      CHECK((s == doctest::Approx(1.0) || s == 0.0));
    }
  }
  CHECK_THROWS_AS(Iadan<float>(Variant::IADAN, 0), Error);
  CHECK_NOTHROW(Iadan<float>(Variant::IAN, 0));

  Iadan<float> model(Variant::IADAN, 4);
  Tensor<float> xf({2, 5, 32, 32});
  CHECK_THROWS_AS(model.forward(xf, Mode::Eval, nullptr, 0.0), Error);
}

TEST_CASE("a residual unit with zero block weights is the identity") {
  Rng rng(23, 0);
  ResidualUnit<double> unit("u");  // weights left at zero
  auto x = randt({2, 64, 8, 8}, rng, 0.0, 1.0);
  auto y = unit.forward(x, Mode::Eval);
  CHECK(y.v == x.v);

  ResidualUnit<double> plain("p");
  plain.use_attention = false;
  plain.use_inception = false;
  auto y2 = plain.forward(x, Mode::Eval);
  CHECK(y2.v == x.v);
}

TEST_CASE("zeroed attention gates pass a quarter of the signal") {
  Rng rng(24, 0);
  AttentionBlock<double> att("a");
  auto x = randt({2, 64, 6, 6}, rng, -1.0, 2.0);
  auto y = att.forward(x);
  for (size_t i = 0; i < x.size(); ++i) CHECK(y.v[i] == 0.25 * x.v[i]);
}

TEST_CASE("inception concatenates branches in declared order") {
  Rng rng(25, 0);
  InceptionBlock<double> inc("i");
  inc.init(rng);
  // nonzero biases make every branch produce a recognizably nonzero map
  auto x = randt({2, 64, 5, 5}, rng, 0.0, 1.0);
  auto y = inc.forward(x, Mode::Train);
  CHECK(y.shape == std::vector<size_t>{2, 64, 5, 5});

  // zeroing one branch's final conv and its norm affine zeroes exactly its
  // channel slice (eval batchnorm maps zero input to beta - gamma*mu/sigma)
  std::fill(inc.b3c2.w.t.v.begin(), inc.b3c2.w.t.v.end(), 0.0);
  std::fill(inc.b3c2.b.t.v.begin(), inc.b3c2.b.t.v.end(), 0.0);
  std::fill(inc.b3n2.gamma.t.v.begin(), inc.b3n2.gamma.t.v.end(), 0.0);
  std::fill(inc.b3n2.beta.t.v.begin(), inc.b3n2.beta.t.v.end(), 0.0);
  auto y2 = inc.forward(x, Mode::Eval);
  for (size_t ni = 0; ni < 2; ++ni)
    for (size_t c = 0; c < 64; ++c) {
      bool b3 = c >= 24 && c < 56;  // 8 + 16 then 32 channels of branch 3
      double mx = 0;
      for (size_t i = 0; i < 25; ++i)
        mx = std::max(mx, std::abs(y2.v[(ni * 64 + c) * 25 + i]));
      if (b3) CHECK(mx == 0.0);
    }
}

TEST_CASE("domain gradients vanish at lambda zero") {
  Rng rng(26, 0);
  Iadan<double> model(Variant::IADAN, 3);
  model.init(rng);
  auto x = image_batch<double>(4, 16, rng);
  std::vector<int> fat = {0, 1, 2, 0}, dom = {0, 1, 2, 1};

  Rng drop_rng(99, 0);
  model.forward(x, Mode::Train, &drop_rng, 0.0);
  model.fat_drop.frozen = true;
  model.dom_drop.frozen = true;

  LossWeights w_dom;
  w_dom.alpha = 0;
  w_dom.beta = 0.8;
  JointLoss<double> jl_dom(w_dom);
  model.zero_grad();
  auto out = model.forward(x, Mode::Train, &drop_rng, 0.0);
  jl_dom.forward(out, fat, dom, true, false);
  jl_dom.backward(model);
  auto conv1_with = model.conv1.w.t.g;
  auto fc_with = model.fc.w.t.g;
  auto dom2_with = model.dom2.w.t.g;

  LossWeights w_none;
  w_none.alpha = 0;
  w_none.beta = 0;
  JointLoss<double> jl_none(w_none);
  model.zero_grad();
  out = model.forward(x, Mode::Train, &drop_rng, 0.0);
  jl_none.forward(out, fat, dom, true, false);
  jl_none.backward(model);

  CHECK(conv1_with == model.conv1.w.t.g);  // bitwise: head adds exactly zero
  CHECK(fc_with == model.fc.w.t.g);
  double head = 0;
  for (double g : dom2_with) head = std::max(head, std::abs(g));
  CHECK(head > 0);  // the head itself still learns
}

TEST_CASE("reversal scales extractor gradients by exactly minus lambda") {
  Rng rng(27, 0);
  Iadan<double> model(Variant::IADAN, 3);
  model.init(rng);
  auto x = image_batch<double>(4, 16, rng);
  std::vector<int> dom = {0, 1, 2, 1};

  Rng drop_rng(98, 0);
  auto out = model.forward(x, Mode::Train, &drop_rng, 0.25);
  model.fat_drop.frozen = true;
  model.dom_drop.frozen = true;
  out = model.forward(x, Mode::Train, &drop_rng, 0.25);

  SoftmaxCrossEntropy<double> dom_ce;
  dom_ce.forward(out.domain_logits, dom);
  TensorD zero_fat({4, 3});
  TensorD empty;

  model.zero_grad();
  model.grl.passthrough = false;  // reversal with lambda 0.25
  model.backward(zero_fat, dom_ce.backward(1.0), empty);
  auto g_rev_conv1 = model.conv1.w.t.g;
  auto g_rev_fc = model.fc.w.t.g;
  auto g_rev_cab = model.units[0].att.cab.w1.t.g;
  auto g_rev_bn1 = model.bn1.gamma.t.g;

  model.zero_grad();
  model.grl.passthrough = true;
  model.backward(zero_fat, dom_ce.backward(1.0), empty);

  for (size_t i = 0; i < g_rev_conv1.size(); ++i)
    CHECK(g_rev_conv1[i] == -0.25 * model.conv1.w.t.g[i]);
  for (size_t i = 0; i < g_rev_fc.size(); ++i)
    CHECK(g_rev_fc[i] == -0.25 * model.fc.w.t.g[i]);
  for (size_t i = 0; i < g_rev_cab.size(); ++i)
    CHECK(g_rev_cab[i] == -0.25 * model.units[0].att.cab.w1.t.g[i]);
  for (size_t i = 0; i < g_rev_bn1.size(); ++i)
    CHECK(g_rev_bn1[i] == -0.25 * model.bn1.gamma.t.g[i]);
}

TEST_CASE("eval forward is deterministic") {
  Rng rng(28, 0);
  Iadan<float> model(Variant::IADAN, 4);
  model.init(rng);
  auto x = image_batch<float>(2, 16, rng);
  auto a = model.forward(x, Mode::Eval, nullptr, 0.1);
  auto b = model.forward(x, Mode::Eval, nullptr, 0.1);
  CHECK(a.fatigue_logits.v == b.fatigue_logits.v);
  CHECK(a.embedding.v == b.embedding.v);
  CHECK(a.domain_logits.v == b.domain_logits.v);
}

TEST_CASE("joint loss composes the three terms") {
  Rng rng(29, 0);
  ModelOutput<double> out;
  out.fatigue_logits = randt({4, 3}, rng);
  out.embedding = randt({4, 128}, rng, 0.1, 1.0);
  out.domain_logits = randt({4, 5}, rng);
  std::vector<int> fat = {0, 1, 2, 0}, dom = {0, 1, 2, 3};

  LossWeights w;  // 0.5 / 0.8 / 0.05
  JointLoss<double> jl(w);
  auto parts = jl.forward(out, fat, dom, true, true);
  CHECK(parts.fatigue > 0);
  CHECK(parts.domain > 0);
  CHECK(parts.total == doctest::Approx(parts.fatigue + 0.5 * parts.supcon +
                                       0.8 * parts.domain));

  LossWeights w0;
  w0.alpha = 0;
  w0.beta = 0;
  JointLoss<double> jl0(w0);
  auto p0 = jl0.forward(out, fat, dom, true, true);
  CHECK(p0.supcon == 0.0);
  CHECK(p0.domain == 0.0);
  CHECK(p0.total == doctest::Approx(p0.fatigue));
  CHECK(!jl0.used_sc);
  CHECK(!jl0.used_dom);

  // an IAN-style output has no domain logits: the term stays off even when asked
  ModelOutput<double> ian = out;
  ian.domain_logits = TensorD();
  JointLoss<double> jli(w);
  auto pi = jli.forward(ian, fat, dom, true, true);
  CHECK(pi.domain == 0.0);
  CHECK(!jli.used_dom);
}

TEST_CASE("full model gradients pass a spot finite-difference check") {
  Rng rng(30, 0);
  Iadan<double> model(Variant::IADAN, 3);
  model.init(rng);
  auto x = image_batch<double>(4, 16, rng);
  std::vector<int> fat = {0, 1, 2, 0}, dom = {0, 1, 2, 1};

  Rng drop_rng(97, 0);
  model.forward(x, Mode::Train, &drop_rng, 0.13);
  model.fat_drop.frozen = true;
  model.dom_drop.frozen = true;
  model.freeze_argmax(true);

  LossWeights w;  // alpha .5, beta .8, tau .05
  const double lambda = 0.13;
  JointLoss<double> jl(w);
  auto parts_at = [&] {
    auto out = model.forward(x, Mode::Train, &drop_rng, lambda);
    return jl.forward(out, fat, dom, true, true);
  };
  // the reversal layer means extractor gradients belong to a different
  // functional than the one the domain head sees
  auto loss_head = [&] { return parts_at().total; };
  auto loss_ext = [&] {
    auto p = parts_at();
    return p.fatigue + w.alpha * p.supcon - lambda * w.beta * p.domain;
  };

  model.zero_grad();
  loss_head();
  jl.backward(model);

  Rng pick(55, 0);
  auto spot = [&](Param<double>& p, bool head) {
    std::vector<size_t> idx;
    for (int i = 0; i < 6; ++i) idx.push_back(pick.below(p.t.size()));
    double err = head ? grad_check_at<double>(loss_head, p.t.v.data(),
                                              p.t.g.data(), idx)
                      : grad_check_at<double>(loss_ext, p.t.v.data(),
                                              p.t.g.data(), idx);
    CAPTURE(p.name);
    CHECK(err < 1e-3);
  };
  spot(model.conv1.w, false);
  spot(model.bn1.gamma, false);
  spot(model.bn1.beta, false);
  spot(model.conv2.w, false);
  spot(model.units[0].att.cab.w1, false);
  spot(model.units[0].att.sab.w, false);
  spot(model.units[0].inc.b2c2.w, false);
  spot(model.units[1].inc.b3c2.w, false);
  spot(model.units[2].inc.b4c.w, false);
  spot(model.units[2].inc.b2n2.gamma, false);
  spot(model.fc.w, false);
  spot(model.fat1.w, true);
  spot(model.fat2.b, true);
  spot(model.dom1.w, true);
  spot(model.dom2.w, true);
}

TEST_CASE("checkpoints round-trip bit-exactly for f32 models") {
  Rng rng(31, 0);
  Iadan<float> model(Variant::IADAN, 5);
  model.init(rng);
  // move the BN stats off their init so the round-trip covers them
  auto x = image_batch<float>(4, 16, rng);
  Rng drng(1, 1);
  model.forward(x, Mode::Train, &drng, 0.0);

  const std::string path = "ckpt_roundtrip_test.bin";
  save_checkpoint(model, path);

  Iadan<float> other(Variant::IADAN, 5);
  load_checkpoint(other, path);
  auto pa = model.params(), pb = other.params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    CHECK(pa[i]->t.v == pb[i]->t.v);
  }
  auto ba = model.batchnorms(), bb = other.batchnorms();
  for (size_t i = 0; i < ba.size(); ++i) {
    CHECK(ba[i]->running_mean == bb[i]->running_mean);
    CHECK(ba[i]->running_var == bb[i]->running_var);
  }
  auto ya = model.forward(x, Mode::Eval, nullptr, 0.0);
  auto yb = other.forward(x, Mode::Eval, nullptr, 0.0);
  CHECK(ya.fatigue_logits.v == yb.fatigue_logits.v);

  Iadan<float> wrong_variant(Variant::IDAN, 5);
  CHECK_THROWS_AS(load_checkpoint(wrong_variant, path), Error);
  Iadan<float> wrong_domains(Variant::IADAN, 4);
  CHECK_THROWS_AS(load_checkpoint(wrong_domains, path), Error);

  {
    std::ofstream bad("ckpt_bad_test.bin", std::ios::binary);
    bad << "not a checkpoint at all";
  }
  Iadan<float> victim(Variant::IADAN, 5);
  CHECK_THROWS_AS(load_checkpoint(victim, "ckpt_bad_test.bin"), Error);
  CHECK_THROWS_AS(load_checkpoint(victim, "ckpt_missing_test.bin"), Error);
  std::remove(path.c_str());
  std::remove("ckpt_bad_test.bin");
}

TEST_CASE("ablation variants keep one parameter layout") {
  Rng rng(32, 0);
  std::vector<std::string> names;
  for (auto v : {Variant::IADAN, Variant::IDAN, Variant::IAN, Variant::ADAN}) {
    Iadan<float> m(v, 4);
    std::vector<std::string> cur;
    for (auto* p : m.params()) cur.push_back(p->name);
    if (names.empty())
      names = cur;
    else
      CHECK(names == cur);
  }
}
