#pragma once
#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "fatiguenet/dataset.hpp"
#include "fatiguenet/metrics.hpp"
#include "fatiguenet/model.hpp"
#include "fatiguenet/synthgen.hpp"

namespace fatiguenet::train {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::string optimizer = "adaptive-moments";  // or "sgd-momentum"
  nn::LossWeights weights;
  double schedule_gamma = 5.0;
  double schedule_k = 0.2;
  uint64_t rng_seed = 17;
  bool augment = true;

  void validate() const {
    if (epochs < 1) fail(ErrorKind::InvalidConfig, "epochs must be >= 1");
    if (batch_size < 2) fail(ErrorKind::InvalidConfig, "batch_size must be >= 2");
    if (!(learning_rate > 0)) fail(ErrorKind::InvalidConfig, "learning_rate must be > 0");
    if (optimizer != "adaptive-moments" && optimizer != "sgd-momentum")
      fail(ErrorKind::InvalidConfig, "unknown optimizer '" + optimizer + "'");
  }
};

struct FoldSpec {
  std::vector<int> train_subjects, val_subjects;
};

inline std::vector<FoldSpec> make_folds(std::vector<int> subject_ids, int k,
                                        uint64_t seed) {
  if (k < 2 || subject_ids.empty() || subject_ids.size() % size_t(k) != 0)
    fail(ErrorKind::InvalidConfig,
         "subject count " + std::to_string(subject_ids.size()) +
             " not divisible into " + std::to_string(k) + " folds");
  std::sort(subject_ids.begin(), subject_ids.end());
  Rng rng(seed, 0xF01D);
  rng.shuffle(subject_ids);
  size_t group = subject_ids.size() / size_t(k);
  std::vector<FoldSpec> folds{size_t(k)};
  for (int f = 0; f < k; ++f) {
    auto& fs = folds[size_t(f)];
    for (size_t i = 0; i < subject_ids.size(); ++i) {
      if (i / group == size_t(f))
        fs.val_subjects.push_back(subject_ids[i]);
      else
        fs.train_subjects.push_back(subject_ids[i]);
    }
    std::sort(fs.val_subjects.begin(), fs.val_subjects.end());
    std::sort(fs.train_subjects.begin(), fs.train_subjects.end());
  }
  return folds;
}

struct EpochRow {
  int epoch = 0;
  double l_fatigue = 0, l_sc = 0, l_domain = 0, l_total = 0;
  double val_acc = 0;
  double lambda = 0;
};

struct FoldResult {
  std::vector<EpochRow> log;
  Metrics final_metrics, best_metrics;
  int best_epoch = 0;
};

// ---------------------------------------------------------------------------

template <class T>
struct OptState {
  std::vector<std::vector<T>> m, v;
  long step = 0;
};

template <class T>
void optimizer_step(std::vector<nn::Param<T>*>& params, OptState<T>& st,
                    const TrainConfig& cfg, const std::string& context) {
  if (st.m.empty()) {
    st.m.resize(params.size());
    st.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      st.m[i].assign(params[i]->t.size(), T(0));
      if (cfg.optimizer == "adaptive-moments")
        st.v[i].assign(params[i]->t.size(), T(0));
    }
  }
  ++st.step;
  double lr = cfg.learning_rate;
  if (cfg.optimizer == "adaptive-moments") {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double bc1 = 1 - std::pow(b1, double(st.step));
    double bc2 = 1 - std::pow(b2, double(st.step));
    for (size_t i = 0; i < params.size(); ++i) {
      auto& t = params[i]->t;
      for (size_t j = 0; j < t.size(); ++j) {
        T g = t.g[j];
        if (!std::isfinite(double(g)))
          fail(ErrorKind::Divergence,
               "non-finite gradient in " + params[i]->name + " at " + context);
        st.m[i][j] = T(b1) * st.m[i][j] + T(1 - b1) * g;
        st.v[i][j] = T(b2) * st.v[i][j] + T(1 - b2) * g * g;
        double mh = double(st.m[i][j]) / bc1;
        double vh = double(st.v[i][j]) / bc2;
        t.v[j] -= T(lr * mh / (std::sqrt(vh) + eps));
      }
    }
  } else {
    const double mom = 0.9;
    for (size_t i = 0; i < params.size(); ++i) {
      auto& t = params[i]->t;
      for (size_t j = 0; j < t.size(); ++j) {
        T g = t.g[j];
        if (!std::isfinite(double(g)))
          fail(ErrorKind::Divergence,
               "non-finite gradient in " + params[i]->name + " at " + context);
        st.m[i][j] = T(mom) * st.m[i][j] + g;
        t.v[j] -= T(lr) * st.m[i][j];
      }
    }
  }
}

// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_num(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
nn::Tensor<T> assemble_batch(const data::SampleSet& set,
                             const std::vector<size_t>& idx, size_t lo,
                             size_t hi, bool augment, Rng* aug_rng) {
  size_t b = hi - lo, c = set.channels, s = set.rows;
  nn::Tensor<T> x({b, c, s, set.cols});
  for (size_t i = lo; i < hi; ++i) {
    const auto& sample = set.samples[idx[i]];
    if (augment) {
      dsp::TFImage img;
      img.channels = c;
      img.rows = s;
      img.cols = set.cols;
      img.values.assign(sample.values.begin(), sample.values.end());
      dsp::TFImage out = synth::augment(img, *aug_rng);
      for (size_t j = 0; j < out.values.size(); ++j)
        x.v[(i - lo) * c * s * set.cols + j] = T(out.values[j]);
    } else {
      for (size_t j = 0; j < sample.values.size(); ++j)
        x.v[(i - lo) * c * s * set.cols + j] = T(sample.values[j]);
    }
  }
  return x;
}

inline void check_classes(const data::SampleSet& set,
                          const std::vector<size_t>& idx, const char* split) {
  std::array<long, 3> count{};
  for (size_t i : idx) ++count[size_t(set.samples[i].label)];
  for (int c = 0; c < 3; ++c)
    if (count[size_t(c)] == 0)
      fail(ErrorKind::InvalidFold, std::string("fatigue class ") +
                                       std::to_string(c) + " missing from " +
                                       split + " split");
}

}  // namespace detail

// ---------------------------------------------------------------------------

template <class T>
Metrics evaluate(nn::Iadan<T>& model, const data::SampleSet& set,
                 const std::vector<size_t>& idx, int batch_size) {
  if (idx.empty()) fail(ErrorKind::EmptyInput, "nothing to evaluate");
  std::vector<int> truth, pred;
  for (size_t lo = 0; lo < idx.size(); lo += size_t(batch_size)) {
    size_t hi = std::min(idx.size(), lo + size_t(batch_size));
    nn::Tensor<T> x = detail::assemble_batch<T>(set, idx, lo, hi, false, nullptr);
    auto out = model.forward(x, nn::Mode::Eval, nullptr, 0.0);
    for (size_t i = lo; i < hi; ++i) {
      const T* row = out.fatigue_logits.v.data() + (i - lo) * 3;
      int arg = 0;
      if (row[1] > row[arg]) arg = 1;
      if (row[2] > row[arg]) arg = 2;
      truth.push_back(set.samples[idx[i]].label);
      pred.push_back(arg);
    }
  }
  return compute_metrics(truth, pred);
}

// Frozen-embedding rows for a sample subset, eval mode.
template <class T>
std::vector<std::vector<double>> extract_embeddings(nn::Iadan<T>& model,
                                                    const data::SampleSet& set,
                                                    const std::vector<size_t>& idx,
                                                    int batch_size) {
  std::vector<std::vector<double>> rows;
  rows.reserve(idx.size());
  for (size_t lo = 0; lo < idx.size(); lo += size_t(batch_size)) {
    size_t hi = std::min(idx.size(), lo + size_t(batch_size));
    nn::Tensor<T> x = detail::assemble_batch<T>(set, idx, lo, hi, false, nullptr);
    auto out = model.forward(x, nn::Mode::Eval, nullptr, 0.0);
    for (size_t i = lo; i < hi; ++i) {
      std::vector<double> row(128);
      for (int j = 0; j < 128; ++j)
        row[size_t(j)] = double(out.embedding.v[(i - lo) * 128 + size_t(j)]);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// L2-regularized multinomial logistic probe, full-batch GD, zero init.
// Returns in-sample accuracy in [0,1].
inline double linear_probe(const std::vector<std::vector<double>>& feats,
                           const std::vector<int>& labels, int n_classes,
                           int iters = 300, double lr = 0.5, double l2 = 1e-3) {
  if (feats.empty()) fail(ErrorKind::EmptyInput, "probe needs samples");
  size_t n = feats.size(), f = feats[0].size();
  size_t k = size_t(n_classes);
  std::vector<double> w(f * k, 0.0), b(k, 0.0);
  std::vector<double> logits(k), p(k);
  std::vector<double> gw(f * k), gb(k);
  for (int it = 0; it < iters; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (size_t i = 0; i < n; ++i) {
      for (size_t c = 0; c < k; ++c) {
        double acc = b[c];
        for (size_t j = 0; j < f; ++j) acc += feats[i][j] * w[j * k + c];
        logits[c] = acc;
      }
      double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0;
      for (size_t c = 0; c < k; ++c) z += std::exp(logits[c] - mx);
      for (size_t c = 0; c < k; ++c) {
        p[c] = std::exp(logits[c] - mx) / z;
        double d = (p[c] - (c == size_t(labels[i]) ? 1.0 : 0.0)) / double(n);
        gb[c] += d;
        for (size_t j = 0; j < f; ++j) gw[j * k + c] += d * feats[i][j];
      }
    }
    for (size_t j = 0; j < f * k; ++j) w[j] -= lr * (gw[j] + l2 * w[j]);
    for (size_t c = 0; c < k; ++c) b[c] -= lr * gb[c];
  }
  size_t correct = 0;
  for (size_t i = 0; i < n; ++i) {
    size_t arg = 0;
    double best = -1e300;
    for (size_t c = 0; c < k; ++c) {
      double acc = b[c];
      for (size_t j = 0; j < f; ++j) acc += feats[i][j] * w[j * k + c];
      if (acc > best) {
        best = acc;
        arg = c;
      }
    }
    if (arg == size_t(labels[i])) ++correct;
  }
  return double(correct) / double(n);
}

// ---------------------------------------------------------------------------

template <class T>
struct FoldRun {
  FoldResult result;
  std::unique_ptr<nn::Iadan<T>> final_model, best_model;
  std::vector<size_t> train_idx, val_idx;
  std::map<int, int> domain_index;  // subject id -> dense domain label
};

template <class T>
FoldRun<T> train_fold(const data::SampleSet& set, const FoldSpec& fold,
                      const TrainConfig& cfg,
                      nn::Variant variant = nn::Variant::IADAN) {
  cfg.validate();
  FoldRun<T> run;
  std::set<int> train_set(fold.train_subjects.begin(), fold.train_subjects.end()),
      val_set(fold.val_subjects.begin(), fold.val_subjects.end());
  for (int s : fold.val_subjects)
    if (train_set.count(s))
      fail(ErrorKind::InvalidFold, "subject " + std::to_string(s) + " in both splits");
  for (size_t i = 0; i < set.samples.size(); ++i) {
    int s = set.samples[i].subject;
    if (train_set.count(s))
      run.train_idx.push_back(i);
    else if (val_set.count(s))
      run.val_idx.push_back(i);
  }
  if (run.train_idx.empty() || run.val_idx.empty())
    fail(ErrorKind::InvalidFold, "fold produced an empty split");
  detail::check_classes(set, run.train_idx, "train");
  detail::check_classes(set, run.val_idx, "val");
  for (size_t i = 0; i < fold.train_subjects.size(); ++i)
    run.domain_index[fold.train_subjects[i]] = int(i);
  int n_domains = int(fold.train_subjects.size());

  auto model = std::make_unique<nn::Iadan<T>>(variant, n_domains);
  Rng init_rng(cfg.rng_seed, 0xA111);
  model->init(init_rng);
  auto params = model->params();
  OptState<T> opt;
  nn::JointLoss<T> loss(cfg.weights);

  Rng order_rng(cfg.rng_seed, 0x0D0E);
  Rng aug_rng(cfg.rng_seed, 0xA061);
  Rng drop_rng(cfg.rng_seed, 0xD409);

  std::vector<size_t> order = run.train_idx;
  size_t bs = size_t(cfg.batch_size);
  size_t batches = order.size() / bs;
  size_t rem = order.size() - batches * bs;
  if (rem >= 2) ++batches;  // trailing batch kept when it still holds a pair
  if (batches == 0) fail(ErrorKind::InvalidFold, "train split smaller than one batch");
  long total_steps = long(batches) * cfg.epochs;
  long step = 0;

  double best_acc = -1;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    EpochRow row;
    row.epoch = epoch;
    double lam = 0;
    for (size_t bi = 0; bi < batches; ++bi) {
      size_t lo = bi * bs, hi = std::min(order.size(), lo + bs);
      lam = nn::lambda_schedule(double(step) / double(total_steps),
                                cfg.schedule_gamma, cfg.schedule_k);
      nn::Tensor<T> x =
          detail::assemble_batch<T>(set, order, lo, hi, cfg.augment, &aug_rng);
      std::vector<int> fat_labels, dom_labels;
      for (size_t i = lo; i < hi; ++i) {
        const auto& sample = set.samples[order[i]];
        if (!train_set.count(sample.subject))
          fail(ErrorKind::InvalidFold, "validation subject leaked into a train batch");
        fat_labels.push_back(sample.label);
        dom_labels.push_back(run.domain_index.at(sample.subject));
      }
      auto out = model->forward(x, nn::Mode::Train, &drop_rng, lam);
      nn::LossParts parts = loss.forward(out, fat_labels, dom_labels,
                                         variant != nn::Variant::IAN, true);
      model->zero_grad();
      loss.backward(*model);
      optimizer_step(params, opt, cfg,
                     "epoch " + std::to_string(epoch) + " batch " + std::to_string(bi));
      row.l_fatigue += parts.fatigue;
      row.l_sc += parts.supcon;
      row.l_domain += parts.domain;
      row.l_total += parts.total;
      ++step;
    }
    row.l_fatigue /= double(batches);
    row.l_sc /= double(batches);
    row.l_domain /= double(batches);
    row.l_total /= double(batches);
    row.lambda = lam;
    Metrics val = evaluate(*model, set, run.val_idx, cfg.batch_size);
    row.val_acc = val.accuracy;
    run.result.log.push_back(row);
    if (val.accuracy > best_acc) {
      best_acc = val.accuracy;
      run.result.best_epoch = epoch;
      run.result.best_metrics = val;
      run.best_model = std::make_unique<nn::Iadan<T>>(*model);
    }
    if (epoch == cfg.epochs - 1) run.result.final_metrics = val;
  }
  run.final_model = std::move(model);
  return run;
}

// ---------------------------------------------------------------------------

struct AblationRow {
  std::string name;
  Metrics final_metrics, best_metrics;
};

template <class T>
std::vector<AblationRow> ablation_run(const data::SampleSet& set,
                                      const FoldSpec& fold,
                                      const TrainConfig& cfg,
                                      const std::string& grid) {
  std::vector<AblationRow> rows;
  if (grid == "structural") {
    for (auto v : {nn::Variant::IADAN, nn::Variant::IDAN, nn::Variant::IAN,
                   nn::Variant::ADAN}) {
      auto run = train_fold<T>(set, fold, cfg, v);
      rows.push_back({nn::variant_name(v), run.result.final_metrics,
                      run.result.best_metrics});
    }
  } else if (grid == "loss") {
    struct Cell {
      const char* name;
      double alpha, beta;
    };
    const Cell cells[] = {{"FCE", 0, 0},
                          {"FCE+DCE", 0, -1},
                          {"FCE+SC", -1, 0},
                          {"FCE+DCE+SC", -1, -1}};
    for (const auto& cell : cells) {
      TrainConfig c = cfg;
      c.weights.alpha = cell.alpha < 0 ? cfg.weights.alpha : cell.alpha;
      c.weights.beta = cell.beta < 0 ? cfg.weights.beta : cell.beta;
      auto run = train_fold<T>(set, fold, c, nn::Variant::IADAN);
      rows.push_back({cell.name, run.result.final_metrics,
                      run.result.best_metrics});
    }
  } else {
    fail(ErrorKind::InvalidConfig, "unknown ablation grid '" + grid + "'");
  }
  return rows;
}

// ---------------------------------------------------------------------------

inline void write_epoch_log(const std::vector<EpochRow>& log,
                            const std::string& path) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) fail(ErrorKind::Io, "cannot write " + tmp);
    f << "epoch,L_fatigue,L_SC,L_domain,L_total,val_acc,lambda\n";
    for (const auto& r : log)
      f << r.epoch << ',' << detail::fmt_num(r.l_fatigue) << ','
        << detail::fmt_num(r.l_sc) << ',' << detail::fmt_num(r.l_domain) << ','
        << detail::fmt_num(r.l_total) << ',' << detail::fmt_num(r.val_acc)
        << ',' << detail::fmt_num(r.lambda) << '\n';
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    fail(ErrorKind::Io, "cannot move " + tmp + " into place");
}

inline void write_metrics_json(const Metrics& final_m, const Metrics& best_m,
                               int best_epoch, const std::string& path) {
  nlohmann::json j;
  auto fill = [](const Metrics& m) {
    nlohmann::json e;
    e["accuracy"] = m.accuracy;
    e["macro_recall"] = m.macro_recall;
    e["macro_f1"] = m.macro_f1;
    e["confusion"] = m.confusion;
    return e;
  };
  j["final"] = fill(final_m);
  j["best"] = fill(best_m);
  j["best_epoch"] = best_epoch;
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) fail(ErrorKind::Io, "cannot write " + tmp);
    f << j.dump(2) << "\n";
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    fail(ErrorKind::Io, "cannot move " + tmp + " into place");
}

}  // namespace fatiguenet::train
