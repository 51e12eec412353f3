#include "fatiguenet/metrics.hpp"

#include "fatiguenet/error.hpp"

namespace fatiguenet {

Metrics metrics_from_confusion(const std::array<std::array<long, 3>, 3>& cm) {
  Metrics m;
  m.confusion = cm;
  long total = 0, correct = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      total += cm[i][j];
      if (i == j) correct += cm[i][j];
    }
  if (total == 0) fail(ErrorKind::EmptyInput, "empty confusion matrix");
  m.accuracy = 100.0 * double(correct) / double(total);
  double rec_sum = 0, f1_sum = 0;
  for (int c = 0; c < 3; ++c) {
    long support = cm[c][0] + cm[c][1] + cm[c][2];
    long predicted = cm[0][c] + cm[1][c] + cm[2][c];
    double recall = support > 0 ? double(cm[c][c]) / double(support) : 0.0;
    double precision = predicted > 0 ? double(cm[c][c]) / double(predicted) : 0.0;
    double f1 = (precision + recall) > 0
                    ? 2 * precision * recall / (precision + recall)
                    : 0.0;
    rec_sum += recall;
    f1_sum += f1;
  }
  m.macro_recall = 100.0 * rec_sum / 3.0;
  m.macro_f1 = 100.0 * f1_sum / 3.0;
  return m;
}

Metrics compute_metrics(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.empty()) fail(ErrorKind::EmptyInput, "no predictions to score");
  if (truth.size() != pred.size())
    fail(ErrorKind::Shape, "truth/prediction length mismatch");
  std::array<std::array<long, 3>, 3> cm{};
  for (size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] > 2 || pred[i] < 0 || pred[i] > 2)
      fail(ErrorKind::InvalidLabel, "class index outside [0,3)");
    ++cm[size_t(truth[i])][size_t(pred[i])];
  }
  return metrics_from_confusion(cm);
}

}  // namespace fatiguenet
