#pragma once
#include <array>
#include <vector>

namespace fatiguenet {

// percentages over a 3-class confusion matrix, rows = truth
struct Metrics {
  double accuracy = 0;
  double macro_recall = 0;
  double macro_f1 = 0;
  std::array<std::array<long, 3>, 3> confusion{};
};

Metrics metrics_from_confusion(const std::array<std::array<long, 3>, 3>& cm);
Metrics compute_metrics(const std::vector<int>& truth, const std::vector<int>& pred);

}  // namespace fatiguenet
