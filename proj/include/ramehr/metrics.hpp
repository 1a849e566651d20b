#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ramehr/common.hpp"
#include "ramehr/ehr.hpp"

namespace ramehr {

// Mann-Whitney AUROC; ties count 1/2. Throws DataError unless both classes
// are present (callers exclude such labels from macro means).
double auroc(const std::vector<float>& scores, const std::vector<std::uint8_t>& labels);

// Area under precision-recall via the step-wise estimator with tied scores
// grouped. Throws DataError when there is no positive.
double aupr(const std::vector<float>& scores, const std::vector<std::uint8_t>& labels);

// Hard labels at `threshold`; accuracy is micro over cells, F1 uses 0/0 -> 0.
std::pair<double, double> acc_f1(const std::vector<float>& scores,
                                 const std::vector<std::uint8_t>& labels, double threshold);

struct LabelMetrics {
  std::string name;
  std::optional<double> auroc;  // absent for single-class labels
  std::optional<double> aupr;   // absent when the label has no positives
  double f1 = 0.0;
};

struct EvalReport {
  double acc = 0.0;
  double auroc = 0.0;     // macro mean over defined labels
  double aupr = 0.0;
  double macro_f1 = 0.0;
  std::vector<LabelMetrics> per_label;
  std::string to_json() const;
};

// scores: row-major [num_examples x num_labels] probabilities.
EvalReport evaluate(const std::vector<std::vector<float>>& scores,
                    const std::vector<LabelVector>& labels,
                    const std::vector<std::string>& label_names, double threshold = 0.5);

}  // namespace ramehr
