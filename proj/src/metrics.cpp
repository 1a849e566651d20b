#include "ramehr/metrics.hpp"

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

namespace ramehr {

double auroc(const std::vector<float>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size()) throw DataError("auroc: length mismatch");
  std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (auto y : labels) n_pos += y ? 1 : 0;
  std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DataError("auroc undefined: single-class input");

  // rank-sum with midranks for ties
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));  // 1-based
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) pos_rank_sum += midrank;
    i = j;
  }
  double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double aupr(const std::vector<float>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size()) throw DataError("aupr: length mismatch");
  std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (auto y : labels) n_pos += y ? 1 : 0;
  if (n_pos == 0) throw DataError("aupr undefined: no positives");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  // sum precision * delta-recall at each distinct threshold, ties grouped
  double area = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    std::size_t group_tp = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]]) ++group_tp;
      ++j;
    }
    std::size_t prev_tp = tp;
    tp += group_tp;
    fp += (j - i) - group_tp;
    if (group_tp > 0) {
      double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
      double delta_recall = static_cast<double>(tp - prev_tp) / static_cast<double>(n_pos);
      area += precision * delta_recall;
    }
    i = j;
  }
  return area;
}

std::pair<double, double> acc_f1(const std::vector<float>& scores,
                                 const std::vector<std::uint8_t>& labels, double threshold) {
  if (scores.size() != labels.size()) throw DataError("acc_f1: length mismatch");
  if (threshold <= 0.0 || threshold >= 1.0) throw UsageError("threshold must be in (0,1)");
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    bool pred = scores[i] >= threshold;
    bool truth = labels[i] != 0;
    if (pred && truth) ++tp;
    else if (pred && !truth) ++fp;
    else if (!pred && !truth) ++tn;
    else ++fn;
  }
  double acc = static_cast<double>(tp + tn) / static_cast<double>(scores.size());
  double denom = static_cast<double>(2 * tp + fp + fn);
  double f1 = denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
  return {acc, f1};
}

EvalReport evaluate(const std::vector<std::vector<float>>& scores,
                    const std::vector<LabelVector>& labels,
                    const std::vector<std::string>& label_names, double threshold) {
  if (scores.size() != labels.size()) throw DataError("evaluate: example count mismatch");
  if (scores.empty()) throw DataError("evaluate: no examples");
  std::size_t num_labels = label_names.size();

  EvalReport rep;
  double auroc_sum = 0, aupr_sum = 0, f1_sum = 0;
  std::size_t auroc_n = 0, aupr_n = 0;
  std::size_t correct = 0, cells = 0;
  for (std::size_t l = 0; l < num_labels; ++l) {
    std::vector<float> s(scores.size());
    std::vector<std::uint8_t> y(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i].size() != num_labels || labels[i].size() != num_labels)
        throw DataError("evaluate: label width mismatch");
      s[i] = scores[i][l];
      y[i] = labels[i][l];
    }
    LabelMetrics lm;
    lm.name = label_names[l];
    try {
      lm.auroc = auroc(s, y);
      auroc_sum += *lm.auroc;
      ++auroc_n;
    } catch (const DataError&) {
      // single-class label: excluded from the macro mean
    }
    try {
      lm.aupr = aupr(s, y);
      aupr_sum += *lm.aupr;
      ++aupr_n;
    } catch (const DataError&) {
    }
    auto [a, f1] = acc_f1(s, y, threshold);
    lm.f1 = f1;
    f1_sum += f1;
    for (std::size_t i = 0; i < s.size(); ++i) {
      bool pred = s[i] >= threshold;
      correct += (pred == (y[i] != 0)) ? 1 : 0;
      ++cells;
    }
    rep.per_label.push_back(std::move(lm));
  }
  rep.acc = static_cast<double>(correct) / static_cast<double>(cells);
  rep.auroc = auroc_n ? auroc_sum / static_cast<double>(auroc_n) : 0.0;
  rep.aupr = aupr_n ? aupr_sum / static_cast<double>(aupr_n) : 0.0;
  rep.macro_f1 = num_labels ? f1_sum / static_cast<double>(num_labels) : 0.0;
  return rep;
}

std::string EvalReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& lm : per_label) {
    nlohmann::json j{{"name", lm.name}, {"f1", lm.f1}};
    if (lm.auroc) j["auroc"] = *lm.auroc;
    if (lm.aupr) j["aupr"] = *lm.aupr;
    per.push_back(j);
  }
  nlohmann::json j{{"acc", acc}, {"auroc", auroc}, {"aupr", aupr},
                   {"macro_f1", macro_f1}, {"per_label", per}};
  return j.dump(2);
}

}  // namespace ramehr
