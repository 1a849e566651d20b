#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ramehr/hygt.hpp"
#include "ramehr/metrics.hpp"
#include "ramehr/textmodel.hpp"

namespace ramehr {

struct CoTrainConfig {
  float beta = 0.2f;        // blend weight on the augmented model
  float lambda = 1.0f;      // consistency regularization strength
  float lr_aug = 5e-5f;
  float lr_local = 1e-4f;
  int batch_size = 32;
  int epochs = 5;
  std::uint64_t seed = 0;
  float threshold = 0.5f;
  bool couple_blend = false;  // default: blended target is gradient-detached
  void validate() const;
};

// Mean over labels of -[y log p + (1-y) log(1-p)], probabilities clamped
// to [1e-7, 1-1e-7].
double bce(const std::vector<float>& pred, const LabelVector& target);

// Mean per-label Bernoulli KL(p || q), both sides clamped.
double bernoulli_kl(const std::vector<float>& p, const std::vector<float>& q);

struct PredictionPair {
  std::vector<float> y1;       // augmented model
  std::vector<float> y2;       // local model
  std::vector<float> y_blend;  // beta*y1 + (1-beta)*y2
  LabelVector hard;            // 1[y_blend >= threshold]
};

enum class TrainMode { CoTrain, AugOnly, LocalOnly };

struct TrainLogEntry {
  int epoch = 0;
  int step = 0;
  double loss_aug = 0.0;
  double loss_loc = 0.0;
  std::optional<double> val_auroc;  // filled on the last step of each epoch
};

class Trainer {
 public:
  Trainer(Dataset train, Dataset val, Dataset test, const Vocabulary& vocab,
          const TaskSpec& task, const SummaryCache& summaries, CoTrainConfig cfg,
          HygtConfig local_cfg, TextEncoderConfig aug_cfg, TrainMode mode);

  std::vector<TrainLogEntry> train();
  std::pair<double, double> cotrain_step(const std::vector<int>& batch_global_idx);

  PredictionPair infer(const PatientRecord& p) const;
  std::vector<PredictionPair> predict(const Dataset& ds) const;
  EvalReport evaluate(const Dataset& ds) const;
  EvalReport evaluate_test() const { return evaluate(test_); }
  double val_auroc() const;

  const Hypergraph& graph() const { return graph_; }
  HygtParams<float>& local_params() { return local_; }
  TextEncoderParams<float>& aug_params() { return aug_; }
  const Dataset& test_set() const { return test_; }
  const Dataset& val_set() const { return val_; }
  TrainMode mode() const { return mode_; }
  const CoTrainConfig& config() const { return cfg_; }

  void save_checkpoints(const std::string& aug_path, const std::string& local_path);
  void load_checkpoints(const std::string& aug_path, const std::string& local_path);

  static void write_log_csv(const std::vector<TrainLogEntry>& log, const std::string& path);

 private:
  std::vector<float> forward_aug(const std::vector<int>& idx) const;
  std::vector<float> forward_local(const std::vector<int>& idx) const;
  std::vector<PredictionPair> predict_indices(const std::vector<int>& idx) const;

  Dataset train_, val_, test_, full_;
  const TaskSpec& task_;
  CoTrainConfig cfg_;
  TrainMode mode_;
  Hypergraph graph_;
  HygtParams<float> local_;
  TextEncoderParams<float> aug_;
  Adam<float> opt_aug_, opt_local_;
  std::vector<std::vector<FlattenedDoc>> docs_;  // per full_ index
  std::vector<int> edges_;                       // per full_ index
  std::mt19937_64 shuffle_rng_;
  long step_counter_ = 0;
};

struct HyperGrid {
  std::vector<float> betas;
  std::vector<float> lambdas;
};

// Trains one configuration per grid cell via `val_auroc_for` and returns the
// cell maximizing validation AUROC; ties prefer smaller lambda, then beta.
CoTrainConfig select_hyperparams(const HyperGrid& grid, CoTrainConfig base,
                                 const std::function<double(const CoTrainConfig&)>& val_auroc_for);

}  // namespace ramehr
