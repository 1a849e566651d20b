#include "ramehr/cotrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace ramehr {

void CoTrainConfig::validate() const {
  if (beta < 0.f || beta > 1.f) throw UsageError("beta must be in [0,1]");
  if (lambda < 0.f) throw UsageError("lambda must be >= 0");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (epochs < 0) throw UsageError("epochs must be >= 0");
  if (threshold <= 0.f || threshold >= 1.f) throw UsageError("threshold must be in (0,1)");
  if (lr_aug <= 0.f || lr_local <= 0.f) throw UsageError("learning rates must be positive");
}

namespace {
constexpr double kClampLo = 1e-7, kClampHi = 1.0 - 1e-7;
}

double bce(const std::vector<float>& pred, const LabelVector& target) {
  if (pred.size() != target.size()) throw DataError("bce: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double p = std::clamp(static_cast<double>(pred[i]), kClampLo, kClampHi);
    double y = target[i] ? 1.0 : 0.0;
    s += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  }
  return s / static_cast<double>(pred.size());
}

double bernoulli_kl(const std::vector<float>& p, const std::vector<float>& q) {
  if (p.size() != q.size()) throw DataError("bernoulli_kl: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double pc = std::clamp(static_cast<double>(p[i]), kClampLo, kClampHi);
    double qc = std::clamp(static_cast<double>(q[i]), kClampLo, kClampHi);
    s += pc * std::log(pc / qc) + (1.0 - pc) * std::log((1.0 - pc) / (1.0 - qc));
  }
  return s / static_cast<double>(p.size());
}

Trainer::Trainer(Dataset train, Dataset val, Dataset test, const Vocabulary& vocab,
                 const TaskSpec& task, const SummaryCache& summaries, CoTrainConfig cfg,
                 HygtConfig local_cfg, TextEncoderConfig aug_cfg, TrainMode mode)
    : train_(std::move(train)),
      val_(std::move(val)),
      test_(std::move(test)),
      task_(task),
      cfg_(cfg),
      mode_(mode),
      opt_aug_(cfg.lr_aug),
      opt_local_(cfg.lr_local),
      shuffle_rng_(splitmix64(cfg.seed ^ 0x5bf0a8b1ULL)) {
  cfg_.validate();
  // transductive scope: the hypergraph spans train+val+test, losses use train
  for (const auto* part : {&train_, &val_, &test_})
    for (const auto& p : part->patients) full_.patients.push_back(p);
  graph_ = build_hypergraph(full_);

  HygtConfig lc = local_cfg;
  lc.seed = splitmix64(cfg.seed ^ 0x6c074a21ULL);
  local_.init(graph_, task_.num_labels, lc);
  TextEncoderConfig ac = aug_cfg;
  ac.seed = splitmix64(cfg.seed ^ 0x2f8d0e3bULL);
  aug_.init(task_.num_labels, ac);

  docs_.reserve(full_.size());
  edges_.reserve(full_.size());
  for (const auto& p : full_.patients) {
    docs_.push_back(flatten_all(p, summaries, vocab, task_.name, ac.tokenizer));
    edges_.push_back(graph_.edge_of.at(p.patient_id));
  }
}

std::vector<float> Trainer::forward_aug(const std::vector<int>& idx) const {
  auto* self = const_cast<Trainer*>(this);
  Tape<float> tape;
  std::vector<std::vector<FlattenedDoc>> batch_docs;
  for (int i : idx) batch_docs.push_back(docs_[i]);
  auto probs = aug_forward_probs(tape, self->aug_, batch_docs);
  return tape.val(probs).data;
}

std::vector<float> Trainer::forward_local(const std::vector<int>& idx) const {
  auto* self = const_cast<Trainer*>(this);
  Tape<float> tape;
  std::vector<int> batch_edges;
  for (int i : idx) batch_edges.push_back(edges_[i]);
  auto probs = hygt_forward_probs(tape, graph_, self->local_, batch_edges);
  return tape.val(probs).data;
}

std::pair<double, double> Trainer::cotrain_step(const std::vector<int>& idx) {
  const int L = task_.num_labels;
  std::vector<float> targets;
  targets.reserve(idx.size() * L);
  for (int i : idx)
    for (auto y : full_.patients[i].labels) targets.push_back(y ? 1.f : 0.f);

  const bool use_aug = mode_ != TrainMode::LocalOnly;
  const bool use_local = mode_ != TrainMode::AugOnly;

  double loss_aug_val = 0.0, loss_loc_val = 0.0;

  if (cfg_.couple_blend && mode_ == TrainMode::CoTrain) {
    // coupled variant: gradients flow through the blended target
    Tape<float> tape;
    std::vector<std::vector<FlattenedDoc>> batch_docs;
    std::vector<int> batch_edges;
    for (int i : idx) {
      batch_docs.push_back(docs_[i]);
      batch_edges.push_back(edges_[i]);
    }
    auto y1 = aug_forward_probs(tape, aug_, batch_docs);
    auto y2 = hygt_forward_probs(tape, graph_, local_, batch_edges);
    auto blend = tape.add(tape.scale(y1, cfg_.beta), tape.scale(y2, 1.f - cfg_.beta));
    auto loss_aug = tape.bce_loss(y1, targets);
    auto loss_loc = tape.bce_loss(y2, targets);
    if (cfg_.lambda > 0.f) {
      loss_aug = tape.add(loss_aug, tape.scale(tape.kl_div(y1, blend), cfg_.lambda));
      loss_loc = tape.add(loss_loc, tape.scale(tape.kl_div(y2, blend), cfg_.lambda));
    }
    loss_aug_val = tape.val(loss_aug).data[0];
    loss_loc_val = tape.val(loss_loc).data[0];
    auto total = tape.add(loss_aug, loss_loc);
    tape.backward(total);
    opt_aug_.step(aug_.params());
    opt_local_.step(local_.params());
  } else {
    // detached blended target: snapshot both predictions before any update
    Tape<float> tape_aug, tape_loc;
    typename Tape<float>::Ref y1_ref = -1, y2_ref = -1;
    std::vector<float> y1v, y2v;
    if (use_aug) {
      std::vector<std::vector<FlattenedDoc>> batch_docs;
      for (int i : idx) batch_docs.push_back(docs_[i]);
      y1_ref = aug_forward_probs(tape_aug, aug_, batch_docs);
      y1v = tape_aug.val(y1_ref).data;
    }
    if (use_local) {
      std::vector<int> batch_edges;
      for (int i : idx) batch_edges.push_back(edges_[i]);
      y2_ref = hygt_forward_probs(tape_loc, graph_, local_, batch_edges);
      y2v = tape_loc.val(y2_ref).data;
    }
    std::vector<float> blend;
    if (use_aug && use_local && cfg_.lambda > 0.f) {
      blend.resize(y1v.size());
      for (std::size_t i = 0; i < blend.size(); ++i)
        blend[i] = cfg_.beta * y1v[i] + (1.f - cfg_.beta) * y2v[i];
    }
    if (use_aug) {
      auto loss = tape_aug.bce_loss(y1_ref, targets);
      if (!blend.empty())
        loss = tape_aug.add(loss, tape_aug.scale(tape_aug.kl_const(y1_ref, blend), cfg_.lambda));
      loss_aug_val = tape_aug.val(loss).data[0];
      tape_aug.backward(loss);
      opt_aug_.step(aug_.params());
    }
    if (use_local) {
      auto loss = tape_loc.bce_loss(y2_ref, targets);
      if (!blend.empty())
        loss = tape_loc.add(loss, tape_loc.scale(tape_loc.kl_const(y2_ref, blend), cfg_.lambda));
      loss_loc_val = tape_loc.val(loss).data[0];
      tape_loc.backward(loss);
      opt_local_.step(local_.params());
    }
  }

  if (!std::isfinite(loss_aug_val) || !std::isfinite(loss_loc_val))
    throw NumericError("non-finite loss at training step " + std::to_string(step_counter_));
  ++step_counter_;
  return {loss_aug_val, loss_loc_val};
}

double Trainer::val_auroc() const {
  if (val_.size() == 0) return 0.0;
  auto rep = const_cast<Trainer*>(this)->evaluate(val_);
  return rep.auroc;
}

std::vector<TrainLogEntry> Trainer::train() {
  std::vector<TrainLogEntry> log;
  std::vector<int> train_idx(train_.size());
  std::iota(train_idx.begin(), train_idx.end(), 0);  // train_ records lead full_
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng_);
    std::size_t num_batches = (train_idx.size() + cfg_.batch_size - 1) / cfg_.batch_size;
    for (std::size_t b = 0; b < num_batches; ++b) {
      std::vector<int> batch(
          train_idx.begin() + b * cfg_.batch_size,
          train_idx.begin() + std::min(train_idx.size(), (b + 1) * cfg_.batch_size));
      auto [la, ll] = cotrain_step(batch);
      TrainLogEntry entry{epoch, static_cast<int>(b), la, ll, std::nullopt};
      if (b + 1 == num_batches) entry.val_auroc = val_auroc();
      log.push_back(entry);
    }
  }
  return log;
}

std::vector<PredictionPair> Trainer::predict_indices(const std::vector<int>& idx) const {
  const int L = task_.num_labels;
  std::vector<PredictionPair> out(idx.size());
  for (std::size_t start = 0; start < idx.size();
       start += static_cast<std::size_t>(cfg_.batch_size)) {
    std::vector<int> chunk(idx.begin() + start,
                           idx.begin() + std::min(idx.size(), start + cfg_.batch_size));
    std::vector<float> y1, y2;
    if (mode_ != TrainMode::LocalOnly) y1 = forward_aug(chunk);
    if (mode_ != TrainMode::AugOnly) y2 = forward_local(chunk);
    if (y1.empty()) y1.assign(chunk.size() * L, 0.f);
    if (y2.empty()) y2.assign(chunk.size() * L, 0.f);
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      PredictionPair& pp = out[start + r];
      pp.y1.assign(y1.begin() + r * L, y1.begin() + (r + 1) * L);
      pp.y2.assign(y2.begin() + r * L, y2.begin() + (r + 1) * L);
      pp.y_blend.resize(L);
      float beta = cfg_.beta;
      if (mode_ == TrainMode::AugOnly) beta = 1.f;
      if (mode_ == TrainMode::LocalOnly) beta = 0.f;
      for (int l = 0; l < L; ++l)
        pp.y_blend[l] = beta * pp.y1[l] + (1.f - beta) * pp.y2[l];
      pp.hard.resize(L);
      for (int l = 0; l < L; ++l)
        pp.hard[l] = pp.y_blend[l] >= cfg_.threshold ? 1 : 0;
    }
  }
  return out;
}

PredictionPair Trainer::infer(const PatientRecord& p) const {
  auto it = graph_.edge_of.find(p.patient_id);
  if (it == graph_.edge_of.end()) throw DataError("unknown patient: " + p.patient_id);
  // locate the record in the transductive pool
  for (std::size_t i = 0; i < full_.size(); ++i) {
    if (full_.patients[i].patient_id == p.patient_id)
      return predict_indices({static_cast<int>(i)})[0];
  }
  throw DataError("unknown patient: " + p.patient_id);
}

std::vector<PredictionPair> Trainer::predict(const Dataset& ds) const {
  std::vector<int> idx;
  std::unordered_map<std::string, int> pos;
  for (std::size_t i = 0; i < full_.size(); ++i) pos[full_.patients[i].patient_id] = i;
  for (const auto& p : ds.patients) {
    auto it = pos.find(p.patient_id);
    if (it == pos.end()) throw DataError("unknown patient: " + p.patient_id);
    idx.push_back(it->second);
  }
  return predict_indices(idx);
}

EvalReport Trainer::evaluate(const Dataset& ds) const {
  auto preds = predict(ds);
  std::vector<std::vector<float>> scores;
  std::vector<LabelVector> labels;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    scores.push_back(preds[i].y_blend);
    labels.push_back(ds.patients[i].labels);
  }
  return ramehr::evaluate(scores, labels, task_.label_names, cfg_.threshold);
}

void Trainer::save_checkpoints(const std::string& aug_path, const std::string& local_path) {
  std::vector<const Parameter<float>*> aug_params, local_params;
  for (auto* p : aug_.params()) aug_params.push_back(p);
  for (auto* p : local_.params()) local_params.push_back(p);
  save_checkpoint(aug_path, aug_params);
  save_checkpoint(local_path, local_params);
}

void Trainer::load_checkpoints(const std::string& aug_path, const std::string& local_path) {
  load_checkpoint(aug_path, aug_.params());
  load_checkpoint(local_path, local_.params());
}

void Trainer::write_log_csv(const std::vector<TrainLogEntry>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training log: " + path);
  out << "epoch,step,loss_aug,loss_loc,val_auroc\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << e.step << ',' << e.loss_aug << ',' << e.loss_loc << ',';
    if (e.val_auroc) out << *e.val_auroc;
    out << '\n';
  }
}

CoTrainConfig select_hyperparams(
    const HyperGrid& grid, CoTrainConfig base,
    const std::function<double(const CoTrainConfig&)>& val_auroc_for) {
  if (grid.betas.empty() || grid.lambdas.empty())
    throw UsageError("hyperparameter grid must be nonempty");
  CoTrainConfig best = base;
  double best_score = -1.0;
  bool first = true;
  // iterate smaller lambda then smaller beta so strict improvement keeps ties
  std::vector<float> lambdas = grid.lambdas, betas = grid.betas;
  std::sort(lambdas.begin(), lambdas.end());
  std::sort(betas.begin(), betas.end());
  for (float lambda : lambdas) {
    for (float beta : betas) {
      CoTrainConfig cfg = base;
      cfg.beta = beta;
      cfg.lambda = lambda;
      double score = val_auroc_for(cfg);
      if (first || score > best_score) {
        best = cfg;
        best_score = score;
        first = false;
      }
    }
  }
  return best;
}

}  // namespace ramehr
