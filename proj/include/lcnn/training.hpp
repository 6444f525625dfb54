#pragma once

#include <string>
#include <vector>

#include "lcnn/data.hpp"
#include "lcnn/models.hpp"

namespace lcnn::train {

// Mean over the batch of -log softmax(logits)[label]; max-subtracted so huge
// logits cannot overflow.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
// Fraction of rows whose argmax matches the label.
double accuracy(const Tensor& logits, const std::vector<int>& labels);

struct OptimizerConfig {
    std::string kind = "adam";  // sgd | adam
    double lr = 1e-3;
    double momentum = 0.0;  // sgd
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;  // adam
    double weight_decay = 0.0;  // additive L2 gradient term
    double clip_norm = 10.0;    // global gradient-norm clip; 0 disables

    void validate() const;
};

// Euclidean-reparameterized updates: every parameter (including BN beta-space
// and gamma-raw) steps like a plain Euclidean tensor.
class Optimizer {
public:
    Optimizer(OptimizerConfig cfg, std::vector<nn::ParamRef> params);
    void step();  // consumes .grad() on each parameter
    void zero_grad();
    double lr() const { return cfg_.lr; }
    void set_lr(double lr);
    const OptimizerConfig& config() const { return cfg_; }
    int64_t steps_taken() const { return t_; }

private:
    OptimizerConfig cfg_;
    std::vector<nn::ParamRef> params_;
    std::vector<std::vector<double>> m_, v_;  // moment buffers, one per param
    int64_t t_ = 0;
};

struct TrainConfig {
    int epochs = 5;
    int64_t batch_size = 32;
    uint64_t seed = 1;  // epoch shuffle seed
    std::vector<int> lr_drop_epochs;  // 1-indexed epochs where lr steps down
    double lr_drop_factor = 0.1;
    bool shuffle_each_epoch = true;
    bool verbose = false;

    void validate() const;
};

struct EpochMetrics {
    int epoch;
    std::string split;  // "train" | "test"
    double loss;
    double accuracy;
    double wall_seconds;
};

struct RunRecord {
    std::vector<EpochMetrics> epochs;
    double total_wall_seconds = 0.0;
    double final_train_loss = 0.0;
    double final_train_accuracy = 0.0;
    double final_eval_loss = 0.0;
    double final_eval_accuracy = 0.0;
    bool has_eval = false;
};

// "epoch,split,loss,accuracy,wall_seconds" rows.
std::string metrics_csv(const std::vector<EpochMetrics>& rows);

// Loss/accuracy over a dataset in eval mode; never mutates model state.
std::pair<double, double> evaluate(models::Model& model, const data::Dataset& set,
                                   int64_t batch_size);

// One full run. BN layers see train mode during updates and eval mode during
// metric passes. A non-finite loss aborts with NonFiniteError naming the
// epoch/batch and dumping per-parameter norms.
RunRecord train(models::Model& model, const data::Dataset& train_set,
                const data::Dataset* eval_set, const OptimizerConfig& ocfg,
                const TrainConfig& tcfg);

// Checkpoint: "LCKP" magic, version, config digest, named f32 tensors
// (little-endian), CRC32 trailer. Payloads are f32 regardless of model dtype,
// so f64 models round-trip through single precision. Rejects version/
// architecture/shape mismatches and corrupt payloads.
uint64_t config_digest(models::Model& model);
void save_checkpoint(models::Model& model, const std::string& path);
void load_checkpoint(models::Model& model, const std::string& path);

}  // namespace lcnn::train
