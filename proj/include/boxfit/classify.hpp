#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "boxfit/geometry.hpp"

namespace boxfit {

/// Fully connected classifier over pooled distance-grid features.
/// ReLU hidden layers, softmax output, inverted dropout while training.
struct MlpModel {
    std::vector<int> layer_sizes;           // input, hidden..., output (N_C)
    std::vector<Eigen::MatrixXd> weights;   // [out x in] per layer
    std::vector<Eigen::VectorXd> biases;
    double dropout_rate = 0.2;
    std::string version = "boxfit-mlp-1";

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
};

/// Max-pools the grid to 8x8x8 and flattens (x-fastest), values scaled to
/// [0,1] by the truncation distance. Feature dim is 512.
std::vector<double> featurize(const DistanceGrid& grid);

/// Seeded init: uniform in +-1/sqrt(fan_in), biases zero.
MlpModel init_model(const std::vector<int>& layer_sizes, std::uint64_t seed, double dropout_rate = 0.2);

/// Forward pass with dropout disabled; softmax probabilities (sum to 1).
std::vector<double> predict(const MlpModel& model, const std::vector<double>& features);
std::vector<double> predict(const MlpModel& model, const DistanceGrid& grid);

/// k distinct class ids in descending probability (index-ascending ties).
std::vector<int> top_k(const std::vector<double>& probabilities, int k);

struct TrainConfig {
    double learning_rate = 0.05;
    int batch_size = 32;
    int epochs = 100;
    std::uint64_t seed = 0;
    bool augment = false;  // when set, `regenerate` is called before each epoch
};

struct Sample {
    std::vector<double> features;
    int label = 0;
};

struct TrainStats {
    std::vector<double> loss;      // mean cross-entropy per epoch
    std::vector<double> accuracy;  // training accuracy per epoch
};

/// Minibatch SGD on cross-entropy with inverted dropout on hidden layers.
/// With config.augment, `regenerate(epoch)` supplies each epoch's dataset.
TrainStats train(MlpModel& model, const std::vector<Sample>& dataset, const TrainConfig& config,
                 const std::function<std::vector<Sample>(int epoch)>& regenerate = nullptr);

struct MlpGradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

/// Mean cross-entropy over the batch and its gradients. Optional dropout
/// masks: one vector per hidden layer, applied multiplicatively to the
/// activations (inverted-dropout scaling already baked in by the caller).
double mlp_backprop(const MlpModel& model, const std::vector<Sample>& batch, MlpGradients& grads,
                    const std::vector<std::vector<Eigen::VectorXd>>* dropout_masks = nullptr);

void save_model(const std::filesystem::path& path, const MlpModel& model);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace boxfit
