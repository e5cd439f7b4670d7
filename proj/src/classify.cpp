#include "boxfit/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "boxfit/rng.hpp"

namespace boxfit {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<double> featurize(const DistanceGrid& grid) {
    constexpr int kPooled = 8;
    if (grid.nx < 1 || grid.ny < 1 || grid.nz < 1) throw ValidationError("featurize: empty grid");
    if (!(grid.truncation > 0.0)) throw ValidationError("featurize: grid truncation must be > 0");

    auto window = [](int n) { return (n + kPooled - 1) / kPooled; };
    int wx = window(grid.nx), wy = window(grid.ny), wz = window(grid.nz);

    std::vector<double> out(kPooled * kPooled * kPooled, 0.0);
    for (int K = 0; K < kPooled; ++K)
        for (int J = 0; J < kPooled; ++J)
            for (int I = 0; I < kPooled; ++I) {
                double m = 0.0;
                bool any = false;
                for (int k = K * wz; k < std::min((K + 1) * wz, grid.nz); ++k)
                    for (int j = J * wy; j < std::min((J + 1) * wy, grid.ny); ++j)
                        for (int i = I * wx; i < std::min((I + 1) * wx, grid.nx); ++i) {
                            m = any ? std::max(m, grid.at(i, j, k)) : grid.at(i, j, k);
                            any = true;
                        }
                out[std::size_t(K * kPooled + J) * kPooled + I] = m / grid.truncation;
            }
    return out;
}

MlpModel init_model(const std::vector<int>& layer_sizes, std::uint64_t seed, double dropout_rate) {
    if (layer_sizes.size() < 2) throw ValidationError("init_model: need at least input and output layers");
    for (int s : layer_sizes)
        if (s < 1) throw ValidationError("init_model: layer sizes must be positive");

    MlpModel model;
    model.layer_sizes = layer_sizes;
    model.dropout_rate = dropout_rate;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        int in = layer_sizes[l], out = layer_sizes[l + 1];
        double scale = 1.0 / std::sqrt(double(in));
        MatrixXd w(out, in);
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c) w(r, c) = rng.uniform(-scale, scale);
        model.weights.push_back(std::move(w));
        model.biases.push_back(VectorXd::Zero(out));
    }
    return model;
}

namespace {

VectorXd softmax(const VectorXd& logits) {
    VectorXd shifted = logits.array() - logits.maxCoeff();
    VectorXd e = shifted.array().exp();
    return e / e.sum();
}

}  // namespace

std::vector<double> predict(const MlpModel& model, const std::vector<double>& features) {
    if (int(features.size()) != model.input_dim())
        throw ValidationError("predict: feature dimension does not match model input");
    VectorXd a = Eigen::Map<const VectorXd>(features.data(), features.size());
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        a = model.weights[l] * a + model.biases[l];
        if (l + 1 < model.weights.size()) a = a.cwiseMax(0.0);
    }
    VectorXd p = softmax(a);
    return {p.data(), p.data() + p.size()};
}

std::vector<double> predict(const MlpModel& model, const DistanceGrid& grid) {
    return predict(model, featurize(grid));
}

std::vector<int> top_k(const std::vector<double>& probabilities, int k) {
    if (k < 1 || k > int(probabilities.size()))
        throw ValidationError("top_k: k must be in [1, N_C]");
    std::vector<int> ids(probabilities.size());
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(),
                     [&](int a, int b) { return probabilities[a] > probabilities[b]; });
    ids.resize(k);
    return ids;
}

double mlp_backprop(const MlpModel& model, const std::vector<Sample>& batch, MlpGradients& grads,
                    const std::vector<std::vector<VectorXd>>* dropout_masks) {
    if (batch.empty()) throw ValidationError("mlp_backprop: empty batch");
    std::size_t layers = model.weights.size();
    grads.weights.clear();
    grads.biases.clear();
    for (std::size_t l = 0; l < layers; ++l) {
        grads.weights.push_back(MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols()));
        grads.biases.push_back(VectorXd::Zero(model.biases[l].size()));
    }

    double loss = 0.0;
    double inv_batch = 1.0 / double(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const Sample& sample = batch[s];
        if (int(sample.features.size()) != model.input_dim())
            throw ValidationError("mlp_backprop: feature dimension mismatch");
        if (sample.label < 0 || sample.label >= model.output_dim())
            throw ValidationError("mlp_backprop: label out of range");

        std::vector<VectorXd> activations;  // a_0 .. a_L
        std::vector<VectorXd> pre;          // z_1 .. z_L
        activations.push_back(Eigen::Map<const VectorXd>(sample.features.data(), sample.features.size()));
        for (std::size_t l = 0; l < layers; ++l) {
            VectorXd z = model.weights[l] * activations.back() + model.biases[l];
            pre.push_back(z);
            if (l + 1 < layers) {
                VectorXd a = z.cwiseMax(0.0);
                if (dropout_masks) a = a.cwiseProduct((*dropout_masks)[s][l]);
                activations.push_back(a);
            } else {
                activations.push_back(z);
            }
        }
        VectorXd p = softmax(activations.back());
        loss += -std::log(std::max(p[sample.label], 1e-300)) * inv_batch;

        VectorXd delta = p * inv_batch;
        delta[sample.label] -= inv_batch;
        for (std::size_t l = layers; l-- > 0;) {
            grads.weights[l] += delta * activations[l].transpose();
            grads.biases[l] += delta;
            if (l == 0) break;
            VectorXd da = model.weights[l].transpose() * delta;
            if (dropout_masks) da = da.cwiseProduct((*dropout_masks)[s][l - 1]);
            delta = da.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }
    return loss;
}

TrainStats train(MlpModel& model, const std::vector<Sample>& dataset, const TrainConfig& config,
                 const std::function<std::vector<Sample>(int epoch)>& regenerate) {
    if (dataset.empty() && !(config.augment && regenerate)) throw ValidationError("train: empty dataset");
    if (!(config.learning_rate >= 0.0)) throw ValidationError("train: learning_rate must be >= 0");
    if (config.batch_size < 1) throw ValidationError("train: batch_size must be >= 1");

    Rng rng(config.seed);
    TrainStats stats;
    std::size_t hidden_layers = model.weights.size() - 1;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const std::vector<Sample>& data =
            (config.augment && regenerate) ? regenerate(epoch) : dataset;
        if (data.empty()) throw ValidationError("train: empty epoch dataset");
        for (const auto& s : data)
            if (s.label < 0 || s.label >= model.output_dim())
                throw ValidationError("train: label out of range");

        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_index(i)]);

        double epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<Sample> batch;
            for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);

            std::vector<std::vector<VectorXd>> masks(batch.size());
            double keep = 1.0 - model.dropout_rate;
            for (auto& per_sample : masks)
                for (std::size_t l = 0; l < hidden_layers; ++l) {
                    VectorXd m(model.layer_sizes[l + 1]);
                    for (int i = 0; i < m.size(); ++i)
                        m[i] = (rng.uniform() < model.dropout_rate) ? 0.0 : 1.0 / keep;
                    per_sample.push_back(std::move(m));
                }

            MlpGradients grads;
            epoch_loss += mlp_backprop(model, batch, grads, hidden_layers > 0 ? &masks : nullptr);
            ++batches;
            for (std::size_t l = 0; l < model.weights.size(); ++l) {
                model.weights[l] -= config.learning_rate * grads.weights[l];
                model.biases[l] -= config.learning_rate * grads.biases[l];
            }
        }
        stats.loss.push_back(epoch_loss / std::max(batches, 1));

        int correct = 0;
        for (const auto& s : data) {
            auto p = predict(model, s.features);
            int arg = int(std::max_element(p.begin(), p.end()) - p.begin());
            if (arg == s.label) ++correct;
        }
        stats.accuracy.push_back(double(correct) / double(data.size()));
    }
    return stats;
}

void save_model(const std::filesystem::path& path, const MlpModel& model) {
    nlohmann::json j;
    j["format"] = "boxfit-mlp";
    j["version"] = 1;
    j["layer_sizes"] = model.layer_sizes;
    j["dropout_rate"] = model.dropout_rate;
    j["weights"] = nlohmann::json::array();
    j["biases"] = nlohmann::json::array();
    for (const auto& w : model.weights) {
        std::vector<double> flat(w.size());
        for (int r = 0; r < w.rows(); ++r)
            for (int c = 0; c < w.cols(); ++c) flat[std::size_t(r) * w.cols() + c] = w(r, c);
        j["weights"].push_back(flat);
    }
    for (const auto& b : model.biases) j["biases"].push_back(std::vector<double>(b.data(), b.data() + b.size()));
    std::ofstream out(path);
    if (!out) throw IoError("cannot write model: " + path.string());
    out << j.dump() << '\n';
}

MlpModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
        if (j.value("format", "") != "boxfit-mlp") throw IoError(path.string() + ": not a model document");
        MlpModel model;
        model.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
        model.dropout_rate = j.at("dropout_rate").get<double>();
        auto weights = j.at("weights").get<std::vector<std::vector<double>>>();
        auto biases = j.at("biases").get<std::vector<std::vector<double>>>();
        if (weights.size() + 1 != model.layer_sizes.size() || biases.size() != weights.size())
            throw IoError(path.string() + ": layer count mismatch");
        for (std::size_t l = 0; l < weights.size(); ++l) {
            int in_dim = model.layer_sizes[l], out_dim = model.layer_sizes[l + 1];
            if (int(weights[l].size()) != in_dim * out_dim || int(biases[l].size()) != out_dim)
                throw IoError(path.string() + ": weight dimension mismatch");
            MatrixXd w(out_dim, in_dim);
            for (int r = 0; r < out_dim; ++r)
                for (int c = 0; c < in_dim; ++c) w(r, c) = weights[l][std::size_t(r) * in_dim + c];
            model.weights.push_back(std::move(w));
            model.biases.push_back(Eigen::Map<const VectorXd>(biases[l].data(), out_dim));
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("model parse error in " + path.string() + ": " + e.what());
    }
}

}  // namespace boxfit
