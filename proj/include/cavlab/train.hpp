#pragma once
#include <functional>
#include <string>
#include <vector>

#include "cavlab/elements.hpp"
#include "cavlab/model.hpp"

namespace cavlab {

struct TrainConfig {
    int batch_size = 64;
    double lr = 1e-3;
    int max_epochs = 100;
    double accuracy_threshold = 0.9999; // running train accuracy that counts as converged
    double time_budget_s = 0;           // 0 = unlimited
    uint64_t seed = 1;
    double bn_momentum = 0.1;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
};

struct EpochStats {
    int epoch = 0;
    double loss = 0;
    double train_accuracy = 0;
    double val_accuracy = 0;
};

struct TrainLog {
    std::vector<EpochStats> epochs;
    bool converged = false;
    bool warning = false;
    std::string note;
};

// rendered images quantized to uint8; pixel = byte/255 reproduces render_scene exactly
struct LabelledImages {
    int side = 0;
    int num_classes = 0;
    std::vector<std::vector<uint8_t>> pixels; // side*side*3 bytes each
    std::vector<std::vector<uint8_t>> labels;
    size_t count() const { return pixels.size(); }
};

std::vector<uint8_t> quantize_image(const TensorF& img);

template <typename T>
Tensor3<T> image_from_bytes(const std::vector<uint8_t>& bytes, int side) {
    Tensor3<T> img(side, side, 3);
    for (size_t i = 0; i < bytes.size(); ++i) img.data[i] = T(bytes[i]) / T(255);
    return img;
}

// renders dataset images [first, first+count) with their multi-hot labels
LabelledImages materialize(const DatasetConfig& cfg, const ClassTable& table, long first,
                           long count);

// per-(image, class) accuracy at logit threshold 0, evaluation mode
double evaluate_accuracy(const Network& net, const LabelledImages& data);

TrainLog train_network(Network& net, const LabelledImages& train, const LabelledImages& val,
                       const TrainConfig& cfg,
                       const std::function<void(const EpochStats&)>& on_epoch = {});

} // namespace cavlab
