#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cavlab/train.hpp"

using namespace cavlab;

namespace {

DatasetConfig tiny_data(uint64_t seed = 3) {
    DatasetConfig cfg = DatasetConfig::simple();
    cfg.scale_to_side(32);
    cfg.elements_per_image = 2;
    cfg.seed = seed;
    return cfg;
}

ModelConfig tiny_model(int classes) {
    ModelConfig cfg;
    cfg.channels = {8, 8, 8, 8};
    cfg.input_side = 32;
    cfg.num_classes = classes;
    return cfg;
}

} // namespace

TEST_CASE("quantized bytes reproduce the rendered image exactly") {
    DatasetConfig cfg = tiny_data();
    TensorF img = render_scene(dataset_scene(cfg, 0), cfg.image_side);
    std::vector<uint8_t> bytes = quantize_image(img);
    REQUIRE(bytes.size() == img.data.size());
    TensorF back = image_from_bytes<float>(bytes, cfg.image_side);
    for (size_t i = 0; i < img.data.size(); ++i) CHECK(back.data[i] == img.data[i]);
}

TEST_CASE("materialize is deterministic and labels match assign_classes") {
    DatasetConfig cfg = tiny_data();
    ClassTable table = ClassTable::build(cfg);
    LabelledImages a = materialize(cfg, table, 0, 12);
    LabelledImages b = materialize(cfg, table, 0, 12);
    REQUIRE(a.count() == 12);
    CHECK(a.side == 32);
    CHECK(a.num_classes == int(table.classes.size()));
    for (size_t i = 0; i < a.count(); ++i) {
        CHECK(a.pixels[i] == b.pixels[i]);
        CHECK(a.labels[i] == b.labels[i]);
        std::vector<uint8_t> expect =
            assign_classes(dataset_scene(cfg, long(i)), table, cfg.image_side);
        CHECK(a.labels[i] == expect);
    }
    // disjoint offsets give different images
    LabelledImages c = materialize(cfg, table, 12, 1);
    CHECK(c.pixels[0] != a.pixels[0]);
}

TEST_CASE("accuracy is the per-(image, class) agreement at logit zero") {
    DatasetConfig cfg = tiny_data();
    ClassTable table = ClassTable::build(cfg);
    LabelledImages data = materialize(cfg, table, 0, 24);
    Network net = init_network(tiny_model(data.num_classes), 9);
    double acc = evaluate_accuracy(net, data);

    double correct = 0, total = 0;
    for (size_t i = 0; i < data.count(); ++i) {
        TensorF img = image_from_bytes<float>(data.pixels[i], data.side);
        VecF out = logits(net, img);
        for (int k = 0; k < data.num_classes; ++k) {
            bool pred = out[k] > 0.0f;
            correct += pred == bool(data.labels[i][size_t(k)]) ? 1 : 0;
            total += 1;
        }
    }
    CHECK(acc == doctest::Approx(correct / total).epsilon(1e-12));
}

TEST_CASE("zero epochs leaves the net untrained and warns") {
    DatasetConfig cfg = tiny_data();
    ClassTable table = ClassTable::build(cfg);
    LabelledImages train = materialize(cfg, table, 0, 8);
    Network net = init_network(tiny_model(train.num_classes), 4);
    Network before = net;
    TrainConfig tc;
    tc.max_epochs = 0;
    TrainLog log = train_network(net, train, train, tc);
    CHECK(log.epochs.empty());
    CHECK_FALSE(log.converged);
    CHECK(log.warning);
    CHECK_FALSE(log.note.empty());
    CHECK(net.head_w == before.head_w);
    CHECK(net.blocks[0].w == before.blocks[0].w);
}

TEST_CASE("training is deterministic for a fixed seed") {
    DatasetConfig cfg = tiny_data();
    ClassTable table = ClassTable::build(cfg);
    LabelledImages train = materialize(cfg, table, 0, 16);
    TrainConfig tc;
    tc.max_epochs = 2;
    tc.batch_size = 8;

    Network n1 = init_network(tiny_model(train.num_classes), 4);
    Network n2 = init_network(tiny_model(train.num_classes), 4);
    TrainLog l1 = train_network(n1, train, train, tc);
    TrainLog l2 = train_network(n2, train, train, tc);
    REQUIRE(l1.epochs.size() == l2.epochs.size());
    for (size_t e = 0; e < l1.epochs.size(); ++e) {
        CHECK(l1.epochs[e].loss == l2.epochs[e].loss);
        CHECK(l1.epochs[e].train_accuracy == l2.epochs[e].train_accuracy);
    }
    CHECK(n1.head_w == n2.head_w);
    for (size_t b = 0; b < n1.blocks.size(); ++b) {
        CHECK(n1.blocks[b].w == n2.blocks[b].w);
        CHECK(n1.blocks[b].bn_mean == n2.blocks[b].bn_mean);
    }

    TrainConfig other = tc;
    other.seed = 99;
    Network n3 = init_network(tiny_model(train.num_classes), 4);
    train_network(n3, train, train, other);
    CHECK(n1.head_w != n3.head_w);
}

TEST_CASE("training reduces the loss and updates batchnorm statistics") {
    DatasetConfig cfg = tiny_data();
    ClassTable table = ClassTable::build(cfg);
    LabelledImages train = materialize(cfg, table, 0, 32);
    Network net = init_network(tiny_model(train.num_classes), 7);
    float var0 = net.blocks[0].bn_var[0];
    TrainConfig tc;
    tc.max_epochs = 6;
    tc.batch_size = 8;
    int seen = 0;
    TrainLog log = train_network(net, train, train, tc,
                                 [&](const EpochStats& s) { seen = s.epoch + 1; });
    REQUIRE(log.epochs.size() == 6);
    CHECK(seen == 6);
    CHECK(log.epochs.back().loss < log.epochs.front().loss);
    CHECK(net.blocks[0].bn_var[0] != var0); // running stats moved
    for (const EpochStats& e : log.epochs) {
        CHECK(std::isfinite(e.loss));
        CHECK(e.val_accuracy >= 0.0);
        CHECK(e.val_accuracy <= 1.0);
    }
}

TEST_CASE("a tiny net overfits a handful of images") {
    // single bright concept per class keeps this cheap: 8 images, binary labels
    DatasetConfig cfg = tiny_data(11);
    cfg.elements_per_image = 1;
    ClassTable table = ClassTable::build(cfg);
    LabelledImages train = materialize(cfg, table, 0, 8);
    Network net = init_network(tiny_model(train.num_classes), 1);
    TrainConfig tc;
    tc.max_epochs = 250;
    tc.lr = 3e-3;
    tc.batch_size = 4;
    tc.accuracy_threshold = 0.99;
    TrainLog log = train_network(net, train, train, tc);
    CHECK(log.epochs.back().train_accuracy > 0.97);
    CHECK(evaluate_accuracy(net, train) > 0.95);
    if (log.converged) CHECK_FALSE(log.warning);
}

TEST_CASE("evaluation mode is frozen: repeated evaluations agree") {
    DatasetConfig cfg = tiny_data();
    ClassTable table = ClassTable::build(cfg);
    LabelledImages data = materialize(cfg, table, 0, 6);
    Network net = init_network(tiny_model(data.num_classes), 5);
    TrainConfig tc;
    tc.max_epochs = 1;
    train_network(net, data, data, tc);
    double a = evaluate_accuracy(net, data);
    double b = evaluate_accuracy(net, data);
    CHECK(a == b);
    TensorF img = image_from_bytes<float>(data.pixels[0], data.side);
    VecF l1 = logits(net, img);
    VecF l2 = logits(net, img);
    CHECK(l1 == l2);
}

TEST_CASE("time budget stops training early with a warning") {
    DatasetConfig cfg = tiny_data();
    ClassTable table = ClassTable::build(cfg);
    LabelledImages train = materialize(cfg, table, 0, 32);
    Network net = init_network(tiny_model(train.num_classes), 8);
    TrainConfig tc;
    tc.max_epochs = 10000;
    tc.time_budget_s = 0.05;
    TrainLog log = train_network(net, train, train, tc);
    CHECK(log.epochs.size() < 10000);
    CHECK_FALSE(log.converged);
    CHECK(log.warning);
}
