#include "cavlab/model.hpp"

#include <algorithm>

namespace cavlab {

ModelConfig ModelConfig::preset(const std::string& name) {
    ModelConfig cfg;
    if (name == "simple") cfg.channels = {64, 64, 64, 64, 64, 64};
    else if (name == "standard") cfg.channels = {64, 64, 64, 128, 128, 128};
    else if (name == "spatial") cfg.channels = {64, 64, 128, 256, 256, 256};
    else throw ConfigError("unknown model preset '" + name + "'");
    return cfg;
}

int parse_layer(const std::string& name) {
    const std::string prefix = "layers.";
    if (name.rfind(prefix, 0) == 0) {
        try {
            size_t used = 0;
            int b = std::stoi(name.substr(prefix.size()), &used);
            if (used == name.size() - prefix.size() && b >= 0) return b;
        } catch (const std::exception&) {
        }
    }
    throw ConfigError("bad layer name '" + name + "', expected layers.<N>");
}

std::vector<int> eligible_layers(const ModelConfig& cfg, const std::vector<int>& excluded) {
    std::vector<int> out;
    for (int b = 0; b < cfg.blocks(); ++b) {
        // relu of any later block, or the optional head relu, is downstream
        bool downstream_nonlinearity = b + 1 < cfg.blocks() || cfg.head_relu;
        if (!downstream_nonlinearity) continue;
        if (std::find(excluded.begin(), excluded.end(), b) != excluded.end()) continue;
        out.push_back(b);
    }
    return out;
}

Network init_network(const ModelConfig& cfg, uint64_t seed) {
    Network net;
    net.cfg = cfg;
    Rng rng = Rng::stream(seed, "init");
    int cin = 3;
    for (int b = 0; b < cfg.blocks(); ++b) {
        int cout = cfg.channels[size_t(b)];
        ConvBlockT<float> blk;
        blk.w.resize(9 * cin, cout);
        float std = std::sqrt(2.0f / float(9 * cin)); // kaiming, fan-in
        for (Eigen::Index i = 0; i < blk.w.rows(); ++i)
            for (Eigen::Index j = 0; j < blk.w.cols(); ++j)
                blk.w(i, j) = std * float(rng.normal());
        blk.b = VecF::Zero(cout);
        blk.bn_gamma = VecF::Ones(cout);
        blk.bn_beta = VecF::Zero(cout);
        blk.bn_mean = VecF::Zero(cout);
        blk.bn_var = VecF::Ones(cout);
        net.blocks.push_back(std::move(blk));
        cin = cout;
    }
    net.head_w.resize(cfg.num_classes, cin);
    float std = std::sqrt(2.0f / float(cin));
    for (Eigen::Index i = 0; i < net.head_w.rows(); ++i)
        for (Eigen::Index j = 0; j < net.head_w.cols(); ++j)
            net.head_w(i, j) = std * float(rng.normal());
    net.head_b = VecF::Zero(cfg.num_classes);
    return net;
}

} // namespace cavlab
