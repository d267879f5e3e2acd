#include "cavlab/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "json.hpp"

#include "cavlab/errors.hpp"

namespace cavlab {

namespace {

constexpr uint32_t kNetMagic = 0x574e5643; // "CVNW"
constexpr uint32_t kNetVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<uint32_t>(f)); }
float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& is) {
    uint32_t n = get_u32(is);
    if (!is || n > (1u << 20)) throw ArtifactError("corrupt string field in checkpoint");
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

void put_tensor(std::ostream& os, const std::string& name, const float* data, uint32_t rows,
                uint32_t cols) {
    put_str(os, name);
    put_u32(os, rows);
    put_u32(os, cols);
    for (uint64_t i = 0; i < static_cast<uint64_t>(rows) * cols; ++i) put_f32(os, data[i]);
}

struct NamedTensor {
    uint32_t rows = 0, cols = 0;
    std::vector<float> data;
};

NamedTensor get_tensor(std::istream& is, std::string& name) {
    name = get_str(is);
    NamedTensor t;
    t.rows = get_u32(is);
    t.cols = get_u32(is);
    uint64_t n = static_cast<uint64_t>(t.rows) * t.cols;
    if (!is || n > (1u << 28)) throw ArtifactError("corrupt tensor header for " + name);
    t.data.resize(n);
    for (uint64_t i = 0; i < n; ++i) t.data[i] = get_f32(is);
    if (!is) throw ArtifactError("truncated tensor data for " + name);
    return t;
}

} // namespace

void save_network(const std::string& path, const Network& net) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ArtifactError("cannot open " + path + " for writing");
    put_u32(os, kNetMagic);
    put_u32(os, kNetVersion);

    nlohmann::json cfg;
    cfg["channels"] = net.cfg.channels;
    cfg["input_side"] = net.cfg.input_side;
    cfg["num_classes"] = net.cfg.num_classes;
    cfg["head_relu"] = net.cfg.head_relu;
    cfg["bn_eps"] = net.cfg.bn_eps;
    put_str(os, cfg.dump());

    uint32_t count = static_cast<uint32_t>(net.blocks.size() * 6 + 2);
    put_u32(os, count);
    for (size_t b = 0; b < net.blocks.size(); ++b) {
        const auto& blk = net.blocks[b];
        std::string p = "blocks." + std::to_string(b) + ".";
        put_tensor(os, p + "w", blk.w.data(), static_cast<uint32_t>(blk.w.rows()),
                   static_cast<uint32_t>(blk.w.cols()));
        put_tensor(os, p + "b", blk.b.data(), static_cast<uint32_t>(blk.b.size()), 1);
        put_tensor(os, p + "bn_gamma", blk.bn_gamma.data(), static_cast<uint32_t>(blk.bn_gamma.size()), 1);
        put_tensor(os, p + "bn_beta", blk.bn_beta.data(), static_cast<uint32_t>(blk.bn_beta.size()), 1);
        put_tensor(os, p + "bn_mean", blk.bn_mean.data(), static_cast<uint32_t>(blk.bn_mean.size()), 1);
        put_tensor(os, p + "bn_var", blk.bn_var.data(), static_cast<uint32_t>(blk.bn_var.size()), 1);
    }
    put_tensor(os, "head.w", net.head_w.data(), static_cast<uint32_t>(net.head_w.rows()),
               static_cast<uint32_t>(net.head_w.cols()));
    put_tensor(os, "head.b", net.head_b.data(), static_cast<uint32_t>(net.head_b.size()), 1);
    if (!os) throw ArtifactError("short write to " + path);
}

Network load_network(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ArtifactError("cannot open " + path);
    if (get_u32(is) != kNetMagic) throw ArtifactError(path + ": not a model checkpoint");
    uint32_t version = get_u32(is);
    if (version != kNetVersion)
        throw ArtifactError(path + ": unsupported checkpoint version " + std::to_string(version));

    nlohmann::json cfg;
    try {
        cfg = nlohmann::json::parse(get_str(is));
    } catch (const nlohmann::json::exception& e) {
        throw ArtifactError(path + ": bad config block: " + e.what());
    }
    ModelConfig mc;
    mc.channels = cfg.at("channels").get<std::vector<int>>();
    mc.input_side = cfg.at("input_side").get<int>();
    mc.num_classes = cfg.at("num_classes").get<int>();
    mc.head_relu = cfg.at("head_relu").get<bool>();
    mc.bn_eps = cfg.at("bn_eps").get<double>();

    uint32_t count = get_u32(is);
    std::map<std::string, NamedTensor> tensors;
    for (uint32_t i = 0; i < count; ++i) {
        std::string name;
        NamedTensor t = get_tensor(is, name);
        tensors.emplace(std::move(name), std::move(t));
    }

    auto take_mat = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw ArtifactError(path + ": missing tensor " + name);
        const NamedTensor& t = it->second;
        if (static_cast<Eigen::Index>(t.rows) != rows || static_cast<Eigen::Index>(t.cols) != cols)
            throw ArtifactError(path + ": tensor " + name + " has shape " + std::to_string(t.rows) +
                                "x" + std::to_string(t.cols) + ", expected " + std::to_string(rows) +
                                "x" + std::to_string(cols));
        MatF m(rows, cols);
        std::copy(t.data.begin(), t.data.end(), m.data());
        return m;
    };
    auto take_vec = [&](const std::string& name, Eigen::Index size) {
        MatF m = take_mat(name, size, 1);
        return VecF(m.col(0));
    };

    Network net;
    net.cfg = mc;
    net.blocks.resize(mc.blocks());
    int cin = 3;
    for (int b = 0; b < mc.blocks(); ++b) {
        int cout = mc.channels[b];
        std::string p = "blocks." + std::to_string(b) + ".";
        auto& blk = net.blocks[b];
        blk.w = take_mat(p + "w", 9 * cin, cout);
        blk.b = take_vec(p + "b", cout);
        blk.bn_gamma = take_vec(p + "bn_gamma", cout);
        blk.bn_beta = take_vec(p + "bn_beta", cout);
        blk.bn_mean = take_vec(p + "bn_mean", cout);
        blk.bn_var = take_vec(p + "bn_var", cout);
        cin = cout;
    }
    net.head_w = take_mat("head.w", mc.num_classes, mc.channels.back());
    net.head_b = take_vec("head.b", mc.num_classes);
    return net;
}

void save_train_log(const std::string& path, const TrainLog& log) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["converged"] = log.converged;
    j["warning"] = log.warning;
    j["note"] = log.note;
    nlohmann::json eps = nlohmann::json::array();
    for (const auto& e : log.epochs) {
        eps.push_back({{"epoch", e.epoch},
                       {"loss", e.loss},
                       {"train_accuracy", e.train_accuracy},
                       {"val_accuracy", e.val_accuracy}});
    }
    j["epochs"] = std::move(eps);
    std::ofstream os(path);
    if (!os) throw ArtifactError("cannot open " + path + " for writing");
    os << j.dump(2) << "\n";
}

TrainLog load_train_log(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ArtifactError("cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ArtifactError(path + ": " + e.what());
    }
    TrainLog log;
    log.converged = j.at("converged").get<bool>();
    log.warning = j.at("warning").get<bool>();
    log.note = j.at("note").get<std::string>();
    for (const auto& e : j.at("epochs")) {
        EpochStats s;
        s.epoch = e.at("epoch").get<int>();
        s.loss = e.at("loss").get<double>();
        s.train_accuracy = e.at("train_accuracy").get<double>();
        s.val_accuracy = e.at("val_accuracy").get<double>();
        log.epochs.push_back(s);
    }
    return log;
}

} // namespace cavlab
