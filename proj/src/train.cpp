#include "cavlab/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "cavlab/parallel.hpp"

namespace cavlab {

std::vector<uint8_t> quantize_image(const TensorF& img) {
    std::vector<uint8_t> out(img.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = uint8_t(std::lround(std::min(1.0f, std::max(0.0f, img.data[i])) * 255.0f));
    return out;
}

LabelledImages materialize(const DatasetConfig& cfg, const ClassTable& table, long first,
                           long count) {
    LabelledImages out;
    out.side = cfg.image_side;
    out.num_classes = int(table.classes.size());
    out.pixels.resize(size_t(count));
    out.labels.resize(size_t(count));
    parallel_for(size_t(count), [&](size_t i) {
        SceneSpec scene = dataset_scene(cfg, first + long(i));
        out.pixels[i] = quantize_image(render_scene(scene, cfg.image_side));
        out.labels[i] = assign_classes(scene, table, cfg.image_side);
    });
    return out;
}

double evaluate_accuracy(const Network& net, const LabelledImages& data) {
    std::vector<long> correct(data.count(), 0);
    parallel_for(data.count(), [&](size_t i) {
        TensorF img = image_from_bytes<float>(data.pixels[i], data.side);
        VecF z = logits(net, img);
        long c = 0;
        for (int k = 0; k < data.num_classes; ++k)
            if ((z[k] > 0.0f) == (data.labels[i][size_t(k)] != 0)) ++c;
        correct[i] = c;
    });
    long total = std::accumulate(correct.begin(), correct.end(), 0L);
    return double(total) / (double(data.count()) * data.num_classes);
}

namespace {

struct AdamParam {
    float* p;
    float* g;
    Eigen::Index n;
    VecF m, v;
};

struct BatchBlock {
    std::vector<TensorF> xhat; // normalized conv outputs
    std::vector<TensorF> act;  // post-relu, pre-pool
    std::vector<TensorF> out;  // post-pool; empty when the block does not pool
    std::vector<std::vector<int>> argmax;
    VecF inv_sigma; // batch statistics used in this step
};

const std::vector<TensorF>& block_output(const BatchBlock& bb) {
    return bb.out.empty() ? bb.act : bb.out;
}

} // namespace

TrainLog train_network(Network& net, const LabelledImages& train, const LabelledImages& val,
                       const TrainConfig& cfg,
                       const std::function<void(const EpochStats&)>& on_epoch) {
    TrainLog log;
    if (cfg.max_epochs <= 0) {
        log.warning = true;
        log.note = "zero epoch budget, model left at initialization";
        return log;
    }
    if (train.count() == 0) throw ConfigError("training set is empty");
    const int B = net.cfg.blocks();
    const int K = net.cfg.num_classes;
    const int side = net.cfg.input_side;
    if (train.side != side || train.num_classes != K)
        throw ConfigError("dataset does not match the model configuration");

    struct BlockGrads {
        MatF w;
        VecF b, gamma, beta;
    };
    std::vector<BlockGrads> grads{};
    grads.resize(size_t(B));
    MatF g_head_w;
    VecF g_head_b;
    std::vector<AdamParam> params;
    for (int b = 0; b < B; ++b) {
        auto& blk = net.blocks[size_t(b)];
        auto& g = grads[size_t(b)];
        g.w.setZero(blk.w.rows(), blk.w.cols());
        g.b.setZero(blk.b.size());
        g.gamma.setZero(blk.bn_gamma.size());
        g.beta.setZero(blk.bn_beta.size());
        params.push_back({blk.w.data(), g.w.data(), blk.w.size(), {}, {}});
        params.push_back({blk.b.data(), g.b.data(), blk.b.size(), {}, {}});
        params.push_back({blk.bn_gamma.data(), g.gamma.data(), blk.bn_gamma.size(), {}, {}});
        params.push_back({blk.bn_beta.data(), g.beta.data(), blk.bn_beta.size(), {}, {}});
    }
    g_head_w.setZero(net.head_w.rows(), net.head_w.cols());
    g_head_b.setZero(net.head_b.size());
    params.push_back({net.head_w.data(), g_head_w.data(), net.head_w.size(), {}, {}});
    params.push_back({net.head_b.data(), g_head_b.data(), net.head_b.size(), {}, {}});
    for (auto& p : params) {
        p.m = VecF::Zero(p.n);
        p.v = VecF::Zero(p.n);
    }
    long adam_t = 0;

    const auto start = std::chrono::steady_clock::now();
    auto elapsed_s = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    std::vector<size_t> order(train.count());
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Rng shuffle_rng = Rng::stream(cfg.seed, "shuffle", uint64_t(epoch));
        std::iota(order.begin(), order.end(), size_t(0));
        shuffle_rng.shuffle(order);

        double loss_sum = 0;
        long correct = 0, seen = 0;

        for (size_t batch_lo = 0; batch_lo < order.size(); batch_lo += size_t(cfg.batch_size)) {
            const size_t bs = std::min(size_t(cfg.batch_size), order.size() - batch_lo);
            std::vector<TensorF> input(bs);
            parallel_for(bs, [&](size_t i) {
                input[i] = image_from_bytes<float>(train.pixels[order[batch_lo + i]], side);
            });

            // ---- forward ----
            std::vector<BatchBlock> acts{};
            acts.resize(size_t(B));
            const std::vector<TensorF>* cur = &input;
            for (int b = 0; b < B; ++b) {
                auto& blk = net.blocks[size_t(b)];
                auto& bb = acts[size_t(b)];
                const int C = int(blk.w.cols());
                bb.xhat.resize(bs);
                parallel_for(bs, [&](size_t i) {
                    const TensorF& in = (*cur)[i];
                    MatF col;
                    im2col3x3(in, col);
                    TensorF z(in.h, in.w, C);
                    Eigen::Map<MatF> zm(z.data.data(), Eigen::Index(in.h) * in.w, C);
                    zm.noalias() = col * blk.w;
                    zm.rowwise() += blk.b.transpose();
                    bb.xhat[i] = std::move(z); // raw conv+bias until normalized below
                });

                VecD sum = VecD::Zero(C), sq = VecD::Zero(C);
                for (size_t i = 0; i < bs; ++i) {
                    Eigen::Map<const MatF> zm(bb.xhat[i].data.data(),
                                              Eigen::Index(bb.xhat[i].h) * bb.xhat[i].w, C);
                    sum += zm.colwise().sum().transpose().cast<double>();
                    sq += zm.array().square().colwise().sum().transpose().matrix().cast<double>();
                }
                const double N = double(bs) * bb.xhat[0].h * bb.xhat[0].w;
                VecF mean = (sum / N).cast<float>();
                VecF var =
                    (sq / N - (sum / N).array().square().matrix()).cwiseMax(0.0).cast<float>();
                bb.inv_sigma = (var.array() + float(net.cfg.bn_eps)).sqrt().inverse();
                const float unbias = N > 1 ? float(N / (N - 1)) : 1.0f;
                blk.bn_mean =
                    (1.0f - float(cfg.bn_momentum)) * blk.bn_mean + float(cfg.bn_momentum) * mean;
                blk.bn_var = (1.0f - float(cfg.bn_momentum)) * blk.bn_var +
                             float(cfg.bn_momentum) * unbias * var;

                bb.act.resize(bs);
                const bool pools = block_pools(b);
                if (pools) {
                    bb.out.resize(bs);
                    bb.argmax.resize(bs);
                }
                parallel_for(bs, [&](size_t i) {
                    TensorF& xh = bb.xhat[i];
                    Eigen::Map<MatF> xm(xh.data.data(), Eigen::Index(xh.h) * xh.w, C);
                    xm.rowwise() -= mean.transpose();
                    xm.array().rowwise() *= bb.inv_sigma.transpose().array();
                    TensorF a = xh;
                    Eigen::Map<MatF> am(a.data.data(), xm.rows(), C);
                    am.array().rowwise() *= blk.bn_gamma.transpose().array();
                    am.rowwise() += blk.bn_beta.transpose();
                    for (auto& v : a.data) v = v > 0.0f ? v : 0.0f;
                    if (pools) bb.out[i] = maxpool2(a, &bb.argmax[i]);
                    bb.act[i] = std::move(a);
                });
                cur = &block_output(bb);
            }

            // ---- head ----
            const auto& last = block_output(acts[size_t(B - 1)]);
            const int D = int(net.head_w.cols());
            const int cells = last[0].h * last[0].w;
            MatF P(bs, D);
            for (size_t i = 0; i < bs; ++i) {
                Eigen::Map<const MatF> m(last[i].data.data(), cells, D);
                P.row(i) = m.colwise().mean();
            }
            MatF Pact = net.cfg.head_relu ? P.cwiseMax(0.0f).eval() : P;
            MatF Z = Pact * net.head_w.transpose();
            Z.rowwise() += net.head_b.transpose();

            MatF dZ(bs, K);
            double batch_loss = 0;
            for (size_t i = 0; i < bs; ++i)
                for (int k = 0; k < K; ++k) {
                    float z = Z(Eigen::Index(i), k);
                    float y = train.labels[order[batch_lo + i]][size_t(k)] ? 1.0f : 0.0f;
                    batch_loss += std::max(z, 0.0f) - z * y + std::log1p(std::exp(-std::abs(z)));
                    float s = 1.0f / (1.0f + std::exp(-z));
                    dZ(Eigen::Index(i), k) = (s - y) / float(bs * size_t(K));
                    if ((z > 0.0f) == (y > 0.5f)) ++correct;
                }
            batch_loss /= double(bs * size_t(K));
            if (!std::isfinite(batch_loss))
                throw NumericError("training loss became non-finite at epoch " +
                                   std::to_string(epoch));
            loss_sum += batch_loss * double(bs);
            seen += long(bs) * K;

            // ---- backward ----
            g_head_w.noalias() = dZ.transpose() * Pact;
            g_head_b = dZ.colwise().sum();
            MatF dP = dZ * net.head_w;
            if (net.cfg.head_relu)
                dP = (dP.array() * (P.array() > 0.0f).cast<float>()).matrix();

            std::vector<TensorF> gout(bs);
            parallel_for(bs, [&](size_t i) {
                TensorF g(last[i].h, last[i].w, last[i].d);
                Eigen::Map<MatF> gm(g.data.data(), cells, D);
                gm = (dP.row(i) / float(cells)).replicate(cells, 1);
                gout[i] = std::move(g);
            });

            for (int b = B - 1; b >= 0; --b) {
                auto& blk = net.blocks[size_t(b)];
                auto& bb = acts[size_t(b)];
                auto& g = grads[size_t(b)];
                const int C = int(blk.w.cols());
                const bool pools = block_pools(b);
                const std::vector<TensorF>& in = b == 0 ? input : block_output(acts[size_t(b - 1)]);

                parallel_for(bs, [&](size_t i) {
                    TensorF ga;
                    if (pools) {
                        ga = TensorF(bb.act[i].h, bb.act[i].w, C);
                        for (size_t j = 0; j < gout[i].data.size(); ++j)
                            ga.data[size_t(bb.argmax[i][j])] += gout[i].data[j];
                    } else {
                        ga = std::move(gout[i]);
                    }
                    const TensorF& a = bb.act[i];
                    for (size_t j = 0; j < ga.data.size(); ++j)
                        if (a.data[j] <= 0.0f) ga.data[j] = 0.0f;
                    gout[i] = std::move(ga);
                });

                const double N = double(bs) * bb.act[0].h * bb.act[0].w;
                VecD dbeta = VecD::Zero(C), dgamma = VecD::Zero(C);
                for (size_t i = 0; i < bs; ++i) {
                    Eigen::Map<const MatF> gm(gout[i].data.data(),
                                              Eigen::Index(gout[i].h) * gout[i].w, C);
                    Eigen::Map<const MatF> xm(bb.xhat[i].data.data(), gm.rows(), C);
                    dbeta += gm.colwise().sum().transpose().cast<double>();
                    dgamma += (gm.array() * xm.array())
                                  .colwise()
                                  .sum()
                                  .transpose()
                                  .matrix()
                                  .cast<double>();
                }
                g.beta = dbeta.cast<float>();
                g.gamma = dgamma.cast<float>();
                VecF m1 = (dbeta / N).cast<float>();  // mean of upstream grad
                VecF m2 = (dgamma / N).cast<float>(); // mean of grad * xhat

                // dzc = inv_sigma * gamma * (ga - m1 - xhat * m2), then conv grads
                const size_t chunk = 8;
                const size_t nchunks = (bs + chunk - 1) / chunk;
                std::vector<MatF> gw_part(nchunks);
                std::vector<VecF> gb_part(nchunks);
                std::vector<TensorF> gin(b > 0 ? bs : 0);
                parallel_for(nchunks, [&](size_t ci) {
                    gw_part[ci].setZero(blk.w.rows(), blk.w.cols());
                    gb_part[ci] = VecF::Zero(C);
                    MatF col, gcol;
                    for (size_t i = ci * chunk; i < std::min(bs, (ci + 1) * chunk); ++i) {
                        TensorF& gz = gout[i];
                        Eigen::Map<MatF> gm(gz.data.data(), Eigen::Index(gz.h) * gz.w, C);
                        Eigen::Map<const MatF> xm(bb.xhat[i].data.data(), gm.rows(), C);
                        gm.rowwise() -= m1.transpose();
                        gm.array() -= xm.array().rowwise() * m2.transpose().array();
                        gm.array().rowwise() *=
                            (bb.inv_sigma.array() * blk.bn_gamma.array()).transpose();
                        im2col3x3(in[i], col);
                        gw_part[ci].noalias() += col.transpose() * gm;
                        gb_part[ci] += gm.colwise().sum().transpose();
                        if (b > 0) {
                            gcol.noalias() = gm * blk.w.transpose();
                            TensorF gi(in[i].h, in[i].w, in[i].d);
                            col2im3x3(gcol, gi);
                            gin[i] = std::move(gi);
                        }
                    }
                });
                g.w.setZero();
                g.b.setZero();
                for (size_t ci = 0; ci < nchunks; ++ci) {
                    g.w += gw_part[ci];
                    g.b += gb_part[ci];
                }
                if (b > 0) gout = std::move(gin);
            }

            // ---- adam ----
            ++adam_t;
            const float b1 = float(cfg.adam_beta1), b2 = float(cfg.adam_beta2);
            const float corr1 = 1.0f - std::pow(b1, float(adam_t));
            const float corr2 = 1.0f - std::pow(b2, float(adam_t));
            for (auto& p : params) {
                Eigen::Map<VecF> pv(p.p, p.n), gv(p.g, p.n);
                p.m = b1 * p.m + (1.0f - b1) * gv;
                p.v = b2 * p.v + (1.0f - b2) * gv.cwiseProduct(gv);
                pv -= (float(cfg.lr) * (p.m / corr1).array() /
                       ((p.v / corr2).array().sqrt() + float(cfg.adam_eps)))
                          .matrix();
            }
        }

        EpochStats st;
        st.epoch = epoch;
        st.loss = loss_sum / double(train.count());
        st.train_accuracy = double(correct) / double(seen);
        st.val_accuracy = val.count() ? evaluate_accuracy(net, val) : 0.0;
        log.epochs.push_back(st);
        if (on_epoch) on_epoch(st);

        if (st.train_accuracy >= cfg.accuracy_threshold) {
            log.converged = true;
            break;
        }
        if (cfg.time_budget_s > 0 && elapsed_s() > cfg.time_budget_s) {
            log.warning = true;
            log.note = "time budget exhausted before reaching the accuracy threshold";
            break;
        }
    }
    if (!log.converged && !log.warning) {
        log.warning = true;
        log.note = "epoch budget exhausted before reaching the accuracy threshold";
    }
    return log;
}

} // namespace cavlab
