#include "navar/kernels.hpp"

#include "navar/common.hpp"

#include <cmath>

namespace navar {

DropoutMask DropoutMask::make(double rate, const DropoutKey& key) {
    DropoutMask m;
    m.seed = key.seed;
    m.step = key.step;
    m.threshold = static_cast<std::uint32_t>(std::lround(rate * 65536.0));
    m.scale = 65536.0 / (65536.0 - static_cast<double>(m.threshold));
    return m;
}

bool DropoutMask::keep(std::size_t net, std::size_t row, std::size_t unit,
                       std::size_t hidden) const noexcept {
    const std::size_t quads = (hidden + 3) / 4;
    const std::uint64_t h = rng::hash4(seed, step, net, row * quads + unit / 4);
    const auto lane = static_cast<std::uint32_t>((h >> (16 * (unit % 4))) & 0xffffu);
    return lane >= threshold;
}

namespace {

inline double sign_of(double v) noexcept { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_batch(const NavarModel& model, std::span<const LagWindow* const> batch) {
    if (batch.empty()) throw std::invalid_argument("batch_loss_and_grads: empty batch");
    for (const LagWindow* w : batch) {
        if (w->num_vars != model.num_vars() || w->lags != model.lags()) {
            throw std::invalid_argument("batch_loss_and_grads: window shape does not match model");
        }
    }
}

void prepare_result(const NavarModel& model, std::size_t rows, BatchResult& out) {
    const std::size_t nets = model.num_nets();
    const std::size_t hidden = model.hidden();
    auto reset = [](std::vector<double>& v, std::size_t n) { v.assign(n, 0.0); };
    reset(out.grads.w1, nets * hidden);
    reset(out.grads.b1, nets * hidden);
    reset(out.grads.w2, nets * hidden);
    reset(out.grads.b2, nets);
    reset(out.grads.target_bias, model.num_vars());
    reset(out.residuals, rows * model.num_vars());
}

}  // namespace

namespace kernels {

namespace {

// Reductions over batch rows use kLanes interleaved partial sums that are
// combined in a fixed order, so they vectorize without reassociation flags.
constexpr std::size_t kLanes = 8;

inline double combine(const double* acc) noexcept {
    return ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]));
}

}  // namespace

void loss_and_grads(const NavarModel& model, std::span<const LagWindow* const> batch,
                    const TrainConfig& config, const std::optional<DropoutMask>& dropout,
                    Workspace& ws, BatchResult& out) {
    check_batch(model, batch);
    const std::size_t rows = batch.size();
    const std::size_t padded = (rows + kLanes - 1) / kLanes * kLanes;
    const std::size_t n_vars = model.num_vars();
    const std::size_t lags = model.lags();
    const std::size_t hidden = model.hidden();
    const std::size_t nets = model.num_nets();
    const std::size_t slots = n_vars * lags;
    const double inv_rows = 1.0 / static_cast<double>(rows);
    const double lambda = config.lambda_sparsity;
    const bool use_dropout = dropout.has_value() && dropout->threshold > 0;
    const double scale = use_dropout ? dropout->scale : 1.0;
    const auto& prm = model.params();

    prepare_result(model, rows, out);
    // Padding rows carry x = 0 and a zero output gradient, so they add exact
    // zeros to every reduction.
    ws.inputs.assign(slots * padded, 0.0);
    ws.outputs.resize(nets * padded);
    ws.out_grad.assign(nets * padded, 0.0);
    ws.residual.resize(rows * n_vars);
    if (use_dropout) ws.keep.resize(nets * hidden * padded);

    for (std::size_t b = 0; b < rows; ++b) {
        const auto& lagged = batch[b]->lagged;
        for (std::size_t s = 0; s < slots; ++s) ws.inputs[s * padded + b] = lagged[s];
    }

    const long n_nets = static_cast<long>(nets);

    // Forward: one network per iteration, rows innermost.
#pragma omp parallel for schedule(static)
    for (long ni = 0; ni < n_nets; ++ni) {
        const std::size_t net = static_cast<std::size_t>(ni);
        const std::size_t source = (net / lags) % n_vars;
        const std::size_t lag = net % lags + 1;
        const double* x = ws.inputs.data() + ((lag - 1) * n_vars + source) * padded;
        double* o = ws.outputs.data() + net * padded;
        const double* w1 = prm.w1.data() + net * hidden;
        const double* b1 = prm.b1.data() + net * hidden;
        const double* w2 = prm.w2.data() + net * hidden;
        for (std::size_t b = 0; b < padded; ++b) o[b] = 0.0;
        if (use_dropout) {
            std::uint8_t* keep = ws.keep.data() + net * hidden * padded;
            const std::size_t quads = (hidden + 3) / 4;
            for (std::size_t b = 0; b < rows; ++b) {
                for (std::size_t q = 0; q < quads; ++q) {
                    const std::uint64_t h = rng::hash4(dropout->seed, dropout->step, net, b * quads + q);
                    for (std::size_t lane = 0; lane < 4 && q * 4 + lane < hidden; ++lane) {
                        const auto bits = static_cast<std::uint32_t>((h >> (16 * lane)) & 0xffffu);
                        keep[(q * 4 + lane) * padded + b] = bits >= dropout->threshold ? 1 : 0;
                    }
                }
            }
            for (std::size_t k = 0; k < hidden; ++k) {
                for (std::size_t b = rows; b < padded; ++b) keep[k * padded + b] = 0;
            }
            for (std::size_t k = 0; k < hidden; ++k) {
                const double a = w1[k];
                const double c = b1[k];
                const double v = w2[k] * scale;
                const std::uint8_t* kk = keep + k * padded;
                for (std::size_t b = 0; b < padded; ++b) {
                    const double pre = a * x[b] + c;
                    const double act = pre > 0.0 ? pre : 0.0;
                    o[b] += v * (act * static_cast<double>(kk[b]));
                }
            }
        } else {
            for (std::size_t k = 0; k < hidden; ++k) {
                const double a = w1[k];
                const double c = b1[k];
                const double v = w2[k];
                for (std::size_t b = 0; b < padded; ++b) {
                    const double pre = a * x[b] + c;
                    o[b] += v * (pre > 0.0 ? pre : 0.0);
                }
            }
        }
        const double bias = prm.b2[net];
        for (std::size_t b = 0; b < padded; ++b) o[b] += bias;
    }

    // Predictions and residuals; serial, fixed order.
    double sq = 0.0;
    for (std::size_t b = 0; b < rows; ++b) {
        const auto& target = batch[b]->target;
        for (std::size_t i = 0; i < n_vars; ++i) {
            double y = prm.target_bias[i];
            const std::size_t first = i * slots;
            for (std::size_t r = 0; r < slots; ++r) y += ws.outputs[(first + r) * padded + b];
            const double e = y - target[i];
            ws.residual[b * n_vars + i] = e;
            out.residuals[b * n_vars + i] = -e;
            sq += e * e;
        }
    }
    out.mse = sq * inv_rows;

    double sparsity = 0.0;
    for (std::size_t net = 0; net < nets; ++net) {
        double s = 0.0;
        const double* o = ws.outputs.data() + net * padded;
        for (std::size_t b = 0; b < rows; ++b) s += std::fabs(o[b]);
        sparsity += s * inv_rows;
    }
    out.sparsity = sparsity;
    out.total = out.mse + lambda * out.sparsity;

    for (std::size_t i = 0; i < n_vars; ++i) {
        double g = 0.0;
        for (std::size_t b = 0; b < rows; ++b) g += 2.0 * ws.residual[b * n_vars + i] * inv_rows;
        out.grads.target_bias[i] = g;
    }

    // Backward: per network, lane-blocked reductions over rows.
#pragma omp parallel for schedule(static)
    for (long ni = 0; ni < n_nets; ++ni) {
        const std::size_t net = static_cast<std::size_t>(ni);
        const std::size_t target = net / slots;
        const std::size_t source = (net / lags) % n_vars;
        const std::size_t lag = net % lags + 1;
        const double* x = ws.inputs.data() + ((lag - 1) * n_vars + source) * padded;
        const double* o = ws.outputs.data() + net * padded;
        double* g = ws.out_grad.data() + net * padded;
        double db2 = 0.0;
        for (std::size_t b = 0; b < rows; ++b) {
            g[b] = 2.0 * ws.residual[b * n_vars + target] * inv_rows +
                   lambda * sign_of(o[b]) * inv_rows;
            db2 += g[b];
        }
        out.grads.b2[net] = db2;
        const double* w1 = prm.w1.data() + net * hidden;
        const double* b1 = prm.b1.data() + net * hidden;
        const double* w2 = prm.w2.data() + net * hidden;
        double* gw1 = out.grads.w1.data() + net * hidden;
        double* gb1 = out.grads.b1.data() + net * hidden;
        double* gw2 = out.grads.w2.data() + net * hidden;
        const std::uint8_t* keep = use_dropout ? ws.keep.data() + net * hidden * padded : nullptr;
        for (std::size_t k = 0; k < hidden; ++k) {
            const double a = w1[k];
            const double c = b1[k];
            const double v = w2[k] * scale;
            double sw1[kLanes] = {};
            double sb1[kLanes] = {};
            double sw2[kLanes] = {};
            if (keep) {
                const std::uint8_t* kk = keep + k * padded;
                for (std::size_t b0 = 0; b0 < padded; b0 += kLanes) {
                    for (std::size_t l = 0; l < kLanes; ++l) {
                        const std::size_t b = b0 + l;
                        const double pre = a * x[b] + c;
                        const double gate = pre > 0.0 ? static_cast<double>(kk[b]) : 0.0;
                        const double t = g[b] * gate;
                        sw2[l] += t * (pre * scale);
                        const double dpre = t * v;
                        sw1[l] += dpre * x[b];
                        sb1[l] += dpre;
                    }
                }
            } else {
                for (std::size_t b0 = 0; b0 < padded; b0 += kLanes) {
                    for (std::size_t l = 0; l < kLanes; ++l) {
                        const std::size_t b = b0 + l;
                        const double pre = a * x[b] + c;
                        const double t = pre > 0.0 ? g[b] : 0.0;
                        sw2[l] += t * pre;
                        const double dpre = t * v;
                        sw1[l] += dpre * x[b];
                        sb1[l] += dpre;
                    }
                }
            }
            gw1[k] = combine(sw1);
            gb1[k] = combine(sb1);
            gw2[k] = combine(sw2);
        }
    }
}

}  // namespace kernels

namespace reference {

void loss_and_grads(const NavarModel& model, std::span<const LagWindow* const> batch,
                    const TrainConfig& config, const std::optional<DropoutMask>& dropout,
                    BatchResult& out) {
    check_batch(model, batch);
    const std::size_t rows = batch.size();
    const std::size_t n_vars = model.num_vars();
    const std::size_t lags = model.lags();
    const std::size_t hidden = model.hidden();
    const std::size_t nets = model.num_nets();
    const double inv_rows = 1.0 / static_cast<double>(rows);
    const double lambda = config.lambda_sparsity;
    const bool use_dropout = dropout.has_value() && dropout->threshold > 0;
    const double scale = use_dropout ? dropout->scale : 1.0;
    const auto& prm = model.params();
    prepare_result(model, rows, out);

    auto keep = [&](std::size_t net, std::size_t b, std::size_t k) {
        return !use_dropout || dropout->keep(net, b, k, hidden);
    };

    std::vector<double> outputs(rows * nets);
    std::vector<double> err(rows * n_vars);
    double sq = 0.0;
    for (std::size_t b = 0; b < rows; ++b) {
        const LagWindow& w = *batch[b];
        for (std::size_t i = 0; i < n_vars; ++i) {
            double y = prm.target_bias[i];
            for (std::size_t j = 0; j < n_vars; ++j) {
                for (std::size_t l = 1; l <= lags; ++l) {
                    const std::size_t net = model.net_index(i, j, l);
                    const double x = w.input(j, l);
                    double f = 0.0;
                    for (std::size_t k = 0; k < hidden; ++k) {
                        const double pre = prm.w1[net * hidden + k] * x + prm.b1[net * hidden + k];
                        if (pre > 0.0 && keep(net, b, k)) f += prm.w2[net * hidden + k] * scale * pre;
                    }
                    f += prm.b2[net];
                    outputs[b * nets + net] = f;
                    y += f;
                }
            }
            err[b * n_vars + i] = y - w.target[i];
            out.residuals[b * n_vars + i] = w.target[i] - y;
            sq += err[b * n_vars + i] * err[b * n_vars + i];
        }
    }
    out.mse = sq * inv_rows;
    double sparsity = 0.0;
    for (std::size_t net = 0; net < nets; ++net) {
        double s = 0.0;
        for (std::size_t b = 0; b < rows; ++b) s += std::fabs(outputs[b * nets + net]);
        sparsity += s * inv_rows;
    }
    out.sparsity = sparsity;
    out.total = out.mse + lambda * sparsity;

    for (std::size_t i = 0; i < n_vars; ++i) {
        double g = 0.0;
        for (std::size_t b = 0; b < rows; ++b) g += 2.0 * err[b * n_vars + i] * inv_rows;
        out.grads.target_bias[i] = g;
    }
    for (std::size_t net = 0; net < nets; ++net) {
        const std::size_t i = net / (n_vars * lags);
        const std::size_t j = (net / lags) % n_vars;
        const std::size_t l = net % lags + 1;
        for (std::size_t b = 0; b < rows; ++b) {
            const double f = outputs[b * nets + net];
            const double g = 2.0 * err[b * n_vars + i] * inv_rows + lambda * sign_of(f) * inv_rows;
            out.grads.b2[net] += g;
        }
        for (std::size_t k = 0; k < hidden; ++k) {
            const std::size_t idx = net * hidden + k;
            for (std::size_t b = 0; b < rows; ++b) {
                const double x = batch[b]->input(j, l);
                const double pre = prm.w1[idx] * x + prm.b1[idx];
                if (!(pre > 0.0) || !keep(net, b, k)) continue;
                const double f = outputs[b * nets + net];
                const double g = 2.0 * err[b * n_vars + i] * inv_rows + lambda * sign_of(f) * inv_rows;
                out.grads.w2[idx] += g * (pre * scale);
                const double dpre = g * (prm.w2[idx] * scale);
                out.grads.w1[idx] += dpre * x;
                out.grads.b1[idx] += dpre;
            }
        }
    }
}

long double loss_extended(const NavarModel& model, std::span<const LagWindow> batch,
                          const TrainConfig& config, std::size_t perturb, long double delta) {
    using Real = long double;
    const std::size_t n_vars = model.num_vars();
    const std::size_t lags = model.lags();
    const std::size_t hidden = model.hidden();
    const std::size_t nets = model.num_nets();
    const auto& prm = model.params();

    // Flat offsets of the parameter blocks.
    const std::size_t o_b1 = prm.w1.size();
    const std::size_t o_w2 = o_b1 + prm.b1.size();
    const std::size_t o_b2 = o_w2 + prm.w2.size();
    const std::size_t o_tb = o_b2 + prm.b2.size();
    auto param = [&](std::size_t block_offset, const std::vector<double>& v, std::size_t k) -> Real {
        Real x = v[k];
        if (block_offset + k == perturb) x += delta;
        return x;
    };

    const Real rows = static_cast<Real>(batch.size());
    Real sq = 0;
    std::vector<Real> abs_sum(nets, 0);
    for (const LagWindow& w : batch) {
        for (std::size_t i = 0; i < n_vars; ++i) {
            Real y = param(o_tb, prm.target_bias, i);
            for (std::size_t j = 0; j < n_vars; ++j) {
                for (std::size_t l = 1; l <= lags; ++l) {
                    const std::size_t net = model.net_index(i, j, l);
                    const Real x = w.input(j, l);
                    Real f = 0;
                    for (std::size_t k = 0; k < hidden; ++k) {
                        const std::size_t idx = net * hidden + k;
                        const Real pre = param(0, prm.w1, idx) * x + param(o_b1, prm.b1, idx);
                        if (pre > 0) f += param(o_w2, prm.w2, idx) * pre;
                    }
                    f += param(o_b2, prm.b2, net);
                    abs_sum[net] += f < 0 ? -f : f;
                    y += f;
                }
            }
            const Real e = y - static_cast<Real>(w.target[i]);
            sq += e * e;
        }
    }
    Real sparsity = 0;
    for (Real s : abs_sum) sparsity += s / rows;
    return sq / rows + static_cast<Real>(config.lambda_sparsity) * sparsity;
}

}  // namespace reference

}  // namespace navar
