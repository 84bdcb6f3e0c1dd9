#pragma once

// Batch forward/backward kernels. `kernels::` is the OpenMP path, parallel
// over networks with a fixed per-network reduction order so results do not
// depend on the thread count. `reference::` is a plain per-window loop kept
// for cross-checking and benchmarking.

#include "navar/model.hpp"
#include "navar/trainer.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace navar {

/// Keep/drop decision for hidden unit `unit` of net `net` on batch row `row`.
/// Rate is quantized to 1/65536.
struct DropoutMask {
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
    std::uint32_t threshold = 0;  ///< drop when 16-bit lane < threshold
    double scale = 1.0;           ///< inverted-dropout factor for kept units

    [[nodiscard]] static DropoutMask make(double rate, const DropoutKey& key);
    [[nodiscard]] bool keep(std::size_t net, std::size_t row, std::size_t unit,
                            std::size_t hidden) const noexcept;
};

namespace kernels {

/// Reusable buffers for one batch size.
struct Workspace {
    std::vector<double> inputs;    ///< [(l-1)*N + j][row]
    std::vector<double> outputs;   ///< [net][row]
    std::vector<double> out_grad;  ///< [net][row]
    std::vector<std::uint8_t> keep;  ///< [net][unit][row]
    std::vector<double> residual;  ///< [row][target], y_hat - y
};

void loss_and_grads(const NavarModel& model, std::span<const LagWindow* const> batch,
                    const TrainConfig& config, const std::optional<DropoutMask>& dropout,
                    Workspace& ws, BatchResult& out);

}  // namespace kernels

namespace reference {

void loss_and_grads(const NavarModel& model, std::span<const LagWindow* const> batch,
                    const TrainConfig& config, const std::optional<DropoutMask>& dropout,
                    BatchResult& out);

/// Loss only, in long double, with parameter `perturb` (flat index) shifted
/// by `delta`. Dropout off.
[[nodiscard]] long double loss_extended(const NavarModel& model, std::span<const LagWindow> batch,
                                        const TrainConfig& config, std::size_t perturb,
                                        long double delta);

}  // namespace reference

}  // namespace navar
