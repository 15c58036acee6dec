#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bcnn {

/// Trainable array with its gradient accumulator. Entries whose mask byte is 0
/// are frozen at zero; an empty mask means every entry is trainable.
struct Parameter {
    std::string name;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<std::uint8_t> mask;

    Parameter() = default;
    Parameter(std::string n, std::size_t count) : name(std::move(n)), value(count, 0.0), grad(count, 0.0) {}

    std::size_t size() const noexcept { return value.size(); }
    bool trainable(std::size_t i) const noexcept { return mask.empty() || mask[i] != 0; }

    std::size_t trainable_count() const noexcept {
        if (mask.empty()) return value.size();
        std::size_t k = 0;
        for (auto m : mask) k += m != 0;
        return k;
    }

    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

    /// Zeroes gradients at frozen positions.
    void apply_mask_to_grad() {
        if (mask.empty()) return;
        for (std::size_t i = 0; i < grad.size(); ++i) {
            if (!mask[i]) grad[i] = 0.0;
        }
    }

    /// True when every frozen entry is exactly zero.
    bool mask_respected() const noexcept {
        if (mask.empty()) return true;
        for (std::size_t i = 0; i < value.size(); ++i) {
            if (!mask[i] && value[i] != 0.0) return false;
        }
        return true;
    }
};

} // namespace bcnn
