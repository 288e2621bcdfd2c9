#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmcnn/model.hpp"

namespace gmcnn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Named tensors plus the config text they were trained with. Values are stored
// as 32-bit floats; tensors are written in name order.
struct Checkpoint {
    NamedTensors tensors;
    std::string config_text;

    std::vector<std::uint8_t> serialize() const;
    static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    const Tensor& at(const std::string& name) const;
    // Tensors whose names start with prefix, with the prefix removed.
    NamedTensors with_prefix(const std::string& prefix) const;
    void put(const std::string& prefix, const NamedTensors& group);
};

// 64-bit FNV-1a.
std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);

}  // namespace gmcnn
