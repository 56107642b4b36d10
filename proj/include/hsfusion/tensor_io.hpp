#pragma once

#include "hsfusion/tensor.hpp"

#include <filesystem>
#include <string>

namespace hsfusion {

// On-disk tensor: <base>.json holds the header, <base>.bin the raw
// little-endian f64 payload in storage (mode-1 fastest) order.
struct TensorFile {
    Tensor3 tensor;
    std::string semantic;  // e.g. "z_hat", "y_h"
};

std::filesystem::path header_path(const std::filesystem::path& base);
std::filesystem::path payload_path(const std::filesystem::path& base);

// Accepts the base path or either of the two file names.
std::filesystem::path tensor_base(const std::filesystem::path& path);

void save_tensor(const std::filesystem::path& base, const Tensor3& t, const std::string& semantic);

// Throws IoError on missing files, malformed headers (with the byte offset
// of the parse failure) and payload length mismatches.
TensorFile load_tensor(const std::filesystem::path& path);

}  // namespace hsfusion
