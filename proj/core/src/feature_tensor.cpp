#include "fapm/feature_tensor.hpp"

#include <array>
#include <cmath>
#include <string>

#include "fapm/error.hpp"
#include "fapm/npy.hpp"

namespace fapm {

void FeatureTensor::validate() const {
    if (channels == 0 || height == 0 || width == 0)
        fail(ErrorKind::validation, "tensor for layer " + std::to_string(layer_id) + " has a zero extent (" +
                                        std::to_string(channels) + "," + std::to_string(height) + "," +
                                        std::to_string(width) + ")");
    if (data.size() != channels * height * width)
        fail(ErrorKind::validation, "tensor data length " + std::to_string(data.size()) +
                                        " does not match shape product " + std::to_string(channels * height * width));
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i]))
            fail(ErrorKind::validation, "tensor for layer " + std::to_string(layer_id) +
                                            " holds a non-finite value at flat index " + std::to_string(i));
    }
}

FeatureTensor read_tensor(const std::filesystem::path& path, int layer_id) {
    npy::Array array = npy::read(path);
    if (array.dtype != npy::DType::float32)
        fail(ErrorKind::unsupported_encoding, path.string() + ": feature tensors must be float32");
    if (array.shape.size() != 3)
        fail(ErrorKind::unsupported_encoding,
             path.string() + ": feature tensors must be 3-D (C,H,W), got " + std::to_string(array.shape.size()) + "-D");
    FeatureTensor t(layer_id, array.shape[0], array.shape[1], array.shape[2], std::move(array.data));
    try {
        t.validate();
    } catch (const Error& e) {
        fail(ErrorKind::validation, path.string() + ": " + e.what());
    }
    return t;
}

void write_tensor(const FeatureTensor& tensor, const std::filesystem::path& path) {
    tensor.validate();
    const std::array<std::size_t, 3> shape{tensor.channels, tensor.height, tensor.width};
    npy::write(path, shape, tensor.data);
}

Mask read_mask(const std::filesystem::path& path) {
    npy::Array array = npy::read(path);
    Mask mask;
    if (array.shape.size() == 2) {
        mask.height = array.shape[0];
        mask.width = array.shape[1];
    } else if (array.shape.size() == 3 && array.shape[0] == 1) {
        mask.height = array.shape[1];
        mask.width = array.shape[2];
    } else {
        fail(ErrorKind::unsupported_encoding, path.string() + ": masks must have shape (H,W) or (1,H,W)");
    }
    if (mask.height == 0 || mask.width == 0) fail(ErrorKind::validation, path.string() + ": empty mask");
    mask.values.resize(array.data.size());
    for (std::size_t i = 0; i < array.data.size(); ++i) mask.values[i] = array.data[i] != 0.0f ? 1.0f : 0.0f;
    return mask;
}

void write_mask(const Mask& mask, const std::filesystem::path& path) {
    const std::array<std::size_t, 2> shape{mask.height, mask.width};
    npy::write(path, shape, mask.values);
}

}  // namespace fapm
