#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "keygate/matrix.hpp"

namespace keygate {

struct Dataset {
    Matrix inputs;            // n x d
    std::vector<int> labels;  // values in [0, num_classes)
    int num_classes = 0;
    std::string split_tag;

    int size() const { return inputs.rows; }
    int dim() const { return inputs.cols; }
    void validate() const;
};

// Gaussian blobs: class means uniform on the sphere of radius `separation`,
// unit covariance. One fixed draw of n samples, split exactly 80/20.
std::pair<Dataset, Dataset> gen_synthetic(int n, int d, int num_classes, double separation,
                                          uint64_t seed);

// Decoded IDX payload (u8 elements).
struct IdxTensor {
    uint32_t magic = 0;
    std::vector<uint32_t> dims;
    std::vector<uint8_t> payload;
};

// Strict parser for the two IDX shapes used by MNIST: images
// (magic 0x00000803, 3 dims) and labels (magic 0x00000801, 1 dim).
IdxTensor parse_idx(const std::vector<uint8_t>& bytes);

// Whole-file read; transparently inflates gzip content.
std::vector<uint8_t> read_file_maybe_gz(const std::string& path);

// Loads the four canonical MNIST files from `dir` (plain or .gz), pixels
// normalized to [0,1] and flattened to 784.
std::pair<Dataset, Dataset> load_mnist(const std::string& dir);

bool mnist_available(const std::string& dir);

// Versioned binary container for exact dataset reruns; round-trip is bit-exact.
void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

}  // namespace keygate
