#include "keygate/data.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <zlib.h>

#include "keygate/rng.hpp"

namespace keygate {

void Dataset::validate() const {
    if (inputs.rows <= 0) throw std::invalid_argument("Dataset: empty");
    if (static_cast<int>(labels.size()) != inputs.rows)
        throw std::invalid_argument("Dataset: one label per row required");
    if (num_classes < 2) throw std::invalid_argument("Dataset: need at least 2 classes");
    for (int y : labels)
        if (y < 0 || y >= num_classes) throw std::invalid_argument("Dataset: label out of range");
    if (!inputs.all_finite()) throw std::runtime_error("Dataset: non-finite input entry");
}

std::pair<Dataset, Dataset> gen_synthetic(int n, int d, int num_classes, double separation,
                                          uint64_t seed) {
    if (num_classes < 2) throw std::invalid_argument("gen_synthetic: need C >= 2");
    if (d < num_classes) throw std::invalid_argument("gen_synthetic: need d >= C");
    if (n < 10) throw std::invalid_argument("gen_synthetic: n too small");
    if (!(separation >= 0.0)) throw std::invalid_argument("gen_synthetic: bad separation");

    Rng rng(seed);
    std::vector<Vec> means;
    for (int c = 0; c < num_classes; ++c) {
        Vec mu = rng.normal_vec(d);
        const double len = norm(mu);
        for (double& v : mu) v *= separation / (len > 0.0 ? len : 1.0);
        means.push_back(std::move(mu));
    }

    Matrix all(n, d);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        const int y = rng.uniform_int(num_classes);
        labels[i] = y;
        double* xi = all.row(i);
        for (int j = 0; j < d; ++j) xi[j] = means[y][j] + rng.normal();
    }

    const int n_train = (n * 8) / 10;
    Dataset train, test;
    train.num_classes = test.num_classes = num_classes;
    train.split_tag = "train";
    test.split_tag = "test";
    train.inputs = Matrix(n_train, d);
    test.inputs = Matrix(n - n_train, d);
    for (int i = 0; i < n; ++i) {
        if (i < n_train) {
            std::memcpy(train.inputs.row(i), all.row(i), sizeof(double) * d);
            train.labels.push_back(labels[i]);
        } else {
            std::memcpy(test.inputs.row(i - n_train), all.row(i), sizeof(double) * d);
            test.labels.push_back(labels[i]);
        }
    }
    train.validate();
    test.validate();
    return {std::move(train), std::move(test)};
}

namespace {

uint32_t read_be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

}  // namespace

IdxTensor parse_idx(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 4) throw std::runtime_error("parse_idx: file shorter than magic");
    IdxTensor t;
    t.magic = read_be32(bytes.data());
    size_t ndims = 0;
    if (t.magic == 0x00000803u)
        ndims = 3;
    else if (t.magic == 0x00000801u)
        ndims = 1;
    else
        throw std::runtime_error("parse_idx: bad magic");
    const size_t header = 4 + 4 * ndims;
    if (bytes.size() < header) throw std::runtime_error("parse_idx: truncated header");
    uint64_t count = 1;
    for (size_t i = 0; i < ndims; ++i) {
        const uint32_t dim = read_be32(bytes.data() + 4 + 4 * i);
        if (dim == 0) throw std::runtime_error("parse_idx: zero dimension");
        t.dims.push_back(dim);
        count *= dim;
        if (count > (1ull << 33)) throw std::runtime_error("parse_idx: dimension overflow");
    }
    if (bytes.size() < header + count) throw std::runtime_error("parse_idx: truncated payload");
    if (bytes.size() > header + count) throw std::runtime_error("parse_idx: trailing bytes");
    t.payload.assign(bytes.begin() + header, bytes.end());
    return t;
}

std::vector<uint8_t> read_file_maybe_gz(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");  // passes plain files through unchanged
    if (!f) throw std::runtime_error("read_file_maybe_gz: cannot open " + path);
    std::vector<uint8_t> out;
    uint8_t buf[1 << 16];
    int got;
    while ((got = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + got);
    const bool bad = got < 0;
    gzclose(f);
    if (bad) throw std::runtime_error("read_file_maybe_gz: decompression failed for " + path);
    return out;
}

namespace {

std::string find_mnist_file(const std::string& dir, const std::string& stem) {
    for (const std::string& name : {dir + "/" + stem, dir + "/" + stem + ".gz"}) {
        std::ifstream probe(name, std::ios::binary);
        if (probe) return name;
    }
    return {};
}

Dataset mnist_split(const std::string& dir, const std::string& image_stem,
                    const std::string& label_stem, const std::string& tag) {
    const std::string image_path = find_mnist_file(dir, image_stem);
    const std::string label_path = find_mnist_file(dir, label_stem);
    if (image_path.empty() || label_path.empty())
        throw std::runtime_error("load_mnist: missing " + image_stem + " under " + dir);
    IdxTensor images = parse_idx(read_file_maybe_gz(image_path));
    IdxTensor labels = parse_idx(read_file_maybe_gz(label_path));
    if (images.dims.size() != 3 || images.dims[1] != 28 || images.dims[2] != 28)
        throw std::runtime_error("load_mnist: unexpected image shape in " + image_path);
    if (labels.dims.size() != 1 || labels.dims[0] != images.dims[0])
        throw std::runtime_error("load_mnist: image/label count mismatch under " + dir);

    const int n = static_cast<int>(images.dims[0]);
    Dataset out;
    out.num_classes = 10;
    out.split_tag = tag;
    out.inputs = Matrix(n, 784);
    out.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        const uint8_t* px = images.payload.data() + static_cast<size_t>(i) * 784;
        double* xi = out.inputs.row(i);
        for (int j = 0; j < 784; ++j) xi[j] = px[j] / 255.0;
        out.labels[i] = labels.payload[i];
    }
    out.validate();
    return out;
}

}  // namespace

std::pair<Dataset, Dataset> load_mnist(const std::string& dir) {
    Dataset train = mnist_split(dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte", "train");
    Dataset test = mnist_split(dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", "test");
    return {std::move(train), std::move(test)};
}

bool mnist_available(const std::string& dir) {
    return !find_mnist_file(dir, "train-images-idx3-ubyte").empty() &&
           !find_mnist_file(dir, "train-labels-idx1-ubyte").empty() &&
           !find_mnist_file(dir, "t10k-images-idx3-ubyte").empty() &&
           !find_mnist_file(dir, "t10k-labels-idx1-ubyte").empty();
}

namespace {
constexpr char kDatasetMagic[8] = {'K', 'G', 'D', 'A', 'T', 'A', '0', '1'};
}

void save_dataset(const std::string& path, const Dataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
    out.write(kDatasetMagic, sizeof(kDatasetMagic));
    const int32_t header[3] = {data.inputs.rows, data.inputs.cols,
                               static_cast<int32_t>(data.num_classes)};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    const uint32_t tag_len = static_cast<uint32_t>(data.split_tag.size());
    out.write(reinterpret_cast<const char*>(&tag_len), sizeof(tag_len));
    out.write(data.split_tag.data(), tag_len);
    std::vector<int32_t> labels(data.labels.begin(), data.labels.end());
    out.write(reinterpret_cast<const char*>(labels.data()), sizeof(int32_t) * labels.size());
    out.write(reinterpret_cast<const char*>(data.inputs.data.data()),
              sizeof(double) * data.inputs.data.size());
    if (!out) throw std::runtime_error("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0)
        throw std::runtime_error("load_dataset: unrecognized file " + path);
    int32_t header[3];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    uint32_t tag_len = 0;
    in.read(reinterpret_cast<char*>(&tag_len), sizeof(tag_len));
    if (!in || tag_len > 64) throw std::runtime_error("load_dataset: corrupt header in " + path);
    Dataset data;
    data.split_tag.resize(tag_len);
    in.read(data.split_tag.data(), tag_len);
    data.num_classes = header[2];
    std::vector<int32_t> labels(header[0]);
    in.read(reinterpret_cast<char*>(labels.data()), sizeof(int32_t) * labels.size());
    data.labels.assign(labels.begin(), labels.end());
    data.inputs = Matrix(header[0], header[1]);
    in.read(reinterpret_cast<char*>(data.inputs.data.data()),
            sizeof(double) * data.inputs.data.size());
    if (!in) throw std::runtime_error("load_dataset: truncated file " + path);
    data.validate();
    return data;
}

}  // namespace keygate
