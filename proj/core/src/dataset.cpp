#include "meatlab/dataset.hpp"

#include "meatlab/errors.hpp"
#include "meatlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

namespace meat {

void Dataset::validate() const {
    if (features.rank() != 2) throw ArgumentError("dataset: features must be rank 2, got " + shape_string(features.shape()));
    if (features.dim(0) != labels.size()) {
        throw ArgumentError("dataset: " + std::to_string(features.dim(0)) + " feature rows vs " +
                            std::to_string(labels.size()) + " labels");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw ArgumentError("dataset: label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                                " outside [0, " + std::to_string(num_classes) + ")");
        }
    }
    if (!(lo < hi)) throw ArgumentError("dataset: declared range is empty");
    for (float v : features.values()) {
        if (!(v >= lo && v <= hi)) throw ArgumentError("dataset: feature value outside declared range");
    }
}

Dataset Dataset::select(std::span<const std::size_t> rows) const {
    const std::size_t d = dim();
    Dataset out;
    out.num_classes = num_classes;
    out.split = split;
    out.lo = lo;
    out.hi = hi;
    std::vector<float> data;
    data.reserve(rows.size() * d);
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) {
        if (r >= size()) throw ArgumentError("dataset: row " + std::to_string(r) + " out of range");
        auto first = features.values().begin() + static_cast<std::ptrdiff_t>(r * d);
        data.insert(data.end(), first, first + static_cast<std::ptrdiff_t>(d));
        out.labels.push_back(labels[r]);
    }
    out.features = Tensor({rows.size(), d}, std::move(data));
    return out;
}

const char* to_string(SyntheticKind kind) {
    return kind == SyntheticKind::gaussians ? "gaussians" : "spirals";
}

SyntheticKind synthetic_kind_from_string(const std::string& name) {
    if (name == "gaussians") return SyntheticKind::gaussians;
    if (name == "spirals") return SyntheticKind::spirals;
    throw ArgumentError("unknown synthetic dataset kind '" + name + "'");
}

namespace {

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    // Fisher-Yates on our own generator; std::shuffle's draw pattern is implementation-defined.
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(idx[i - 1], idx[j]);
    }
}

} // namespace

DatasetPair make_synthetic(SyntheticKind kind, std::size_t n_per_class, std::size_t classes, double noise,
                           std::uint64_t seed, bool standardize) {
    if (n_per_class < 1) throw ArgumentError("make_synthetic: n_per_class must be >= 1");
    if (classes < 2) throw ArgumentError("make_synthetic: classes must be >= 2");
    if (!(noise >= 0.0)) throw ArgumentError("make_synthetic: noise must be >= 0");

    Rng rng(seed);
    Rng gen = rng.substream(1);
    const std::size_t total = n_per_class * classes;
    std::vector<double> xs(total * 2);
    std::vector<int> ys(total);
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < n_per_class; ++i) {
            const std::size_t row = c * n_per_class + i;
            double px = 0.0, py = 0.0;
            if (kind == SyntheticKind::gaussians) {
                const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
                px = std::cos(angle) + noise * gen.normal();
                py = std::sin(angle) + noise * gen.normal();
            } else {
                // arms start at the origin and wind 4 radians; noise perturbs the angle
                const double r = gen.uniform();
                const double theta = 4.0 * static_cast<double>(c) + 4.0 * r + noise * gen.normal();
                px = r * std::sin(theta);
                py = r * std::cos(theta);
            }
            xs[row * 2] = px;
            xs[row * 2 + 1] = py;
            ys[row] = static_cast<int>(c);
        }
    }

    // stratified 80/20 split
    Rng splitter = rng.substream(2);
    const std::size_t n_test_per_class = n_per_class / 5;
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t c = 0; c < classes; ++c) {
        std::vector<std::size_t> idx(n_per_class);
        std::iota(idx.begin(), idx.end(), c * n_per_class);
        shuffle_indices(idx, splitter);
        test_rows.insert(test_rows.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test_per_class));
        train_rows.insert(train_rows.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test_per_class), idx.end());
    }
    shuffle_indices(train_rows, splitter);
    shuffle_indices(test_rows, splitter);

    double mean[2] = {0.0, 0.0}, stdev[2] = {1.0, 1.0};
    if (standardize && train_rows.size() > 1) {
        for (int f = 0; f < 2; ++f) {
            double m = 0.0;
            for (std::size_t r : train_rows) m += xs[r * 2 + f];
            m /= static_cast<double>(train_rows.size());
            double v = 0.0;
            for (std::size_t r : train_rows) v += (xs[r * 2 + f] - m) * (xs[r * 2 + f] - m);
            v /= static_cast<double>(train_rows.size());
            mean[f] = m;
            stdev[f] = v > 0.0 ? std::sqrt(v) : 1.0;
        }
    }

    auto build = [&](const std::vector<std::size_t>& rows, Split split) {
        Dataset d;
        d.num_classes = classes;
        d.split = split;
        std::vector<float> data(rows.size() * 2);
        d.labels.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (int f = 0; f < 2; ++f)
                data[i * 2 + f] = static_cast<float>((xs[rows[i] * 2 + f] - mean[f]) / stdev[f]);
            d.labels[i] = ys[rows[i]];
        }
        d.features = Tensor({rows.size(), 2}, std::move(data));
        return d;
    };
    DatasetPair out{build(train_rows, Split::train), build(test_rows, Split::test)};

    // declared range: bounding interval of both splits, padded by half a unit
    float lo = 0.0f, hi = 0.0f;
    for (const Dataset* d : {&out.train, &out.test})
        for (float v : d->features.values()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    for (Dataset* d : {&out.train, &out.test}) {
        d->lo = std::floor(static_cast<double>(lo) - 0.5);
        d->hi = std::ceil(static_cast<double>(hi) + 0.5);
    }
    return out;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803; // unsigned byte, 3 dims
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801; // unsigned byte, 1 dim

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t offset, const std::filesystem::path& path) {
    if (offset + 4 > buf.size()) {
        throw TruncatedError(path.string() + ": truncated header at offset " + std::to_string(offset));
    }
    return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
           (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                           static_cast<char>(v)};
    out.write(bytes, 4);
}

std::string hex32(std::uint32_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s = "0x";
    for (int shift = 28; shift >= 0; shift -= 4) s += digits[(v >> shift) & 0xF];
    return s;
}

} // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t limit,
                 std::size_t num_classes) {
    if (limit == 0) throw ArgumentError("load_idx: limit 0 yields an empty dataset");
    const auto img = read_file(images);
    const auto lab = read_file(labels);

    const std::uint32_t img_magic = read_be32(img, 0, images);
    if (img_magic != kIdxImagesMagic) {
        throw FormatError(images.string() + ": bad magic " + hex32(img_magic) + " at offset 0, expected " +
                          hex32(kIdxImagesMagic));
    }
    const std::uint32_t lab_magic = read_be32(lab, 0, labels);
    if (lab_magic != kIdxLabelsMagic) {
        throw FormatError(labels.string() + ": bad magic " + hex32(lab_magic) + " at offset 0, expected " +
                          hex32(kIdxLabelsMagic));
    }
    const std::uint32_t count = read_be32(img, 4, images);
    const std::uint32_t rows = read_be32(img, 8, images);
    const std::uint32_t cols = read_be32(img, 12, images);
    const std::uint32_t label_count = read_be32(lab, 4, labels);
    if (count != label_count) {
        throw FormatError(labels.string() + ": label count " + std::to_string(label_count) + " at offset 4 != image count " +
                          std::to_string(count));
    }
    const std::size_t pixels = std::size_t{rows} * cols;
    const std::size_t n = std::min<std::size_t>(count, limit);
    if (n == 0) throw ArgumentError("load_idx: files contain no examples");
    if (img.size() < 16 + n * pixels) {
        throw TruncatedError(images.string() + ": truncated payload at offset " + std::to_string(img.size()) +
                             ", need " + std::to_string(16 + n * pixels) + " bytes");
    }
    if (lab.size() < 8 + n) {
        throw TruncatedError(labels.string() + ": truncated payload at offset " + std::to_string(lab.size()) +
                             ", need " + std::to_string(8 + n) + " bytes");
    }

    Dataset d;
    d.num_classes = num_classes;
    d.split = Split::train;
    d.lo = 0.0;
    d.hi = 1.0;
    std::vector<float> data(n * pixels);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(img[16 + i]) / 255.0f;
    d.features = Tensor({n, pixels}, std::move(data));
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int y = lab[8 + i];
        if (static_cast<std::size_t>(y) >= num_classes) {
            throw FormatError(labels.string() + ": label " + std::to_string(y) + " at offset " + std::to_string(8 + i) +
                              " >= class count " + std::to_string(num_classes));
        }
        d.labels[i] = y;
    }
    return d;
}

void save_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
              std::span<const std::uint8_t> pixels, std::span<const std::uint8_t> label_bytes, std::uint32_t count,
              std::uint32_t rows, std::uint32_t cols) {
    if (pixels.size() != std::size_t{count} * rows * cols || label_bytes.size() != count) {
        throw DimensionError("save_idx: payload sizes do not match count x rows x cols");
    }
    std::ofstream img(images, std::ios::binary | std::ios::trunc);
    std::ofstream lab(labels, std::ios::binary | std::ios::trunc);
    if (!img || !lab) throw IoError("save_idx: cannot open output files");
    write_be32(img, kIdxImagesMagic);
    write_be32(img, count);
    write_be32(img, rows);
    write_be32(img, cols);
    img.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    write_be32(lab, kIdxLabelsMagic);
    write_be32(lab, count);
    lab.write(reinterpret_cast<const char*>(label_bytes.data()), static_cast<std::streamsize>(label_bytes.size()));
    if (!img || !lab) throw IoError("save_idx: write failed");
}

std::vector<Tensor> fixed_batches(const Dataset& data, std::size_t batch_size) {
    if (batch_size == 0) throw ArgumentError("batch_size must be positive");
    std::vector<Tensor> out;
    for (std::size_t b = 0; b < data.size(); b += batch_size)
        out.push_back(data.features.rows(b, std::min(b + batch_size, data.size())));
    return out;
}

Dataset subsample(const Dataset& data, std::size_t count, std::uint64_t seed) {
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (count < idx.size()) {
        Rng rng(seed);
        shuffle_indices(idx, rng);
        idx.resize(count);
        std::sort(idx.begin(), idx.end());
    }
    return data.select(idx);
}

} // namespace meat
