#include "lcnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace lcnn::data {

namespace {

constexpr uint32_t kImageMagic = 0x00000803;
constexpr uint32_t kLabelMagic = 0x00000801;

std::string hex32(uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "0x%08x", v);
    return buf;
}

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("idx: cannot open " + path);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(f),
                                      std::istreambuf_iterator<char>());
}

uint32_t be32(const std::vector<unsigned char>& b, size_t off, const std::string& path) {
    if (off + 4 > b.size())
        throw IoError("idx: truncated header in " + path + ": file has only " +
                      std::to_string(b.size()) + " bytes");
    return (uint32_t(b[off]) << 24) | (uint32_t(b[off + 1]) << 16) |
           (uint32_t(b[off + 2]) << 8) | uint32_t(b[off + 3]);
}

void put32(std::ofstream& f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

Dataset gather(const Dataset& d, const std::vector<int64_t>& idx) {
    int64_t n = d.size();
    int64_t row = n > 0 ? d.inputs.numel() / n : 0;
    Shape shape = d.inputs.shape();
    shape[0] = static_cast<int64_t>(idx.size());
    Tensor out = Tensor::zeros(shape, d.inputs.dtype());
    Dataset r;
    r.labels.reserve(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
        int64_t src = idx[i];
        for (int64_t j = 0; j < row; ++j)
            out.set(static_cast<int64_t>(i) * row + j, d.inputs.at(src * row + j));
        r.labels.push_back(d.labels[static_cast<size_t>(src)]);
    }
    r.inputs = out;
    r.classes = d.classes;
    r.seed = d.seed;
    r.name = d.name;
    return r;
}

// Classic 5x7 digit glyphs, one row per byte, bit 4 = leftmost column.
constexpr unsigned char kGlyphs[10][7] = {
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}, {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}, {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}, {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}, {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}};

double glyph_sample(int digit, double gx, double gy) {
    // Bilinear sample of the binary glyph; outside reads 0.
    auto bit = [&](int x, int y) -> double {
        if (x < 0 || x >= 5 || y < 0 || y >= 7) return 0.0;
        return (kGlyphs[digit][y] >> (4 - x)) & 1 ? 1.0 : 0.0;
    };
    int x0 = static_cast<int>(std::floor(gx)), y0 = static_cast<int>(std::floor(gy));
    double fx = gx - x0, fy = gy - y0;
    return (1 - fx) * (1 - fy) * bit(x0, y0) + fx * (1 - fy) * bit(x0 + 1, y0) +
           (1 - fx) * fy * bit(x0, y0 + 1) + fx * fy * bit(x0 + 1, y0 + 1);
}

}  // namespace

void Dataset::validate() const {
    int64_t n = size();
    if (n < 1) throw ConfigError("dataset: empty");
    if (static_cast<int64_t>(labels.size()) != n)
        throw ConfigError("dataset: " + std::to_string(n) + " rows vs " +
                          std::to_string(labels.size()) + " labels");
    for (int l : labels)
        if (l < 0 || l >= classes)
            throw ConfigError("dataset: label " + std::to_string(l) + " outside [0, " +
                              std::to_string(classes) + ")");
}

Tensor mixture_means(int n, int C, const geo::Curvature& c, DType dt) {
    if (n < 2) throw ConfigError("mixture: need manifold dimension >= 2");
    if (C < 2) throw ConfigError("mixture: need at least 2 classes");
    Tensor m = Tensor::zeros({C, n}, dt);
    for (int k = 0; k < C; ++k) {
        double th = 2.0 * M_PI * k / C;
        m.set(static_cast<int64_t>(k) * n + 0, 2.0 * std::cos(th));
        m.set(static_cast<int64_t>(k) * n + 1, 2.0 * std::sin(th));
    }
    return geo::exp_map_origin(m, c);
}

Dataset gen_wrapped_mixture(int n, int C, int per_class, double spread, double K, uint64_t seed,
                            DType dt) {
    if (per_class < 1) throw ConfigError("mixture: per_class must be >= 1");
    if (spread < 0.0) throw ConfigError("mixture: spread must be nonnegative");
    geo::Curvature c(K);
    Tensor means = mixture_means(n, C, c, dt);
    Rng rng(seed);
    std::vector<Tensor> parts;
    Dataset d;
    for (int k = 0; k < C; ++k) {
        Tensor eps = spread > 0.0 ? rand_normal({per_class, n}, 0.0, spread, rng, dt)
                                  : Tensor::zeros({per_class, n}, dt);
        Tensor v0 = concat({Tensor::zeros({per_class, 1}, dt), eps}, -1);
        Tensor mu = broadcast_to(slice(means, 0, k, k + 1), {per_class, n + 1});
        Tensor v = geo::pt_from_origin(mu, v0, c);
        parts.push_back(geo::exp_map(mu, v, c));
        for (int j = 0; j < per_class; ++j) d.labels.push_back(k);
    }
    d.inputs = concat(parts, 0);
    d.classes = C;
    d.seed = seed;
    d.name = "wrapped-mixture";
    return d;
}

Dataset gen_digits(int count, uint64_t seed) {
    if (count < 1) throw ConfigError("digits: count must be >= 1");
    Rng rng(seed);
    Tensor imgs = Tensor::zeros({count, 28, 28, 1}, DType::F32);
    Dataset d;
    d.labels.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        int digit = i % 10;
        double scale = rng.uniform(2.8, 3.4);
        double angle = rng.uniform(-0.15, 0.15);
        double cx = 14.0 + rng.uniform(-2.0, 2.0);
        double cy = 14.0 + rng.uniform(-2.0, 2.0);
        double gain = rng.uniform(0.7, 1.0);
        double ca = std::cos(angle), sa = std::sin(angle);
        for (int r = 0; r < 28; ++r)
            for (int col = 0; col < 28; ++col) {
                // Inverse-map the output pixel into glyph coordinates.
                double dx = col - cx, dy = r - cy;
                double gx = (ca * dx + sa * dy) / scale + 2.5;
                double gy = (-sa * dx + ca * dy) / scale + 3.5;
                double v = gain * glyph_sample(digit, gx - 0.5, gy - 0.5);
                v += rng.normal(0.0, 0.04);
                v = std::min(1.0, std::max(0.0, v));
                imgs.set((static_cast<int64_t>(i) * 28 + r) * 28 + col, v);
            }
        d.labels.push_back(digit);
    }
    d.inputs = imgs;
    d.classes = 10;
    d.seed = seed;
    d.name = "digits";
    return d;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    auto ib = read_file(images_path);
    uint32_t magic = be32(ib, 0, images_path);
    if (magic != kImageMagic)
        throw IoError("idx: bad magic " + hex32(magic) + " in " + images_path + " (expected " +
                      hex32(kImageMagic) + " image file)");
    int64_t n = be32(ib, 4, images_path);
    int64_t rows = be32(ib, 8, images_path);
    int64_t cols = be32(ib, 12, images_path);
    size_t want = 16 + static_cast<size_t>(n) * rows * cols;
    if (ib.size() != want)
        throw IoError("idx: truncated image payload in " + images_path + ": expected " +
                      std::to_string(want) + " bytes, found " + std::to_string(ib.size()));

    auto lb = read_file(labels_path);
    uint32_t lmagic = be32(lb, 0, labels_path);
    if (lmagic != kLabelMagic)
        throw IoError("idx: bad magic " + hex32(lmagic) + " in " + labels_path + " (expected " +
                      hex32(kLabelMagic) + " label file)");
    int64_t ln = be32(lb, 4, labels_path);
    if (lb.size() != 8 + static_cast<size_t>(ln))
        throw IoError("idx: truncated label payload in " + labels_path + ": expected " +
                      std::to_string(8 + ln) + " bytes, found " + std::to_string(lb.size()));
    if (ln != n)
        throw IoError("idx: count mismatch: " + std::to_string(n) + " images in " + images_path +
                      " vs " + std::to_string(ln) + " labels in " + labels_path);
    if (n < 1) throw IoError("idx: empty dataset in " + images_path);

    Dataset d;
    d.inputs = Tensor::zeros({n, rows, cols, 1}, DType::F32);
    int64_t px = n * rows * cols;
    for (int64_t i = 0; i < px; ++i)
        d.inputs.set(i, ib[16 + static_cast<size_t>(i)] / 255.0);
    d.labels.reserve(static_cast<size_t>(n));
    int maxl = 0;
    for (int64_t i = 0; i < n; ++i) {
        int l = lb[8 + static_cast<size_t>(i)];
        maxl = std::max(maxl, l);
        d.labels.push_back(l);
    }
    d.classes = maxl + 1;
    d.name = images_path;
    return d;
}

void save_idx(const Dataset& d, const std::string& images_path, const std::string& labels_path) {
    d.validate();
    if (d.inputs.ndim() != 4 || d.inputs.dim(3) != 1)
        throw ConfigError("idx: can only write [N,H,W,1] image datasets, got " +
                          shape_str(d.inputs.shape()));
    int64_t n = d.size(), rows = d.inputs.dim(1), cols = d.inputs.dim(2);
    std::ofstream fi(images_path, std::ios::binary);
    if (!fi) throw IoError("idx: cannot write " + images_path);
    put32(fi, kImageMagic);
    put32(fi, static_cast<uint32_t>(n));
    put32(fi, static_cast<uint32_t>(rows));
    put32(fi, static_cast<uint32_t>(cols));
    for (int64_t i = 0; i < n * rows * cols; ++i) {
        double v = d.inputs.at(i);
        auto b = static_cast<unsigned char>(std::lround(std::min(1.0, std::max(0.0, v)) * 255.0));
        fi.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!fi) throw IoError("idx: short write to " + images_path);

    std::ofstream fl(labels_path, std::ios::binary);
    if (!fl) throw IoError("idx: cannot write " + labels_path);
    put32(fl, kLabelMagic);
    put32(fl, static_cast<uint32_t>(n));
    for (int l : d.labels) {
        auto b = static_cast<unsigned char>(l);
        fl.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!fl) throw IoError("idx: short write to " + labels_path);
}

Dataset shuffle(const Dataset& d, uint64_t seed) {
    d.validate();
    std::vector<int64_t> idx(static_cast<size_t>(d.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 gen(seed);
    std::shuffle(idx.begin(), idx.end(), gen);
    return gather(d, idx);
}

Dataset take(const Dataset& d, int64_t start, int64_t count) {
    d.validate();
    if (start < 0 || count < 1 || start + count > d.size())
        throw ConfigError("dataset take: range [" + std::to_string(start) + ", " +
                          std::to_string(start + count) + ") outside " +
                          std::to_string(d.size()) + " rows");
    std::vector<int64_t> idx(static_cast<size_t>(count));
    std::iota(idx.begin(), idx.end(), start);
    return gather(d, idx);
}

std::vector<Dataset> split(const Dataset& d, const std::vector<double>& fracs, uint64_t seed) {
    d.validate();
    if (fracs.empty()) throw ConfigError("split: need at least one fraction");
    double total = 0.0;
    for (double f : fracs) {
        if (f <= 0.0) throw ConfigError("split: fractions must be positive");
        total += f;
    }
    if (total > 1.0 + 1e-9)
        throw ConfigError("split: fractions sum to " + std::to_string(total) +
                          ", oversubscribing the dataset");
    Dataset mixed = shuffle(d, seed);
    std::vector<Dataset> parts;
    int64_t off = 0;
    for (size_t i = 0; i < fracs.size(); ++i) {
        auto want = static_cast<int64_t>(std::floor(fracs[i] * static_cast<double>(d.size()) + 1e-9));
        if (want < 1 || off + want > d.size())
            throw ConfigError("split: fraction " + std::to_string(fracs[i]) +
                              " yields no usable rows");
        parts.push_back(take(mixed, off, want));
        parts.back().name = d.name + "/part" + std::to_string(i);
        off += want;
    }
    return parts;
}

std::vector<Batch> batches(const Dataset& d, int64_t batch_size) {
    d.validate();
    if (batch_size < 1) throw ConfigError("batches: batch size must be >= 1");
    std::vector<Batch> out;
    for (int64_t off = 0; off < d.size(); off += batch_size) {
        int64_t count = std::min(batch_size, d.size() - off);
        Dataset part = take(d, off, count);
        out.push_back({part.inputs, part.labels});
    }
    return out;
}

}  // namespace lcnn::data
