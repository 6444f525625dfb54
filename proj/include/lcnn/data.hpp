#pragma once

#include <string>
#include <vector>

#include "lcnn/geometry.hpp"

namespace lcnn::data {

// A labelled dataset: image batches [N,H,W,c] or manifold points [N,n+1].
struct Dataset {
    Tensor inputs;
    std::vector<int> labels;  // one class id per row, in [0, classes)
    int classes = 0;
    uint64_t seed = 0;
    std::string name;

    int64_t size() const { return inputs.ndim() ? inputs.dim(0) : 0; }
    void validate() const;
};

// Class means for the synthetic mixture: exp at the origin of tangent vectors
// of norm 2 equally spaced on the circle spanned by the first two space axes,
// so C=2 means sit at geodesic distance 4. Returns [C, n+1].
Tensor mixture_means(int n, int C, const geo::Curvature& c, DType dt = DType::F64);

// Wrapped-Gaussian mixture: per class, tangent noise N(0, spread^2) drawn at
// the origin, transported to the class mean, and exp-mapped. Row order is
// class-major; shuffle downstream.
Dataset gen_wrapped_mixture(int n, int C, int per_class, double spread, double K, uint64_t seed,
                            DType dt = DType::F64);

// Synthetic 28x28x1 digit images (f32 in [0,1]): a 5x7 glyph per digit,
// rendered with random scale/rotation/shift/brightness plus pixel noise.
// Labels cycle 0..9 so classes stay balanced.
Dataset gen_digits(int count, uint64_t seed);

// IDX (MNIST layout) ingestion: big-endian headers, magic 0x00000803 for
// images and 0x00000801 for labels. Pixels are scaled to [0,1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
// Inverse of load_idx; pixels are written as round(v*255).
void save_idx(const Dataset& d, const std::string& images_path, const std::string& labels_path);

// Deterministic reorder/selection. All of these preserve input/label pairing.
Dataset shuffle(const Dataset& d, uint64_t seed);
Dataset take(const Dataset& d, int64_t start, int64_t count);
// Fractional split (e.g. {0.8, 0.2}); parts are disjoint and drawn from a
// seed-shuffled order. Fractions must sum to at most 1.
std::vector<Dataset> split(const Dataset& d, const std::vector<double>& fracs, uint64_t seed);

struct Batch {
    Tensor inputs;
    std::vector<int> labels;
};
// Sequential batches covering the dataset exactly once; the tail batch may be
// short.
std::vector<Batch> batches(const Dataset& d, int64_t batch_size);

}  // namespace lcnn::data
