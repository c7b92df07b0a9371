#pragma once

// Teacher / student MLPs split into a feature extractor and a classifier
// head, plus the one-layer aligner that projects teacher features into the
// student feature space.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sentinel/kernel.hpp"
#include "sentinel/tensor.hpp"

namespace sentinel {

enum class Variant { SentinelI, SentinelII };

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);

struct MlpSpec {
    int input_dim = 0;
    std::vector<int> feature_widths;
    std::vector<int> head_widths;  // hidden widths; the output layer to num_classes is implied
    int num_classes = 0;

    int feature_dim() const { return feature_widths.back(); }
    // Affine layer shapes in order: features, then head including the output layer.
    std::vector<std::pair<int, int>> layer_shapes() const;
    long parameter_count() const;
    void validate() const;
};

struct VariantSpec {
    MlpSpec teacher;
    MlpSpec student;
    int aligner_in = 0;
    int aligner_out = 0;
};

VariantSpec build_variant(Variant v, int input_dim, int num_classes);

template <typename Scalar>
struct Dense {
    ParamTensor<Scalar> weight;  // [d_in, d_out]
    ParamTensor<Scalar> bias;    // [1, d_out]
};

template <typename Scalar>
struct StackCache {
    std::vector<Matrix<Scalar>> inputs;
    std::vector<Matrix<Scalar>> pre_activations;
};

template <typename Scalar>
struct ModelParams {
    MlpSpec spec;
    std::vector<Dense<Scalar>> feature_layers;
    std::vector<Dense<Scalar>> head_layers;

    std::vector<ParamTensor<Scalar>*> parameters() {
        std::vector<ParamTensor<Scalar>*> out;
        for (auto* stack : {&feature_layers, &head_layers}) {
            for (auto& l : *stack) {
                out.push_back(&l.weight);
                out.push_back(&l.bias);
            }
        }
        return out;
    }
    std::vector<const ParamTensor<Scalar>*> parameters() const {
        std::vector<const ParamTensor<Scalar>*> out;
        for (const auto* stack : {&feature_layers, &head_layers}) {
            for (const auto& l : *stack) {
                out.push_back(&l.weight);
                out.push_back(&l.bias);
            }
        }
        return out;
    }
    void zero_grad() {
        for (auto* p : parameters()) p->zero_grad();
    }
    long parameter_count() const {
        long n = 0;
        for (const auto* p : parameters()) n += p->value.size();
        return n;
    }
};

template <typename Scalar>
struct AlignerParams {
    Dense<Scalar> layer;

    std::vector<ParamTensor<Scalar>*> parameters() { return {&layer.weight, &layer.bias}; }
    void zero_grad() {
        layer.weight.zero_grad();
        layer.bias.zero_grad();
    }
    int in_dim() const { return static_cast<int>(layer.weight.value.rows()); }
    int out_dim() const { return static_cast<int>(layer.weight.value.cols()); }
};

namespace detail {

template <typename Scalar>
Matrix<Scalar> stack_forward(const std::vector<Dense<Scalar>>& layers, Matrix<Scalar> x, bool relu_last,
                             StackCache<Scalar>* cache, const char* op) {
    if (cache) {
        cache->inputs.clear();
        cache->pre_activations.clear();
    }
    if (!layers.empty()) require_dim(x.cols(), layers.front().weight.value.rows(), op, "axis 1 of input");
    for (std::size_t k = 0; k < layers.size(); ++k) {
        Matrix<Scalar> pre = affine_forward<Scalar>(x, layers[k].weight.value, layers[k].bias.value);
        const bool act = relu_last || k + 1 < layers.size();
        if (cache) {
            cache->inputs.push_back(std::move(x));
            cache->pre_activations.push_back(pre);
        }
        x = act ? relu<Scalar>(pre) : std::move(pre);
    }
    return x;
}

template <typename Scalar>
Matrix<Scalar> stack_backward(std::vector<Dense<Scalar>>& layers, const StackCache<Scalar>& cache,
                              Matrix<Scalar> dy, bool relu_last) {
    if (cache.inputs.size() != layers.size()) {
        throw std::logic_error("stack_backward: cache does not match layer stack (forward not cached?)");
    }
    for (std::size_t k = layers.size(); k-- > 0;) {
        const bool act = relu_last || k + 1 < layers.size();
        if (act) dy = relu_backward<Scalar>(cache.pre_activations[k], dy);
        auto g = affine_backward<Scalar>(cache.inputs[k], layers[k].weight.value, dy);
        layers[k].weight.grad += g.dweight;
        layers[k].bias.grad += g.dbias;
        dy = std::move(g.dx);
    }
    return dy;
}

template <typename Scalar>
Dense<Scalar> init_dense(int d_in, int d_out, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix<Scalar> w(d_in, d_out);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = static_cast<Scalar>(dist(rng));
    }
    return Dense<Scalar>{ParamTensor<Scalar>(std::move(w)), ParamTensor<Scalar>(Matrix<Scalar>::Zero(1, d_out))};
}

}  // namespace detail

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
template <typename Scalar>
ModelParams<Scalar> init_params(const MlpSpec& spec, std::mt19937_64& rng) {
    spec.validate();
    ModelParams<Scalar> m;
    m.spec = spec;
    const auto shapes = spec.layer_shapes();
    const std::size_t n_feat = spec.feature_widths.size();
    for (std::size_t k = 0; k < shapes.size(); ++k) {
        auto layer = detail::init_dense<Scalar>(shapes[k].first, shapes[k].second, rng);
        (k < n_feat ? m.feature_layers : m.head_layers).push_back(std::move(layer));
    }
    return m;
}

template <typename Scalar>
AlignerParams<Scalar> init_aligner(int in_dim, int out_dim, std::mt19937_64& rng) {
    return AlignerParams<Scalar>{detail::init_dense<Scalar>(in_dim, out_dim, rng)};
}

template <typename Scalar>
Matrix<Scalar> forward_features(const ModelParams<Scalar>& m, const Matrix<Scalar>& x,
                                StackCache<Scalar>* cache = nullptr) {
    return detail::stack_forward(m.feature_layers, x, true, cache, "forward_features");
}

// The last head layer emits raw logits.
template <typename Scalar>
Matrix<Scalar> forward_head(const ModelParams<Scalar>& m, const Matrix<Scalar>& h,
                            StackCache<Scalar>* cache = nullptr) {
    return detail::stack_forward(m.head_layers, h, false, cache, "forward_head");
}

template <typename Scalar>
Matrix<Scalar> backward_features(ModelParams<Scalar>& m, const StackCache<Scalar>& cache, const Matrix<Scalar>& dh) {
    return detail::stack_backward(m.feature_layers, cache, dh, true);
}

template <typename Scalar>
Matrix<Scalar> backward_head(ModelParams<Scalar>& m, const StackCache<Scalar>& cache, const Matrix<Scalar>& dz) {
    return detail::stack_backward(m.head_layers, cache, dz, false);
}

// h'_T = ReLU(h_T W + b). The input is a detached copy of teacher features:
// backward accumulates into the aligner only.
template <typename Scalar>
Matrix<Scalar> aligner_forward(const AlignerParams<Scalar>& a, const Matrix<Scalar>& h_teacher_detached,
                               StackCache<Scalar>* cache = nullptr) {
    require_dim(h_teacher_detached.cols(), a.layer.weight.value.rows(), "aligner_forward", "axis 1 of input");
    Matrix<Scalar> pre = affine_forward<Scalar>(h_teacher_detached, a.layer.weight.value, a.layer.bias.value);
    if (cache) {
        cache->inputs.assign(1, h_teacher_detached);
        cache->pre_activations.assign(1, pre);
    }
    return relu<Scalar>(pre);
}

template <typename Scalar>
void aligner_backward(AlignerParams<Scalar>& a, const StackCache<Scalar>& cache, const Matrix<Scalar>& dy) {
    const Matrix<Scalar> dpre = relu_backward<Scalar>(cache.pre_activations.at(0), dy);
    auto g = affine_backward<Scalar>(cache.inputs.at(0), a.layer.weight.value, dpre);
    a.layer.weight.grad += g.dweight;
    a.layer.bias.grad += g.dbias;
}

// ---------------------------------------------------------------- state dictionary

struct StateEntry {
    std::string name;
    long rows = 0;
    long cols = 0;
    std::vector<double> values;  // row-major
};

using StateDict = std::vector<StateEntry>;

template <typename Scalar>
StateDict state_dict(const ModelParams<Scalar>& m) {
    StateDict sd;
    auto emit = [&](const std::string& name, const ParamTensor<Scalar>& p) {
        StateEntry e{name, static_cast<long>(p.value.rows()), static_cast<long>(p.value.cols()), {}};
        e.values.reserve(static_cast<std::size_t>(p.value.size()));
        for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
            for (Eigen::Index j = 0; j < p.value.cols(); ++j) e.values.push_back(static_cast<double>(p.value(i, j)));
        }
        sd.push_back(std::move(e));
    };
    for (std::size_t k = 0; k < m.feature_layers.size(); ++k) {
        emit("features." + std::to_string(k) + ".weight", m.feature_layers[k].weight);
        emit("features." + std::to_string(k) + ".bias", m.feature_layers[k].bias);
    }
    for (std::size_t k = 0; k < m.head_layers.size(); ++k) {
        emit("head." + std::to_string(k) + ".weight", m.head_layers[k].weight);
        emit("head." + std::to_string(k) + ".bias", m.head_layers[k].bias);
    }
    return sd;
}

template <typename Scalar>
void load_state_dict(ModelParams<Scalar>& m, const StateDict& sd) {
    auto params = m.parameters();
    if (params.size() != sd.size()) {
        throw DimensionError("load_state_dict: " + std::to_string(sd.size()) + " entries for a model with " +
                             std::to_string(params.size()) + " tensors");
    }
    for (std::size_t k = 0; k < sd.size(); ++k) {
        auto& p = *params[k];
        const auto& e = sd[k];
        if (e.rows != p.value.rows() || e.cols != p.value.cols() ||
            static_cast<Eigen::Index>(e.values.size()) != p.value.size()) {
            throw DimensionError("load_state_dict: " + e.name + " has shape " + shape_str(e.rows, e.cols) +
                                 ", model expects " + shape_str(p.value));
        }
        std::size_t n = 0;
        for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
            for (Eigen::Index j = 0; j < p.value.cols(); ++j) p.value(i, j) = static_cast<Scalar>(e.values[n++]);
        }
    }
}

// Flat parameter vector in parameters() order, each tensor row-major.
template <typename Scalar>
Vector<Scalar> flatten(const ModelParams<Scalar>& m) {
    Vector<Scalar> out(m.parameter_count());
    Eigen::Index off = 0;
    for (const auto* p : m.parameters()) {
        out.segment(off, p->value.size()) = p->value.template reshaped<Eigen::RowMajor>();
        off += p->value.size();
    }
    return out;
}

template <typename Scalar>
void unflatten(ModelParams<Scalar>& m, const Vector<Scalar>& flat) {
    require_dim(flat.size(), m.parameter_count(), "unflatten", "length of flat vector");
    Eigen::Index off = 0;
    for (auto* p : m.parameters()) {
        p->value.template reshaped<Eigen::RowMajor>() = flat.segment(off, p->value.size());
        off += p->value.size();
    }
}

}  // namespace sentinel
