#include "sentinel/models.hpp"

#include <stdexcept>

namespace sentinel {

Variant parse_variant(const std::string& name) {
    if (name == "sentinel-1" || name == "Sentinel-I" || name == "sentinel-i") return Variant::SentinelI;
    if (name == "sentinel-2" || name == "Sentinel-II" || name == "sentinel-ii") return Variant::SentinelII;
    throw std::invalid_argument("unknown model variant '" + name + "'");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::SentinelI:
            return "sentinel-1";
        case Variant::SentinelII:
            return "sentinel-2";
    }
    throw std::invalid_argument("unknown model variant");
}

std::vector<std::pair<int, int>> MlpSpec::layer_shapes() const {
    std::vector<std::pair<int, int>> shapes;
    int prev = input_dim;
    for (int w : feature_widths) {
        shapes.emplace_back(prev, w);
        prev = w;
    }
    for (int w : head_widths) {
        shapes.emplace_back(prev, w);
        prev = w;
    }
    shapes.emplace_back(prev, num_classes);
    return shapes;
}

long MlpSpec::parameter_count() const {
    long n = 0;
    for (auto [in, out] : layer_shapes()) n += static_cast<long>(in) * out + out;
    return n;
}

void MlpSpec::validate() const {
    if (input_dim < 1) throw std::invalid_argument("MlpSpec: input_dim must be >= 1");
    if (num_classes < 1) throw std::invalid_argument("MlpSpec: num_classes must be >= 1");
    if (feature_widths.empty() || head_widths.empty()) {
        throw std::invalid_argument("MlpSpec: feature_widths and head_widths must be non-empty");
    }
    for (int w : feature_widths) {
        if (w < 1) throw std::invalid_argument("MlpSpec: feature widths must be positive");
    }
    for (int w : head_widths) {
        if (w < 1) throw std::invalid_argument("MlpSpec: head widths must be positive");
    }
}

VariantSpec build_variant(Variant v, int input_dim, int num_classes) {
    if (input_dim < 1 || num_classes < 1) {
        throw std::invalid_argument("build_variant: input_dim and num_classes must be >= 1");
    }
    const MlpSpec small{input_dim, {64, 32}, {16}, num_classes};
    VariantSpec out;
    out.student = small;
    switch (v) {
        case Variant::SentinelI:
            out.teacher = small;
            break;
        case Variant::SentinelII:
            out.teacher = MlpSpec{input_dim, {128, 64}, {32}, num_classes};
            break;
        default:
            throw std::invalid_argument("build_variant: unknown variant");
    }
    out.aligner_in = out.teacher.feature_dim();
    out.aligner_out = out.student.feature_dim();
    return out;
}

}  // namespace sentinel
