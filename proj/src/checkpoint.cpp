#include "eqsim/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace eqsim {

namespace {

constexpr int kVersion = 1;

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void expect(std::istream& in, const std::string& token, const std::string& path) {
    std::string got;
    in >> got;
    if (got != token)
        throw std::runtime_error("checkpoint " + path + ": expected '" + token + "', got '" + got + "'");
}

std::ifstream open_checkpoint(const std::string& path, std::string* kind) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    expect(in, "eqsim-checkpoint", path);
    int version = 0;
    in >> version;
    if (version != kVersion)
        throw std::runtime_error("checkpoint " + path + ": unsupported version " + std::to_string(version));
    expect(in, "model", path);
    in >> *kind;
    return in;
}

}  // namespace

void save_checkpoint(const std::string& path, const Cnn& cnn) {
    cnn.validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out << "eqsim-checkpoint " << kVersion << "\n";
    out << "model cnn\n";
    out << "layers " << cnn.specs.size() << "\n";
    for (std::size_t l = 0; l < cnn.specs.size(); ++l) {
        const auto& s = cnn.specs[l];
        out << "layer " << s.in_channels << ' ' << s.out_channels << ' ' << s.kernel << ' ' << s.padding
            << ' ' << s.stride << ' ' << s.dilation << ' ' << (s.relu ? 1 : 0) << "\n";
        out << "weights " << s.weight_count() << "\n";
        for (const auto& block : cnn.weights[l])
            for (int ci = 0; ci < block.rows(); ++ci) {
                for (int t = 0; t < block.cols(); ++t) out << fmt_double(block(ci, t)) << (t + 1 < block.cols() ? " " : "");
                out << "\n";
            }
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

void save_checkpoint(const std::string& path, const VolterraSpec& spec) {
    spec.validate();
    if (spec.weights.size() != spec.feature_count())
        throw std::runtime_error("checkpoint: volterra spec has no trained weights");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out << "eqsim-checkpoint " << kVersion << "\n";
    out << "model volterra\n";
    out << "memory " << spec.memory[0] << ' ' << spec.memory[1] << ' ' << spec.memory[2] << ' '
        << (spec.include_bias ? 1 : 0) << "\n";
    out << "weights " << spec.weights.size() << "\n";
    for (Eigen::Index i = 0; i < spec.weights.size(); ++i) out << fmt_double(spec.weights[i]) << "\n";
    out << "scales " << spec.feature_scale.size() << "\n";
    for (Eigen::Index i = 0; i < spec.feature_scale.size(); ++i) out << fmt_double(spec.feature_scale[i]) << "\n";
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::string checkpoint_kind(const std::string& path) {
    std::string kind;
    open_checkpoint(path, &kind);
    return kind;
}

Cnn load_cnn_checkpoint(const std::string& path) {
    std::string kind;
    auto in = open_checkpoint(path, &kind);
    if (kind != "cnn") throw std::runtime_error("checkpoint " + path + ": model kind is " + kind);
    expect(in, "layers", path);
    std::size_t n_layers = 0;
    in >> n_layers;
    Cnn cnn;
    for (std::size_t l = 0; l < n_layers; ++l) {
        expect(in, "layer", path);
        ConvLayerSpec s;
        int relu = 0;
        in >> s.in_channels >> s.out_channels >> s.kernel >> s.padding >> s.stride >> s.dilation >> relu;
        s.relu = relu != 0;
        expect(in, "weights", path);
        int count = 0;
        in >> count;
        if (count != s.weight_count())
            throw std::runtime_error("checkpoint " + path + ": weight count mismatch");
        Kernel k(static_cast<std::size_t>(s.out_channels), KernelBlock(s.in_channels, s.kernel));
        for (auto& block : k)
            for (int ci = 0; ci < s.in_channels; ++ci)
                for (int t = 0; t < s.kernel; ++t) in >> block(ci, t);
        cnn.specs.push_back(s);
        cnn.weights.push_back(std::move(k));
    }
    if (!in) throw std::runtime_error("checkpoint " + path + ": truncated file");
    cnn.validate();
    return cnn;
}

VolterraSpec load_volterra_checkpoint(const std::string& path) {
    std::string kind;
    auto in = open_checkpoint(path, &kind);
    if (kind != "volterra") throw std::runtime_error("checkpoint " + path + ": model kind is " + kind);
    expect(in, "memory", path);
    VolterraSpec spec;
    int bias = 0;
    in >> spec.memory[0] >> spec.memory[1] >> spec.memory[2] >> bias;
    spec.include_bias = bias != 0;
    expect(in, "weights", path);
    Eigen::Index count = 0;
    in >> count;
    if (count != spec.feature_count()) throw std::runtime_error("checkpoint " + path + ": weight count mismatch");
    spec.weights.resize(count);
    for (Eigen::Index i = 0; i < count; ++i) in >> spec.weights[i];
    expect(in, "scales", path);
    in >> count;
    spec.feature_scale.resize(count);
    for (Eigen::Index i = 0; i < count; ++i) in >> spec.feature_scale[i];
    if (!in) throw std::runtime_error("checkpoint " + path + ": truncated file");
    spec.validate();
    return spec;
}

}  // namespace eqsim
