#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "eqsim/channel.hpp"
#include "eqsim/losses.hpp"
#include "eqsim/pipeline.hpp"
#include "eqsim/volterra.hpp"

namespace eqsim {

// Plain-text configuration: [section] headers with key = value lines, '#'
// comments, values whitespace-separated for lists.
class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::string& path);
    static KeyValueConfig parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& section, const std::string& key) const;
    std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    int get_int(const std::string& section, const std::string& key, int fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<double> get_double_list(const std::string& section, const std::string& key,
                                        const std::vector<double>& fallback) const;
    std::vector<std::string> get_string_list(const std::string& section, const std::string& key) const;

    // Throws if any key is outside the allowed set for its section.
    void check_known_keys(const std::map<std::string, std::vector<std::string>>& allowed) const;

private:
    std::string origin_;
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

struct TrainBlock {
    int initial_iterations = 3000;
    int retrain_iterations = 500;
    double lr = 0.02;
    int batch_symbols = 1024;
};

struct VolterraBlock {
    VolterraSpec spec;
    int iterations = 3000;
    double lr = 0.02;
};

struct QuantBlock {
    std::vector<double> gammas{0.0, 0.02, 0.05, 0.1, 0.2, 0.5};
    int qat_iterations = 400;
    double bit_lr = 1.0;
    int eval_symbols = 1 << 16;
    int batch_symbols = 1024;
};

struct PipelineBlock {
    PipelineConfig pipeline;
    std::vector<DopSpec> dop_points;
    int report_symbols = 4096;
};

struct SweepBlock {
    std::string variable = "d_cd";                               // d_cd or snr_db
    std::vector<double> values{17.0, 18.8, 20.6, 22.4, 24.2, 26.0};
    std::vector<double> d_cd_offsets{20.6, 24.2};                // for the SNR sweep
};

struct ExperimentConfig {
    ChannelConfig channel;
    TrainBlock train;
    LossKind loss;
    VolterraBlock volterra;
    QuantBlock quant;
    PipelineBlock pipeline;
    SweepBlock sweep;
    std::string checkpoint;  // model file for train/evaluate
    std::string out_path;
    std::uint64_t seed = 1;
    int eval_symbols = 1 << 14;
    int num_seeds = 3;
    int workers = 4;

    // Loss kind wired to the channel's modulation (constellation, variant).
    LossKind loss_for_channel(LossVariant variant) const;

    static ExperimentConfig from_config(const KeyValueConfig& kv);
    static ExperimentConfig load(const std::string& path);
};

}  // namespace eqsim
