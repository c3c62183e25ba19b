#include "eqsim/config.hpp"

#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace eqsim {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& section, const std::string& key, const std::string& v) {
    if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: [" + section + "] " + key + ": cannot parse '" + v +
                                    "' as a number");
    }
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path);
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text, const std::string& origin) {
    KeyValueConfig cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": empty section name");
            cfg.sections_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": expected key = value");
        if (section.empty())
            throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": key outside any section");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": empty key");
        cfg.sections_[section][key] = value;
    }
    return cfg;
}

bool KeyValueConfig::has(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string KeyValueConfig::get_string(const std::string& section, const std::string& key,
                                       const std::string& fallback) const {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return fallback;
    const auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

double KeyValueConfig::get_double(const std::string& section, const std::string& key, double fallback) const {
    if (!has(section, key)) return fallback;
    return parse_double(section, key, get_string(section, key, ""));
}

int KeyValueConfig::get_int(const std::string& section, const std::string& key, int fallback) const {
    if (!has(section, key)) return fallback;
    const double d = parse_double(section, key, get_string(section, key, ""));
    const int i = static_cast<int>(d);
    if (static_cast<double>(i) != d)
        throw std::invalid_argument("config: [" + section + "] " + key + " must be an integer");
    return i;
}

bool KeyValueConfig::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_string(section, key, "");
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("config: [" + section + "] " + key + ": cannot parse '" + v + "' as a bool");
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& section, const std::string& key,
                                                    const std::vector<double>& fallback) const {
    if (!has(section, key)) return fallback;
    std::istringstream in(get_string(section, key, ""));
    std::vector<double> out;
    std::string tok;
    while (in >> tok) out.push_back(parse_double(section, key, tok));
    if (out.empty()) throw std::invalid_argument("config: [" + section + "] " + key + " is an empty list");
    return out;
}

std::vector<std::string> KeyValueConfig::get_string_list(const std::string& section,
                                                         const std::string& key) const {
    std::istringstream in(get_string(section, key, ""));
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

void KeyValueConfig::check_known_keys(const std::map<std::string, std::vector<std::string>>& allowed) const {
    for (const auto& [section, keys] : sections_) {
        const auto it = allowed.find(section);
        if (it == allowed.end())
            throw std::invalid_argument("config " + origin_ + ": unknown section [" + section + "]");
        for (const auto& [key, value] : keys) {
            bool found = false;
            for (const auto& k : it->second) found = found || k == key;
            if (!found)
                throw std::invalid_argument("config " + origin_ + ": unknown key '" + key + "' in [" +
                                            section + "]");
        }
    }
}

namespace {

DopSpec parse_dop(const std::string& token) {
    // in x out x k x instances, e.g. 3x3x21x4
    DopSpec d;
    int vals[4] = {1, 1, 1, 1};
    std::size_t pos = 0;
    for (int i = 0; i < 4; ++i) {
        const auto next = token.find('x', pos);
        const std::string part = token.substr(pos, next == std::string::npos ? next : next - pos);
        try {
            vals[i] = std::stoi(part);
        } catch (const std::exception&) {
            throw std::invalid_argument("config: malformed dop token '" + token + "'");
        }
        if (next == std::string::npos) {
            if (i != 3) throw std::invalid_argument("config: dop token '" + token + "' needs 4 fields");
            break;
        }
        pos = next + 1;
    }
    d.in = vals[0];
    d.out = vals[1];
    d.k = vals[2];
    d.instances = vals[3];
    return d;
}

const std::map<std::string, std::vector<std::string>> kKnownKeys = {
    {"channel",
     {"modulation", "symbol_rate_gbd", "oversampling", "pulse_shape", "rc_rolloff", "rc_span_symbols",
      "snr_db", "d_cd_ps_nm_km", "attenuation_db_km", "length_km", "wavelength_nm", "fft_size"}},
    {"model", {"checkpoint"}},
    {"loss", {"kind", "mu", "normalize"}},
    {"train", {"initial_iterations", "retrain_iterations", "lr", "batch_symbols"}},
    {"volterra", {"memory", "bias", "iterations", "lr"}},
    {"quant", {"gammas", "qat_iterations", "bit_lr", "eval_symbols", "batch_symbols"}},
    {"pipeline", {"clock_mhz", "stage_depth", "loss_depth", "dop_points", "report_symbols"}},
    {"sweep", {"variable", "values", "d_cd_offsets"}},
    {"experiment", {"eval_symbols", "seeds", "workers", "out", "seed"}},
};

}  // namespace

LossKind ExperimentConfig::loss_for_channel(LossVariant variant) const {
    LossKind k = loss;
    k.variant = variant;
    k.constellation = channel.modulation.target_levels;
    return k;
}

ExperimentConfig ExperimentConfig::from_config(const KeyValueConfig& kv) {
    kv.check_known_keys(kKnownKeys);
    ExperimentConfig cfg;

    const std::string mod = kv.get_string("channel", "modulation", "pam2");
    if (mod == "pam2")
        cfg.channel.modulation = ModulationScheme::pam(2);
    else if (mod == "pam4")
        cfg.channel.modulation = ModulationScheme::pam(4);
    else
        throw std::invalid_argument("config: [channel] modulation must be pam2 or pam4");
    cfg.channel.symbol_rate_gbd = kv.get_double("channel", "symbol_rate_gbd", 25.0);
    cfg.channel.oversampling = kv.get_int("channel", "oversampling", 2);
    const std::string shape = kv.get_string("channel", "pulse_shape", "rc");
    if (shape == "rc")
        cfg.channel.pulse_shape = PulseShape::RaisedCosine;
    else if (shape == "impulse")
        cfg.channel.pulse_shape = PulseShape::Impulse;
    else
        throw std::invalid_argument("config: [channel] pulse_shape must be rc or impulse");
    cfg.channel.rc_rolloff = kv.get_double("channel", "rc_rolloff", 0.2);
    cfg.channel.rc_span_symbols = kv.get_int("channel", "rc_span_symbols", 15);
    cfg.channel.snr_db = kv.get_double("channel", "snr_db", 20.0);
    cfg.channel.fiber.dispersion_ps_nm_km = kv.get_double("channel", "d_cd_ps_nm_km", 17.0);
    cfg.channel.fiber.attenuation_db_km = kv.get_double("channel", "attenuation_db_km", 0.2);
    cfg.channel.fiber.length_km = kv.get_double("channel", "length_km", 30.0);
    cfg.channel.fiber.wavelength_nm = kv.get_double("channel", "wavelength_nm", 1550.0);
    cfg.channel.fft_size = kv.get_int("channel", "fft_size", 0);
    cfg.channel.validate();

    cfg.checkpoint = kv.get_string("model", "checkpoint", "");

    const std::string kind = kv.get_string("loss", "kind", "mse");
    if (kind == "mse")
        cfg.loss.variant = LossVariant::Mse;
    else if (kind == "unsup")
        cfg.loss.variant = cfg.channel.modulation.order == 2 ? LossVariant::UnsupPam2 : LossVariant::UnsupPam4;
    else
        throw std::invalid_argument("config: [loss] kind must be mse or unsup");
    cfg.loss.mu = kv.get_double("loss", "mu", 4.0);
    cfg.loss.normalize = kv.get_bool("loss", "normalize", true);
    cfg.loss.constellation = cfg.channel.modulation.target_levels;

    cfg.train.initial_iterations = kv.get_int("train", "initial_iterations", 3000);
    cfg.train.retrain_iterations = kv.get_int("train", "retrain_iterations", 500);
    cfg.train.lr = kv.get_double("train", "lr", 0.02);
    cfg.train.batch_symbols = kv.get_int("train", "batch_symbols", 1024);
    if (cfg.train.initial_iterations <= 0 || cfg.train.retrain_iterations <= 0)
        throw std::invalid_argument("config: [train] iteration counts must be positive");

    const auto mem = kv.get_double_list("volterra", "memory", {35, 17, 9});
    if (mem.size() != 3) throw std::invalid_argument("config: [volterra] memory needs 3 values");
    cfg.volterra.spec.memory = {static_cast<int>(mem[0]), static_cast<int>(mem[1]), static_cast<int>(mem[2])};
    cfg.volterra.spec.include_bias = kv.get_bool("volterra", "bias", true);
    cfg.volterra.spec.validate();
    cfg.volterra.iterations = kv.get_int("volterra", "iterations", cfg.train.initial_iterations);
    cfg.volterra.lr = kv.get_double("volterra", "lr", cfg.train.lr);

    cfg.quant.gammas = kv.get_double_list("quant", "gammas", cfg.quant.gammas);
    cfg.quant.qat_iterations = kv.get_int("quant", "qat_iterations", cfg.quant.qat_iterations);
    cfg.quant.bit_lr = kv.get_double("quant", "bit_lr", cfg.quant.bit_lr);
    cfg.quant.eval_symbols = kv.get_int("quant", "eval_symbols", cfg.quant.eval_symbols);
    cfg.quant.batch_symbols = kv.get_int("quant", "batch_symbols", cfg.quant.batch_symbols);

    cfg.pipeline.pipeline = PipelineConfig::default_cnn();
    cfg.pipeline.pipeline.clock_hz = kv.get_double("pipeline", "clock_mhz", 300.0) * 1e6;
    cfg.pipeline.pipeline.bits_per_symbol = cfg.channel.modulation.bits_per_symbol();
    const int depth = kv.get_int("pipeline", "stage_depth", 25);
    for (auto& layer : cfg.pipeline.pipeline.layers) {
        layer.fp_depth = depth;
        layer.bp_depth = depth;
    }
    cfg.pipeline.pipeline.loss_depth = kv.get_int("pipeline", "loss_depth", 8);
    for (const auto& tok : kv.get_string_list("pipeline", "dop_points"))
        cfg.pipeline.dop_points.push_back(parse_dop(tok));
    if (cfg.pipeline.dop_points.empty())
        cfg.pipeline.dop_points = {DopSpec{1, 1, 1, 1}, DopSpec{3, 1, 1, 1}, DopSpec{3, 3, 1, 1},
                                   DopSpec{3, 3, 21, 1}, DopSpec{3, 3, 21, 4}};
    cfg.pipeline.report_symbols = kv.get_int("pipeline", "report_symbols", 4096);

    cfg.sweep.variable = kv.get_string("sweep", "variable", "d_cd");
    if (cfg.sweep.variable != "d_cd" && cfg.sweep.variable != "snr_db")
        throw std::invalid_argument("config: [sweep] variable must be d_cd or snr_db");
    const std::vector<double> default_values =
        cfg.sweep.variable == "d_cd" ? std::vector<double>{17.0, 18.8, 20.6, 22.4, 24.2, 26.0}
                                     : std::vector<double>{8, 10, 12, 14, 16, 18, 20, 22, 25};
    cfg.sweep.values = kv.get_double_list("sweep", "values", default_values);
    cfg.sweep.d_cd_offsets = kv.get_double_list("sweep", "d_cd_offsets", cfg.sweep.d_cd_offsets);
    if (cfg.sweep.values.empty()) throw std::invalid_argument("config: [sweep] values must be non-empty");

    cfg.eval_symbols = kv.get_int("experiment", "eval_symbols", cfg.eval_symbols);
    cfg.num_seeds = kv.get_int("experiment", "seeds", cfg.num_seeds);
    cfg.workers = kv.get_int("experiment", "workers", cfg.workers);
    cfg.out_path = kv.get_string("experiment", "out", "");
    cfg.seed = static_cast<std::uint64_t>(kv.get_int("experiment", "seed", 1));
    if (cfg.eval_symbols <= 0 || cfg.num_seeds <= 0 || cfg.workers <= 0)
        throw std::invalid_argument("config: [experiment] sizes must be positive");
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    return from_config(KeyValueConfig::parse_file(path));
}

}  // namespace eqsim
