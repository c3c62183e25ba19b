#include "eqsim/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace eqsim {

namespace {
long long ceil_div(long long a, long long b) { return (a + b - 1) / b; }
}

long long StageDesc::per_instance_interval() const {
    const long long ii = ceil_div(c_in, dop.in) * ceil_div(c_out, dop.out) * ceil_div(kernel, dop.k);
    return std::max<long long>(ii, 1);
}

double StageDesc::initiation_interval() const {
    return static_cast<double>(per_instance_interval()) / static_cast<double>(dop.instances);
}

void PipelineConfig::validate() const {
    if (layers.empty()) throw std::invalid_argument("pipeline: at least one layer required");
    if (!(clock_hz > 0.0)) throw std::invalid_argument("pipeline: clock must be positive");
    if (oversampling < 1) throw std::invalid_argument("pipeline: oversampling must be >= 1");
    for (const auto& l : layers) {
        if (l.c_in < 1 || l.c_out < 1 || l.kernel < 1) throw std::invalid_argument("pipeline: bad layer dims");
        if (l.stride != 1 && l.stride != 2) throw std::invalid_argument("pipeline: stride must be 1 or 2");
        for (const DopSpec* d : {&l.fp_dop, &l.bp_dop})
            if (d->in < 1 || d->out < 1 || d->k < 1 || d->instances < 1)
                throw std::invalid_argument("pipeline: DOP values must be >= 1");
        if (l.fp_depth < 1 || l.bp_depth < 1) throw std::invalid_argument("pipeline: depth must be >= 1");
    }
}

std::vector<StageDesc> PipelineConfig::stages() const {
    validate();
    std::vector<StageDesc> out;
    double samples_per_symbol = static_cast<double>(oversampling);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        const double out_rate = samples_per_symbol / layer.stride;
        StageDesc fp;
        fp.name = "fp" + std::to_string(l + 1);
        fp.c_in = layer.c_in;
        fp.c_out = layer.c_out;
        fp.kernel = layer.kernel;
        fp.dop = layer.fp_dop;
        fp.depth = layer.fp_depth;
        fp.firings_per_symbol = out_rate;
        out.push_back(fp);

        StageDesc bp = fp;
        bp.name = "bp" + std::to_string(l + 1);
        bp.dop = layer.bp_dop;
        bp.depth = layer.bp_depth;
        out.push_back(bp);

        samples_per_symbol = out_rate;
    }
    return out;
}

void PipelineConfig::set_uniform_dop(const DopSpec& dop) {
    for (auto& layer : layers) {
        DopSpec d;
        d.in = std::min(dop.in, layer.c_in);
        d.out = std::min(dop.out, layer.c_out);
        d.k = std::min(dop.k, layer.kernel);
        d.instances = dop.instances;
        layer.fp_dop = d;
        layer.bp_dop = d;
    }
}

int PipelineConfig::total_depth() const {
    int depth = loss_depth;
    for (const auto& l : layers) depth += l.fp_depth + l.bp_depth;
    return depth;
}

PipelineConfig PipelineConfig::default_cnn() {
    PipelineConfig cfg;
    cfg.layers = {
        {.c_in = 1, .c_out = 3, .kernel = 21, .stride = 1},
        {.c_in = 3, .c_out = 3, .kernel = 21, .stride = 1},
        {.c_in = 3, .c_out = 1, .kernel = 21, .stride = 2},
    };
    return cfg;
}

Throughput pipeline_throughput(const PipelineConfig& cfg) {
    Throughput t;
    for (const auto& s : cfg.stages()) {
        const double cps = s.cycles_per_symbol();
        if (cps > t.bottleneck_cycles_per_symbol) {
            t.bottleneck_cycles_per_symbol = cps;
            t.bottleneck_stage = s.name;
        }
    }
    t.symbols_per_s = cfg.clock_hz / t.bottleneck_cycles_per_symbol;
    t.bits_per_s = t.symbols_per_s * cfg.bits_per_symbol;
    return t;
}

long long BufferTrace::total_max_occupancy() const {
    long long sum = 0;
    for (const auto& b : buffers) sum += b.max_occupancy;
    return sum;
}

namespace {

// Word-counting queue; the red feature-map buffers additionally track their
// maximum occupancy.
struct Queue {
    long long count = 0;
    long long produced = 0;
    long long consumed = 0;
    long long max_count = 0;

    void push(long long n) {
        count += n;
        produced += n;
        max_count = std::max(max_count, count);
    }
    void pop(long long n) {
        count -= n;
        consumed += n;
        if (count < 0) throw std::logic_error("pipeline queue went negative");
    }
};

struct SimStage {
    std::string name;
    long long per_instance_ii = 1;
    int instances = 1;
    int depth = 1;
    std::vector<std::pair<Queue*, long long>> consumes;
    std::vector<std::pair<Queue*, long long>> produces;
    long long max_firings = -1;  // -1 = unlimited
    bool gated = false;          // naive mode: held until the FP side drains

    long long pool = 0;  // accumulated instance-cycles, capped
    long long fired = 0;
    std::deque<std::pair<long long, int>> in_flight;  // completion cycle, firings

    bool ready() const {
        if (gated) return false;
        if (max_firings >= 0 && fired >= max_firings) return false;
        if (pool < per_instance_ii) return false;
        for (const auto& [q, n] : consumes)
            if (q->count < n) return false;
        return true;
    }
};

}  // namespace

BufferTrace simulate_buffers(const PipelineConfig& cfg, int n_symbols, bool naive_mode) {
    cfg.validate();
    const auto descs = cfg.stages();
    const int n_layers = static_cast<int>(cfg.layers.size());
    if (n_symbols * cfg.oversampling < cfg.total_depth())
        throw std::invalid_argument("simulate_buffers: sequence shorter than the pipeline depth");

    // Queues: FP streams, red tee buffers, loss in/out, gradient streams.
    std::vector<Queue> q_fp(static_cast<std::size_t>(n_layers) + 1);  // q_fp[l] feeds FP l; last feeds loss
    std::vector<Queue> q_tee(static_cast<std::size_t>(n_layers));     // red buffer per layer
    std::vector<Queue> q_g(static_cast<std::size_t>(n_layers));      // gradient stream into BP l

    // Stage output rates in the sample domain of each layer.
    std::vector<long long> fp_firings(static_cast<std::size_t>(n_layers));
    long long samples = static_cast<long long>(n_symbols) * cfg.oversampling;
    const long long n_input_samples = samples;
    for (int l = 0; l < n_layers; ++l) {
        samples /= cfg.layers[static_cast<std::size_t>(l)].stride;
        fp_firings[static_cast<std::size_t>(l)] = samples;
    }

    std::vector<SimStage> stages;
    for (int l = 0; l < n_layers; ++l) {
        const auto& layer = cfg.layers[static_cast<std::size_t>(l)];
        SimStage fp;
        fp.name = descs[static_cast<std::size_t>(2 * l)].name;
        fp.per_instance_ii = descs[static_cast<std::size_t>(2 * l)].per_instance_interval();
        fp.instances = layer.fp_dop.instances;
        fp.depth = layer.fp_depth;
        fp.max_firings = fp_firings[static_cast<std::size_t>(l)];
        fp.consumes = {{&q_fp[static_cast<std::size_t>(l)], static_cast<long long>(layer.stride) * layer.c_in}};
        fp.produces = {{&q_fp[static_cast<std::size_t>(l) + 1], layer.c_out}};
        if (l + 1 < n_layers)
            fp.produces.push_back({&q_tee[static_cast<std::size_t>(l) + 1], layer.c_out});
        stages.push_back(std::move(fp));
    }
    {
        SimStage loss;
        loss.name = "loss";
        loss.per_instance_ii = 1;
        loss.depth = cfg.loss_depth;
        loss.max_firings = fp_firings[static_cast<std::size_t>(n_layers - 1)];
        loss.consumes = {{&q_fp[static_cast<std::size_t>(n_layers)],
                          cfg.layers[static_cast<std::size_t>(n_layers - 1)].c_out}};
        loss.produces = {{&q_g[static_cast<std::size_t>(n_layers - 1)],
                          cfg.layers[static_cast<std::size_t>(n_layers - 1)].c_out}};
        loss.gated = naive_mode;
        stages.push_back(std::move(loss));
    }
    for (int l = n_layers - 1; l >= 0; --l) {
        const auto& layer = cfg.layers[static_cast<std::size_t>(l)];
        SimStage bp;
        bp.name = descs[static_cast<std::size_t>(2 * l + 1)].name;
        bp.per_instance_ii = descs[static_cast<std::size_t>(2 * l + 1)].per_instance_interval();
        bp.instances = layer.bp_dop.instances;
        bp.depth = layer.bp_depth;
        bp.max_firings = fp_firings[static_cast<std::size_t>(l)];
        bp.consumes = {{&q_g[static_cast<std::size_t>(l)], layer.c_out},
                       {&q_tee[static_cast<std::size_t>(l)],
                        static_cast<long long>(layer.stride) * layer.c_in}};
        if (l > 0)  // the first layer has no CalcInGrad
            bp.produces = {{&q_g[static_cast<std::size_t>(l) - 1],
                            static_cast<long long>(layer.stride) * layer.c_in}};
        bp.gated = naive_mode;
        stages.push_back(std::move(bp));
    }

    // The source is paced at the design's bottleneck rate.
    double src_interval = 0.5;  // cycles per input sample
    for (const auto& s : descs)
        src_interval = std::max(src_interval, s.cycles_per_symbol() / cfg.oversampling);

    long long produced_inputs = 0;
    double src_credit = 0.0;
    long long cycle = 0;
    long long last_progress_cycle = 0;
    long long loss_first_cycle = -1, loss_last_cycle = -1;
    const long long loss_mark_lo = fp_firings[static_cast<std::size_t>(n_layers - 1)] / 10;
    const long long loss_mark_hi = fp_firings[static_cast<std::size_t>(n_layers - 1)] * 9 / 10;
    const std::size_t loss_index = static_cast<std::size_t>(n_layers);
    long long guard = 1000 + 100 * static_cast<long long>(cfg.total_depth());
    for (const auto& s : stages) guard = std::max(guard, 100 * s.per_instance_ii);

    auto work_pending = [&]() {
        if (produced_inputs < n_input_samples) return true;
        for (const auto& s : stages)
            if (s.fired < s.max_firings || !s.in_flight.empty()) return true;
        return false;
    };

    while (work_pending()) {
        bool progress = false;

        // Deliver completions scheduled for this cycle.
        for (auto& s : stages) {
            while (!s.in_flight.empty() && s.in_flight.front().first <= cycle) {
                const int n = s.in_flight.front().second;
                s.in_flight.pop_front();
                for (auto& [q, words] : s.produces) q->push(words * n);
                progress = true;
            }
        }

        // Naive mode: release the backward side once the forward side is done.
        if (naive_mode) {
            bool fp_done = produced_inputs >= n_input_samples;
            for (int l = 0; l < n_layers && fp_done; ++l)
                fp_done = stages[static_cast<std::size_t>(l)].fired >=
                              stages[static_cast<std::size_t>(l)].max_firings &&
                          stages[static_cast<std::size_t>(l)].in_flight.empty();
            if (fp_done)
                for (auto& s : stages) s.gated = false;
        }

        // Source injection.
        src_credit += 1.0;
        while (src_credit >= src_interval && produced_inputs < n_input_samples) {
            src_credit -= src_interval;
            q_fp[0].push(1);
            q_tee[0].push(1);
            ++produced_inputs;
            progress = true;
        }

        // Stage starts; the pool models instance-cycles of MAC capacity.
        for (std::size_t si = 0; si < stages.size(); ++si) {
            auto& s = stages[si];
            s.pool = std::min(s.pool + s.instances, s.per_instance_ii * s.instances);
            int started = 0;
            while (s.ready()) {
                s.pool -= s.per_instance_ii;
                for (auto& [q, words] : s.consumes) q->pop(words);
                ++s.fired;
                ++started;
                progress = true;
                if (si == loss_index) {
                    if (s.fired == loss_mark_lo) loss_first_cycle = cycle;
                    if (s.fired == loss_mark_hi) loss_last_cycle = cycle;
                }
            }
            if (started > 0) s.in_flight.emplace_back(cycle + s.depth, started);
        }

        if (progress) last_progress_cycle = cycle;
        if (cycle - last_progress_cycle > guard) {
            std::string diag = "simulate_buffers: no progress";
            for (const auto& s : stages)
                if (s.fired < s.max_firings)
                    diag += " [" + s.name + " fired " + std::to_string(s.fired) + "/" +
                            std::to_string(s.max_firings) + "]";
            throw std::runtime_error(diag);
        }
        ++cycle;
    }

    BufferTrace trace;
    trace.cycles = cycle;
    for (int l = 0; l < n_layers; ++l) {
        BufferStats b;
        b.name = "feature_map_buffer_" + std::to_string(l + 1);
        const auto& q = q_tee[static_cast<std::size_t>(l)];
        b.max_occupancy = q.max_count;
        b.produced = q.produced;
        b.consumed = q.consumed;
        b.final_occupancy = q.count;
        trace.buffers.push_back(std::move(b));
    }
    if (loss_first_cycle >= 0 && loss_last_cycle > loss_first_cycle) {
        const double sym_per_firing =
            1.0 / (static_cast<double>(fp_firings[static_cast<std::size_t>(n_layers - 1)]) / n_symbols);
        trace.measured_symbols_per_cycle = static_cast<double>(loss_mark_hi - loss_mark_lo) *
                                           sym_per_firing /
                                           static_cast<double>(loss_last_cycle - loss_first_cycle);
    }
    return trace;
}

MemoryReport memory_report(const PipelineConfig& cfg, int n_symbols, int activation_bits) {
    cfg.validate();
    MemoryReport r;
    long long samples = static_cast<long long>(n_symbols) * cfg.oversampling;
    for (const auto& layer : cfg.layers) {
        r.naive_words += samples * layer.c_in;  // full input feature map per layer
        samples /= layer.stride;
    }
    const BufferTrace trace = simulate_buffers(cfg, n_symbols, false);
    r.pipelined_words = trace.total_max_occupancy();
    r.ratio = static_cast<double>(r.pipelined_words) / static_cast<double>(r.naive_words);
    r.naive_bits = r.naive_words * activation_bits;
    r.pipelined_bits = r.pipelined_words * activation_bits;
    return r;
}

}  // namespace eqsim
