#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "eqsim/pipeline.hpp"
#include "eqsim/rng.hpp"

using namespace eqsim;

TEST_CASE("initiation interval formula") {
    StageDesc full{.name = "fp2", .c_in = 3, .c_out = 3, .kernel = 21,
                   .dop = {.in = 3, .out = 3, .k = 21, .instances = 1}};
    CHECK(full.per_instance_interval() == 1);
    CHECK(full.initiation_interval() == 1.0);

    StageDesc serial = full;
    serial.dop = {.in = 1, .out = 1, .k = 1, .instances = 1};
    CHECK(serial.per_instance_interval() == 189);  // 3 * 3 * 21

    StageDesc quad = full;
    quad.dop.instances = 4;
    quad.firings_per_symbol = 2.0;
    CHECK(quad.initiation_interval() == doctest::Approx(0.25));
    CHECK(quad.cycles_per_symbol() == doctest::Approx(0.5));  // symbol-level cost

    StageDesc clamped = full;
    clamped.dop = {.in = 8, .out = 8, .k = 64, .instances = 1};
    CHECK(clamped.per_instance_interval() == 1);  // never below one cycle per instance
}

TEST_CASE("throughput: fully unrolled design reaches 150 Mbit/s at 300 MHz") {
    PipelineConfig cfg = PipelineConfig::default_cnn();
    cfg.set_uniform_dop({.in = 3, .out = 3, .k = 21, .instances = 1});
    cfg.clock_hz = 300e6;
    cfg.bits_per_symbol = 1;  // PAM-2
    const Throughput t = pipeline_throughput(cfg);
    CHECK(t.bottleneck_cycles_per_symbol == doctest::Approx(2.0));  // 2 samples/symbol at II=1
    CHECK(t.symbols_per_s == doctest::Approx(150e6));
    CHECK(t.bits_per_s == doctest::Approx(150e6));
}

TEST_CASE("bottleneck semantics and monotonicity in the DOP") {
    PipelineConfig cfg = PipelineConfig::default_cnn();
    cfg.set_uniform_dop({.in = 1, .out = 1, .k = 1, .instances = 1});
    const double base = pipeline_throughput(cfg).symbols_per_s;

    // speed up everything except layer 2: the bottleneck stays put
    PipelineConfig partial = cfg;
    partial.layers[0].fp_dop = {.in = 1, .out = 3, .k = 21, .instances = 1};
    partial.layers[0].bp_dop = partial.layers[0].fp_dop;
    partial.layers[2].fp_dop = {.in = 3, .out = 1, .k = 21, .instances = 1};
    partial.layers[2].bp_dop = partial.layers[2].fp_dop;
    CHECK(pipeline_throughput(partial).symbols_per_s == doctest::Approx(base));
    CHECK(pipeline_throughput(partial).bottleneck_stage.substr(2, 1) == "2");

    // monotone non-decreasing in every dop coordinate
    auto rng = make_engine(3);
    std::uniform_int_distribution<int> d(1, 3);
    for (int trial = 0; trial < 50; ++trial) {
        PipelineConfig a = PipelineConfig::default_cnn();
        a.set_uniform_dop({.in = d(rng), .out = d(rng), .k = 1 + d(rng) * 5, .instances = d(rng)});
        PipelineConfig b = a;
        auto& layer = b.layers[static_cast<std::size_t>(trial % 3)];
        layer.fp_dop.k = std::min(layer.kernel, layer.fp_dop.k + 3);
        layer.bp_dop = layer.fp_dop;
        CHECK(pipeline_throughput(b).symbols_per_s >= pipeline_throughput(a).symbols_per_s - 1e-9);
    }
}

TEST_CASE("buffer occupancy is independent of the sequence length when balanced") {
    PipelineConfig cfg = PipelineConfig::default_cnn();
    const BufferTrace a = simulate_buffers(cfg, 256);
    const BufferTrace b = simulate_buffers(cfg, 2048);
    REQUIRE(a.buffers.size() == b.buffers.size());
    for (std::size_t i = 0; i < a.buffers.size(); ++i)
        CHECK(a.buffers[i].max_occupancy == b.buffers[i].max_occupancy);
    CHECK(a.total_max_occupancy() == b.total_max_occupancy());
}

TEST_CASE("naive store-everything occupancy grows linearly") {
    PipelineConfig cfg = PipelineConfig::default_cnn();
    const long long occ1 = simulate_buffers(cfg, 512, true).total_max_occupancy();
    const long long occ2 = simulate_buffers(cfg, 1024, true).total_max_occupancy();
    const double ratio = static_cast<double>(occ2) / static_cast<double>(occ1);
    CHECK(ratio > 1.9);
    CHECK(ratio < 2.1);
}

TEST_CASE("words are conserved and occupancy never goes negative") {
    PipelineConfig cfg = PipelineConfig::default_cnn();
    for (bool naive : {false, true}) {
        const BufferTrace t = simulate_buffers(cfg, 300, naive);
        for (const auto& b : t.buffers) {
            CHECK(b.produced - b.consumed == b.final_occupancy);
            CHECK(b.final_occupancy == 0);  // everything drains
            CHECK(b.max_occupancy >= 0);
            CHECK(b.produced > 0);
        }
    }
}

TEST_CASE("single-stage pipeline occupancy is bounded by the total depth") {
    PipelineConfig cfg;
    cfg.layers = {{.c_in = 1, .c_out = 1, .kernel = 21, .stride = 1}};
    const BufferTrace t = simulate_buffers(cfg, 256);
    REQUIRE(t.buffers.size() == 1);
    CHECK(t.buffers[0].max_occupancy <= cfg.total_depth());
    CHECK(t.buffers[0].max_occupancy > 0);
}

TEST_CASE("event simulation agrees with the closed-form rate") {
    auto rng = make_engine(9);
    std::uniform_int_distribution<int> d(1, 3);
    std::uniform_int_distribution<int> kd(1, 21);
    for (int trial = 0; trial < 8; ++trial) {
        PipelineConfig cfg = PipelineConfig::default_cnn();
        cfg.set_uniform_dop({.in = d(rng), .out = d(rng), .k = kd(rng), .instances = d(rng)});
        const BufferTrace t = simulate_buffers(cfg, 2048);
        const Throughput tp = pipeline_throughput(cfg);
        const double closed_form = 1.0 / tp.bottleneck_cycles_per_symbol;
        CHECK(t.measured_symbols_per_cycle ==
              doctest::Approx(closed_form).epsilon(0.02));
    }
}

TEST_CASE("memory report: exact naive count and tiny pipelined footprint") {
    PipelineConfig cfg = PipelineConfig::default_cnn();
    const int n = 1518 * 8;  // symbols
    const MemoryReport r = memory_report(cfg, n, 10);
    // enumeration: layer inputs hold 2N*1, 2N*3, 2N*3 words
    const long long samples = 2LL * n;
    CHECK(r.naive_words == samples * 1 + samples * 3 + samples * 3);
    CHECK(r.naive_bits == r.naive_words * 10);
    CHECK(r.ratio < 0.01);
    CHECK(r.pipelined_words > 0);
    CHECK(r.pipelined_bits == r.pipelined_words * 10);
}

TEST_CASE("memory report at the boundary where the sequence equals the pipeline depth") {
    // Fully unrolled: one cycle per sample, so a sequence as long as the
    // pipeline is deep is mostly buffered before the backward side drains it.
    PipelineConfig cfg = PipelineConfig::default_cnn();
    cfg.set_uniform_dop({.in = 3, .out = 3, .k = 21, .instances = 1});
    const int n = cfg.total_depth() / cfg.oversampling;
    const MemoryReport r = memory_report(cfg, n, 8);
    CHECK(r.ratio > 0.4);
    CHECK(r.ratio <= 1.0);
    // a hundred times the depth streams with a tiny footprint
    const MemoryReport big = memory_report(cfg, 100 * n, 8);
    CHECK(big.ratio < 0.02);
}

TEST_CASE("deadlock detection reports the stuck stage") {
    PipelineConfig cfg = PipelineConfig::default_cnn();
    CHECK_THROWS_AS(simulate_buffers(cfg, 10), std::invalid_argument);  // N below depth
}
