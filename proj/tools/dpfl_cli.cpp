// Copyright 2026 The dpfl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// dpfl: experiment runner and demos.
//
//   dpfl run --config configs/five_methods.ini [--seed N] [--method M] [--out DIR]
//            [--transport loopback|tcp] [--secure on|off|plaintext-audit]
//   dpfl chart --metrics DIR [--out DIR]
//   dpfl accountant --q 0.01 --sigma 1.1 --delta 1e-5 --rounds 1000
//   dpfl keygen-demo [--seed N]
//   dpfl secure-agg-demo [--hospitals K] [--length N] [--transport ...]
//
// DPFL_LOG_LEVEL selects the log level (trace, debug, info, warn, error, off).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "dpfl/accounting/rdp_accountant.hpp"
#include "dpfl/bench/chart.hpp"
#include "dpfl/bench/config.hpp"
#include "dpfl/bench/experiment.hpp"
#include "dpfl/bench/metrics.hpp"
#include "dpfl/common/error.hpp"
#include "dpfl/common/random.hpp"
#include "dpfl/he/bfv.hpp"
#include "dpfl/he/encoding.hpp"
#include "dpfl/orchestrator/aggregator.hpp"
#include "dpfl/secure_agg/protocol.hpp"
#include "dpfl/secure_agg/tcp_transport.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRunFailed = 3;

void configure_logging() {
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  if (const char* level = std::getenv("DPFL_LOG_LEVEL")) {
    spdlog::set_level(spdlog::level::from_str(level));
  } else {
    spdlog::set_level(spdlog::level::info);
  }
}

struct RunArgs {
  std::string config;
  std::optional<uint64_t> seed;
  std::string method;
  std::string out;
  std::string transport;
  std::string secure;
};

int cmd_run(const RunArgs& args) {
  if (!std::filesystem::is_regular_file(args.config)) {
    spdlog::error("config file not found: {}", args.config);
    return kExitUsage;
  }
  dpfl::bench::ExperimentConfig cfg;
  try {
    cfg = dpfl::bench::load_experiment_config(args.config);
    if (args.seed) cfg.seeds = {*args.seed};
    if (!args.method.empty()) cfg.methods = {dpfl::parse_method(args.method)};
    if (!args.out.empty()) cfg.out_dir = args.out;
    if (!args.transport.empty()) cfg.transport = dpfl::parse_transport_kind(args.transport);
    if (!args.secure.empty()) cfg.secure = dpfl::parse_aggregation_mode(args.secure);
  } catch (const dpfl::Error& e) {
    spdlog::error("{}", e.detail());
    return kExitUsage;
  }
  try {
    auto outcome = dpfl::bench::run_experiment(cfg, [](const std::string& msg) {
      spdlog::info("{}", msg);
    });
    for (const auto& [method, runs] : outcome.runs) {
      for (const auto& r : runs) {
        const auto& last = r.rounds;
        spdlog::info("{} seed {}: {} rounds, final accuracy {:.4f}{}", dpfl::method_name(method),
                     r.seed, last.size(), last.empty() ? 0.0 : last.back().test_accuracy,
                     r.halted_on_budget ? " (stopped at privacy budget)" : "");
      }
    }
    spdlog::info("metrics written to {}", cfg.out_dir);
    return 0;
  } catch (const std::exception& e) {
    spdlog::error("run aborted: {} (partial metrics flushed to {})", e.what(), cfg.out_dir);
    return kExitRunFailed;
  }
}

int cmd_chart(const std::string& metrics_dir, std::string out_dir) {
  if (out_dir.empty()) out_dir = metrics_dir;
  try {
    const auto metrics = dpfl::bench::read_metrics_dir(metrics_dir);
    const auto charts = dpfl::bench::build_charts(metrics);
    std::filesystem::create_directories(out_dir);
    dpfl::bench::write_file_atomic(std::filesystem::path(out_dir) / "accuracy.svg",
                                   charts.accuracy_svg);
    if (!charts.epsilon_svg.empty()) {
      dpfl::bench::write_file_atomic(std::filesystem::path(out_dir) / "epsilon.svg",
                                     charts.epsilon_svg);
    }
    spdlog::info("charts written to {}", out_dir);
    return 0;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}

int cmd_accountant(double q, double sigma, double delta, int rounds) {
  try {
    dpfl::RdpAccountant acct(q, sigma);
    std::printf("round,epsilon_hat,best_order\n");
    for (int t = 1; t <= rounds; ++t) {
      acct.step();
      const auto s = acct.spend(delta);
      std::printf("%d,%s,%s\n", t, dpfl::bench::format_real(s.epsilon_hat).c_str(),
                  dpfl::bench::format_real(s.best_order).c_str());
    }
    return 0;
  } catch (const dpfl::Error& e) {
    spdlog::error("{}", e.detail());
    return kExitUsage;
  }
}

int cmd_keygen_demo(uint64_t seed) {
  const auto params = dpfl::he::EncryptionParams::standard();
  const auto ctx = dpfl::he::BfvContext::make(params);
  dpfl::NoiseSource rng(seed, 0x6b6579);
  const auto keys = dpfl::he::keygen(*ctx, rng);
  dpfl::ByteWriter pk;
  dpfl::he::write_public_key(pk, params, keys.pub);
  std::printf("d = %zu, b = %llu, qc = %llu, noise_std = %.2f\n", params.d,
              static_cast<unsigned long long>(params.b),
              static_cast<unsigned long long>(params.qc), params.noise_std);
  std::printf("public key: %zu bytes\n", pk.data().size());
  std::printf("fresh noise bound %.1f, decryption limit %.3g, additions allowed %u\n",
              ctx->fresh_noise_bound(), ctx->noise_limit(), ctx->max_level());
  dpfl::he::BatchEncoder enc(*ctx);
  std::vector<int64_t> values(params.d);
  for (size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<int64_t>(rng.uniform_below(params.b)) -
                static_cast<int64_t>((params.b - 1) / 2);
  }
  const auto ct = dpfl::he::encrypt(*ctx, enc.encode(values), keys.pub, rng);
  const auto back = enc.decode(dpfl::he::decrypt(*ctx, ct, keys.secret));
  const bool ok = back == values;
  std::printf("round trip of %zu random slots: %s (noise %llu)\n", values.size(),
              ok ? "exact" : "MISMATCH",
              static_cast<unsigned long long>(dpfl::he::decryption_noise(*ctx, ct, keys.secret)));
  return ok ? 0 : 1;
}

int cmd_secure_agg_demo(size_t hospitals, size_t length, uint64_t seed,
                        const std::string& transport) {
  try {
    std::unique_ptr<dpfl::secagg::Transport> tr;
    if (dpfl::parse_transport_kind(transport) == dpfl::TransportKind::kTcp) {
      tr = std::make_unique<dpfl::secagg::TcpTransport>(hospitals);
    } else {
      tr = std::make_unique<dpfl::secagg::LoopbackTransport>(hospitals);
    }
    dpfl::secagg::SecureAggregationConfig cfg;
    cfg.seed = seed;
    cfg.options.max_parties = static_cast<int>(hospitals);
    dpfl::secagg::SecureAggregation protocol(*tr, cfg);
    dpfl::NoiseSource rng(seed, 0xdee);
    const dpfl::he::FixedPointCodec codec(cfg.params.b, cfg.options.max_parties);
    const double bound = std::min(2.0, codec.max_abs_value());
    std::vector<dpfl::ModelParams> models;
    std::vector<uint16_t> ids;
    for (size_t k = 0; k < hospitals; ++k) {
      dpfl::ModelParams m;
      m.shape = {{"w", {length}}};
      for (size_t i = 0; i < length; ++i) m.values.push_back(bound * (2.0 * rng.uniform() - 1.0));
      models.push_back(std::move(m));
      ids.push_back(static_cast<uint16_t>(k + 1));
    }
    protocol.broadcast(models.front(), 1);
    const auto secure = protocol.average(1, models, ids);
    const auto plain = dpfl::plain_average(models);
    double worst = 0.0;
    for (size_t i = 0; i < length; ++i) {
      worst = std::max(worst, std::abs(secure.values[i] - plain.values[i]));
    }
    std::printf("%zu hospitals, %zu weights, %s transport\n", hospitals, length,
                transport.c_str());
    std::printf("max |secure - plaintext| = %.3g (quantization bound 5e-4)\n", worst);
    std::printf("server state: %zu bytes, holds public key only\n",
                protocol.server().state_bytes().size());
    return worst <= 5e-4 ? 0 : 1;
  } catch (const dpfl::Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Differentially private federated training with encrypted aggregation"};
  app.require_subcommand(1);

  RunArgs run_args;
  uint64_t seed_value = 0;
  auto* run = app.add_subcommand("run", "Run the experiments of a config file");
  run->add_option("--config", run_args.config, "Experiment config file")->required();
  run->add_option("--seed", seed_value, "Run only this seed");
  run->add_option("--method", run_args.method, "Run only this method (C, CDP, F, FPDP, DOPAMINE)");
  run->add_option("--out", run_args.out, "Output directory");
  run->add_option("--transport", run_args.transport, "loopback or tcp")
      ->check(CLI::IsMember({"loopback", "tcp"}));
  run->add_option("--secure", run_args.secure, "on, off or plaintext-audit")
      ->check(CLI::IsMember({"on", "off", "plaintext-audit"}));

  std::string metrics_dir, chart_out;
  auto* chart = app.add_subcommand("chart", "Draw SVG charts from a metrics directory");
  chart->add_option("--metrics", metrics_dir, "Directory with metrics_*.csv")->required();
  chart->add_option("--out", chart_out, "Output directory (default: the metrics directory)");

  double q = 0.01, sigma = 1.1, delta = 1e-5;
  int rounds = 100;
  auto* acct = app.add_subcommand("accountant", "Print epsilon_hat per round as CSV");
  acct->add_option("--q", q, "Sampling probability");
  acct->add_option("--sigma", sigma, "Noise multiplier");
  acct->add_option("--delta", delta, "Target delta");
  acct->add_option("--rounds", rounds, "Number of rounds")->check(CLI::PositiveNumber);

  uint64_t demo_seed = 1;
  auto* keygen = app.add_subcommand("keygen-demo", "Generate keys and check a round trip");
  keygen->add_option("--seed", demo_seed, "Key seed");

  size_t hospitals = 10, length = 10000;
  std::string transport = "loopback";
  auto* sa = app.add_subcommand("secure-agg-demo", "Average random models through the protocol");
  sa->add_option("--hospitals", hospitals, "Number of hospitals")->check(CLI::Range(1, 100));
  sa->add_option("--length", length, "Weights per model")->check(CLI::PositiveNumber);
  sa->add_option("--seed", demo_seed, "Seed");
  sa->add_option("--transport", transport, "loopback or tcp")
      ->check(CLI::IsMember({"loopback", "tcp"}));

  CLI11_PARSE(app, argc, argv);

  if (*run) {
    if (run->count("--seed")) run_args.seed = seed_value;
    return cmd_run(run_args);
  }
  if (*chart) return cmd_chart(metrics_dir, chart_out);
  if (*acct) return cmd_accountant(q, sigma, delta, rounds);
  if (*keygen) return cmd_keygen_demo(demo_seed);
  if (*sa) return cmd_secure_agg_demo(hospitals, length, demo_seed, transport);
  return kExitUsage;
}
