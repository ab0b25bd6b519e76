#pragma once

// Command-line front end: detect, eval, bench, synth, gradcheck.
//
// Exit codes: 0 success, 1 internal failure (including a failed gradient
// check or diverging training), 2 usage or input error. Failures are reported
// on the error stream as {"error": {"stage", "type", "message"}}.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "alacpd/data.hpp"
#include "alacpd/detector.hpp"

namespace alacpd::cli {

enum class Variant { kFull, kNoAr, kNoAe };

Variant parse_variant(std::string_view name);  // full | no_ar | no_ae
std::string variant_label(Variant v);          // ALACPD, ALACPDw/oAR, ALACPDw/oAE
std::string variant_key(Variant v);
void apply_variant(EnsembleConfig& cfg, Variant v);

// Flat key = value hyperparameter file:
//   w U M S h C beta n_cpd n_init n_init_frac e_init e_train e_reinit lr
//   C_grace grace_len seed standardize reset_on_change parallel_members
// S lists one skip size per member ("3,5,7" or "3 5 7"); M, when given, must
// agree with it, or on its own keeps the first M default skip sizes. Unknown
// keys are a ConfigError naming the line.
EnsembleConfig parse_config(std::string_view text, EnsembleConfig base = {});
nlohmann::json config_to_json(const EnsembleConfig& cfg);

// One detector run per seed in [first_seed, first_seed + count), using up to
// `jobs` threads. Results are in seed order regardless of scheduling.
std::vector<DetectionReport> run_seeds(const data::TimeSeries& series, const EnsembleConfig& cfg,
                                       std::uint64_t first_seed, std::size_t count, std::size_t jobs,
                                       const RunOptions& opts = {});

nlohmann::json detection_to_json(const DetectionReport& report, Variant v, bool with_losses);

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace alacpd::cli
