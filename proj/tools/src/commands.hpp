#pragma once

#include "hglmm/inference.hpp"
#include "hglmm/optimizer.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hglmm::cli {

inline constexpr int kSchemaVersion = 1;

struct Options {
  std::filesystem::path config;
  std::optional<std::string> mode;
  std::optional<double> level;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool exp = false;
  std::optional<std::filesystem::path> out_dir;
  bool verbose = false;
  std::optional<std::filesystem::path> artifact;
  std::vector<std::filesystem::path> artifacts;
};

int cmd_fit(const Options& opts, std::ostream& out, std::ostream& err);
int cmd_predict(const Options& opts, std::ostream& out, std::ostream& err);
int cmd_simulate(const Options& opts, std::ostream& out, std::ostream& err);
int cmd_compare(const Options& opts, std::ostream& out, std::ostream& err);

/// Parses arguments, dispatches, and maps failures to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Fixed-effects table with columns Effect, Est., s.e._u, s.e._c, t-val., p-val.
std::string fixed_effects_table(const inference::FixedEffectsTable& table);

/// Ranking table for compare.
std::string ranking_table(const std::vector<optimizer::RankedFit>& ranking,
                          const std::vector<std::string>& names);

}  // namespace hglmm::cli
