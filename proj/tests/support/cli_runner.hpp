#pragma once

// Runs the mrsr executable and captures its exit status and combined output.

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "json.hpp"
#include "mrsr/nifti.hpp"

namespace mrsr::test {

struct CliResult {
  int status = -1;
  std::string output;
};

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

inline CliResult run_cli(const std::vector<std::string>& args) {
  std::string cmd = shell_quote(MRSR_CLI_PATH);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " 2>&1";
  CliResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

// Small run config: tiny generator and discriminator, 64-pixel HR crops.
inline nlohmann::json tiny_cli_config(std::int64_t iterations, bool perceptual, int hr_crop = 64) {
  return {{"train",
           {{"iterations", iterations},
            {"checkpoint_every", 5},
            {"log_every", 5},
            {"hr_crop", hr_crop},
            {"loss_weights", {{"pixel", 1.0}, {"perceptual", perceptual ? 1.0 : 0.0}, {"adversarial", 1.0}}}}},
          {"generator", {{"num_rrdb", 1}, {"base_channels", 8}, {"growth_channels", 4}}},
          {"discriminator", {{"base_channels", 4}}},
          {"data", {{"expected_shape", {240, 240, 3}}}}};
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  std::ofstream(p) << j.dump(2) << '\n';
}

// `count` 240x240x3 volumes under <root>/HGG; blanks[i] lists volume i's
// all-zero planes.
inline void write_volume_fixture(const std::filesystem::path& root, int count,
                                 const std::vector<std::vector<int>>& blanks) {
  std::filesystem::create_directories(root / "HGG");
  for (int i = 0; i < count; ++i) {
    const auto& b = i < static_cast<int>(blanks.size()) ? blanks[i] : std::vector<int>{};
    write_nifti(root / "HGG" / ("Subj" + std::to_string(i) + "_t1.nii.gz"),
                synthetic_volume(240, 240, 3, 500 + i, b));
  }
}

}  // namespace mrsr::test
