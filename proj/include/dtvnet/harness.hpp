#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "dtvnet/data.hpp"

namespace dtvnet {

// Exit statuses of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;  // bad arguments or a missing flow provider
inline constexpr int kExitDiverged = 3;

/// Entry point of the `dtvnet` tool (prepare, train, generate, sample-diverse, evaluate).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Writes `count` synthetic translating-texture clips (T+1 PNG frames each),
/// their exact flows as FlowFiles, and manifest.json into `dir`. Every clip is
/// in the train split. Returns the manifest path.
std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir, int64_t count, int64_t t_frames,
                                              HW hw, std::uint64_t seed);

// Per-clip velocity used by write_synthetic_dataset.
std::array<double, 2> synthetic_velocity(std::uint64_t seed, int64_t index, int64_t t_frames, HW hw);

}  // namespace dtvnet
