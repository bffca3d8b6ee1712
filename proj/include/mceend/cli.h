// mceend/cli.h
//
// Command-line front end: simulate, train, adapt, infer, score, bench.
//
// Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
// 3 data error, 4 numeric divergence.

#ifndef MCEEND_CLI_H_
#define MCEEND_CLI_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mceend/model.h"
#include "mceend/simulate.h"
#include "mceend/tensor.h"

namespace mceend {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDivergence = 4;

// argv[0] is the program name.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

// Posterior dump: uint32 S, uint32 T (little-endian), then S*T float32 in
// row-major order.
void write_posteriors(const std::filesystem::path &path, const Tensor &posteriors);
Tensor read_posteriors(const std::filesystem::path &path);

struct MeasuredValues {
  std::size_t forward = 0;  // values alive after the forward pass
  std::size_t peak = 0;     // peak over forward and backward
};

// Tensor values allocated by one training forward/backward pass on random
// inputs of the given size (transformer always uses one channel).
MeasuredValues measure_values(const ModelConfig &mc, std::size_t frames, std::size_t channels,
                              std::uint64_t seed);

struct DatasetEntry {
  std::string id;
  std::filesystem::path dir;
};

// Sessions listed in <dir>/manifest.json.
std::vector<DatasetEntry> read_manifest(const std::filesystem::path &dir);
// Channel WAVs (ch00.wav, ch01.wav, ...) of one session directory.
std::vector<Waveform> read_session_channels(const std::filesystem::path &dir);

}  // namespace mceend

#endif  // MCEEND_CLI_H_
