// mceend/wav.h
//
// Mono 16-bit PCM RIFF/WAVE files.

#ifndef MCEEND_WAV_H_
#define MCEEND_WAV_H_

#include <filesystem>
#include <stdexcept>
#include <vector>

namespace mceend {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 8000;

  double duration() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws DataError on anything but mono PCM16 at 8 or 16 kHz.
Waveform read_wav(const std::filesystem::path &path);

// Samples are clipped to [-1, 1] and rounded to the nearest 16-bit level.
void write_wav(const std::filesystem::path &path, const Waveform &w);

}  // namespace mceend

#endif  // MCEEND_WAV_H_
