// mceend/wav.cc

#include "mceend/wav.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace mceend {

namespace {

std::uint32_t le32(const unsigned char *p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const unsigned char *p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::ostream &os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

void put16(std::ostream &os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b, 2);
}

}  // namespace

Waveform read_wav(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  auto fail = [&](const std::string &why) { return DataError(path.string() + ": " + why); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw fail("not a RIFF/WAVE file");
  }
  Waveform w;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char *chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw fail("truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw fail("short fmt chunk");
      const unsigned char *f = bytes.data() + body;
      const std::uint16_t format = le16(f), channels = le16(f + 2), bits = le16(f + 14);
      w.sample_rate = static_cast<int>(le32(f + 4));
      if (format != 1 || bits != 16) throw fail("only 16-bit PCM is supported");
      if (channels != 1) throw fail("expected mono, got " + std::to_string(channels) + " channels");
      if (w.sample_rate != 8000 && w.sample_rate != 16000) {
        throw fail("unsupported sample rate " + std::to_string(w.sample_rate));
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw fail("data chunk before fmt chunk");
      const std::size_t n = size / 2;
      w.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto s = static_cast<std::int16_t>(le16(bytes.data() + body + 2 * i));
        w.samples[i] = static_cast<double>(s) / 32768.0;
      }
      return w;
    }
    pos = body + size + (size & 1);
  }
  throw fail("no data chunk");
}

void write_wav(const std::filesystem::path &path, const Waveform &w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  put32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(w.sample_rate));
  put32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  out.write("data", 4);
  put32(out, data_bytes);
  for (double s : w.samples) {
    const double q = std::round(std::clamp(s, -1.0, 1.0) * 32767.0);
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace mceend
