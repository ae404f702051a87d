#pragma once
// Minimal RIFF/WAVE PCM 16-bit I/O. Reads skip unknown chunks and downmix
// multi-channel content by averaging; writes emit mono. Samples map to
// [-1, 1) as q / 32768, so write(read(f)) preserves f's payload bit for bit.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "dag/core.hpp"

namespace dag {

struct AudioClip {
  int sample_rate = 0;
  std::vector<real> samples;  // mono
};

namespace wavdetail {

inline std::uint32_t rd_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t rd_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(static_cast<std::uint32_t>(p[0]) |
                                    (static_cast<std::uint32_t>(p[1]) << 8));
}
inline void wr_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(b), 4);
}
inline void wr_u16(std::ofstream& f, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  f.write(reinterpret_cast<const char*>(b), 2);
}

struct WavHeader {
  int sample_rate = 0;
  int channels = 0;
  std::uint64_t data_offset = 0;  // absolute file offset of sample payload
  std::uint64_t data_bytes = 0;
};

// Parses the fmt and data chunk locations without decoding samples.
inline WavHeader parse_header(std::ifstream& f, const std::string& path) {
  unsigned char hdr[12];
  if (!f.read(reinterpret_cast<char*>(hdr), 12)) {
    throw IoError("wav: truncated header in " + path);
  }
  if (std::memcmp(hdr, "RIFF", 4) != 0 || std::memcmp(hdr + 8, "WAVE", 4) != 0) {
    throw IoError("wav: not a RIFF/WAVE file: " + path);
  }
  WavHeader out;
  bool have_fmt = false;
  while (true) {
    unsigned char ch[8];
    if (!f.read(reinterpret_cast<char*>(ch), 8)) break;
    const std::uint32_t size = rd_u32(ch + 4);
    if (std::memcmp(ch, "fmt ", 4) == 0) {
      std::vector<unsigned char> body(size);
      if (!f.read(reinterpret_cast<char*>(body.data()), size)) {
        throw IoError("wav: truncated fmt chunk in " + path);
      }
      if (size < 16) throw IoError("wav: malformed fmt chunk in " + path);
      const std::uint16_t format = rd_u16(body.data());
      const std::uint16_t bits = rd_u16(body.data() + 14);
      if (format != 1 || bits != 16) {
        throw IoError("wav: only PCM 16-bit supported: " + path);
      }
      out.channels = rd_u16(body.data() + 2);
      out.sample_rate = static_cast<int>(rd_u32(body.data() + 4));
      if (out.channels < 1 || out.sample_rate <= 0) {
        throw IoError("wav: malformed fmt fields in " + path);
      }
      have_fmt = true;
    } else if (std::memcmp(ch, "data", 4) == 0) {
      out.data_offset = static_cast<std::uint64_t>(f.tellg());
      out.data_bytes = size;
      f.seekg(static_cast<std::streamoff>(size + (size & 1)), std::ios::cur);
    } else {
      f.seekg(static_cast<std::streamoff>(size + (size & 1)), std::ios::cur);
    }
    if (!f) break;
  }
  f.clear();
  if (!have_fmt || out.data_offset == 0) {
    throw IoError("wav: missing fmt or data chunk in " + path);
  }
  return out;
}

}  // namespace wavdetail

// Frame count without decoding the payload.
inline std::size_t wav_frames(const std::string& path, int* sample_rate = nullptr) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("wav: cannot open " + path);
  const wavdetail::WavHeader h = wavdetail::parse_header(f, path);
  if (sample_rate) *sample_rate = h.sample_rate;
  return h.data_bytes / (2u * static_cast<unsigned>(h.channels));
}

inline AudioClip read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("wav: cannot open " + path);
  const wavdetail::WavHeader h = wavdetail::parse_header(f, path);
  const std::size_t frames = h.data_bytes / (2u * static_cast<unsigned>(h.channels));
  std::vector<unsigned char> raw(h.data_bytes);
  f.seekg(static_cast<std::streamoff>(h.data_offset));
  if (!f.read(reinterpret_cast<char*>(raw.data()),
              static_cast<std::streamsize>(h.data_bytes))) {
    throw IoError("wav: truncated data chunk in " + path);
  }
  AudioClip clip;
  clip.sample_rate = h.sample_rate;
  clip.samples.resize(frames);
  const real down = 1.0 / (32768.0 * static_cast<real>(h.channels));
  for (std::size_t i = 0; i < frames; ++i) {
    real acc = 0.0;
    for (int c = 0; c < h.channels; ++c) {
      const std::size_t off = 2 * (i * static_cast<std::size_t>(h.channels) +
                                   static_cast<std::size_t>(c));
      const auto u = static_cast<std::uint16_t>(wavdetail::rd_u16(raw.data() + off));
      acc += static_cast<real>(static_cast<std::int16_t>(u));
    }
    clip.samples[i] = acc * down;
  }
  return clip;
}

inline void write_wav(const std::string& path, std::span<const real> samples,
                      int sample_rate) {
  require_domain(sample_rate > 0, "wav: bad sample rate");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("wav: cannot open for write " + path);
  const auto n = static_cast<std::uint32_t>(samples.size());
  const std::uint32_t data_bytes = 2u * n;
  f.write("RIFF", 4);
  wavdetail::wr_u32(f, 36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  wavdetail::wr_u32(f, 16);
  wavdetail::wr_u16(f, 1);  // PCM
  wavdetail::wr_u16(f, 1);  // mono
  wavdetail::wr_u32(f, static_cast<std::uint32_t>(sample_rate));
  wavdetail::wr_u32(f, static_cast<std::uint32_t>(sample_rate) * 2u);
  wavdetail::wr_u16(f, 2);   // block align
  wavdetail::wr_u16(f, 16);  // bits
  f.write("data", 4);
  wavdetail::wr_u32(f, data_bytes);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    real v = samples[i] * 32768.0;
    v = std::min(std::max(v, -32768.0), 32767.0);
    const auto q = static_cast<std::int16_t>(std::lround(v));
    wavdetail::wr_u16(f, static_cast<std::uint16_t>(q));
  }
  if (!f) throw IoError("wav: write failed for " + path);
}

// In-place peak normalization to max |x| = 1; silence is left untouched.
inline void normalize_peak(std::vector<real>& x) {
  const real p = peak_abs(x);
  if (p <= 0.0) return;
  const real inv = 1.0 / p;
  for (real& v : x) v *= inv;
}

}  // namespace dag
