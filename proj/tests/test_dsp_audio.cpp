#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <vector>

#include "dag/audio.hpp"
#include "dag/core.hpp"
#include "dag/dsp.hpp"

using namespace dag;

namespace {

std::vector<real> sine(std::size_t n, real freq_hz, int rate, real amp = 1.0) {
  std::vector<real> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = amp * std::sin(2.0 * std::numbers::pi_v<real> * freq_hz *
                          static_cast<real>(i) / static_cast<real>(rate));
  }
  return x;
}

}  // namespace

TEST_CASE("fft matches a naive dft") {
  const std::size_t n = 64;
  auto rng = Prng::stream(31, stream::kParamInit, 0, 0);
  std::vector<real> x(n);
  for (real& v : x) v = rng.normal();
  std::vector<cplx> got = fft(x, n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx want(0.0, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const real ang = -2.0 * std::numbers::pi_v<real> *
                       static_cast<real>(k * j) / static_cast<real>(n);
      want += x[j] * cplx(std::cos(ang), std::sin(ang));
    }
    REQUIRE_THAT(got[k].real(), Catch::Matchers::WithinAbs(want.real(), 1e-9));
    REQUIRE_THAT(got[k].imag(), Catch::Matchers::WithinAbs(want.imag(), 1e-9));
  }

  SECTION("inverse transform round-trips") {
    std::vector<cplx> a = got;
    fft_inplace(a, /*inverse=*/true);
    for (std::size_t j = 0; j < n; ++j) {
      REQUIRE_THAT(a[j].real(), Catch::Matchers::WithinAbs(x[j], 1e-10));
      REQUIRE_THAT(a[j].imag(), Catch::Matchers::WithinAbs(0.0, 1e-10));
    }
  }

  SECTION("non power-of-two lengths are rejected") {
    std::vector<cplx> a(12);
    REQUIRE_THROWS_AS(fft_inplace(a), DomainError);
  }
}

TEST_CASE("spectral centroid tracks tone frequency") {
  const int rate = 4000;
  std::vector<real> low = sine(4000, 440.0, rate);
  std::vector<real> high = sine(4000, 1500.0, rate);
  const real c_low = spectral_centroid(low, rate);
  const real c_high = spectral_centroid(high, rate);
  // Window: 100 samples -> 128-point FFT -> 31.25 Hz bins.
  REQUIRE_THAT(c_low, Catch::Matchers::WithinAbs(440.0, 40.0));
  REQUIRE_THAT(c_high, Catch::Matchers::WithinAbs(1500.0, 40.0));
  REQUIRE(c_low < c_high);
  SECTION("silence maps to zero") {
    std::vector<real> zero(4000, 0.0);
    REQUIRE(spectral_centroid(zero, rate) == 0.0);
  }
}

TEST_CASE("log-mel front end geometry") {
  const int rate = 48000;
  const auto fb = mel_filterbank(64, 2048, rate);
  REQUIRE(fb.size() == 64);
  for (const auto& band : fb) {
    REQUIRE(band.size() == 1025);
    real total = 0.0;
    for (real w : band) {
      REQUIRE(w >= 0.0);
      REQUIRE(w <= 1.0);
      total += w;
    }
    REQUIRE(total > 0.0);  // at this resolution every band covers >= 1 bin
  }

  SECTION("frame count follows the 25 ms / 10 ms grid") {
    std::vector<real> x(48000, 0.25);
    const auto frames = log_mel_frames(x, rate, 64);
    // win=1200, hop=480: 1 + (48000 - 1200) / 480 frames.
    REQUIRE(frames.size() == 1 + (48000 - 1200) / 480);
    REQUIRE(frames[0].size() == 64);
    for (const auto& f : frames) {
      for (real v : f) REQUIRE(std::isfinite(v));
    }
  }

  SECTION("short clips produce one padded frame") {
    std::vector<real> x(100, 0.5);
    REQUIRE(log_mel_frames(x, rate, 64).size() == 1);
  }
}

TEST_CASE("resampler length arithmetic is exact") {
  std::vector<real> x(22050, 0.0);
  REQUIRE(resample(x, 1, 2).size() == 11025);
  REQUIRE(resample(x, 2, 1).size() == 44100);
  std::vector<real> odd(5, 0.0);
  REQUIRE(resample(odd, 1, 2).size() == 3);  // ceil(5/2)
  REQUIRE(resample(odd, 22050, 44100).size() == 3);
  std::vector<real> one(1, 0.0);
  REQUIRE(resample(one, 320, 1).size() == 320);
  REQUIRE(resample(std::vector<real>{}, 3, 2).empty());

  SECTION("unit ratio is the identity") {
    auto rng = Prng::stream(5, stream::kParamInit, 1, 1);
    std::vector<real> r(257);
    for (real& v : r) v = rng.normal();
    REQUIRE(resample(r, 7, 7) == r);
  }

  SECTION("factors must be positive") {
    REQUIRE_THROWS_AS(resample(x, 0, 2), DomainError);
    REQUIRE_THROWS_AS(resample(x, 2, 0), DomainError);
  }
}

TEST_CASE("resampler preserves an in-band tone") {
  const int rate = 4000;
  const real f0 = 200.0;
  std::vector<real> x = sine(4000, f0, rate, 0.8);

  SECTION("2x upsample matches the analytic tone") {
    std::vector<real> y = resample(x, 2, 1);
    real err = 0.0, ref = 0.0;
    for (std::size_t i = 200; i + 200 < y.size(); ++i) {
      const real want = 0.8 * std::sin(2.0 * std::numbers::pi_v<real> * f0 *
                                       static_cast<real>(i) /
                                       static_cast<real>(2 * rate));
      err += (y[i] - want) * (y[i] - want);
      ref += want * want;
    }
    REQUIRE(std::sqrt(err / ref) < 0.01);
  }

  SECTION("down-then-up round trip stays close") {
    std::vector<real> y = resample(resample(x, 1, 2), 2, 1);
    REQUIRE(y.size() == x.size());
    real err = 0.0, ref = 0.0;
    for (std::size_t i = 400; i + 400 < y.size(); ++i) {
      err += (y[i] - x[i]) * (y[i] - x[i]);
      ref += x[i] * x[i];
    }
    REQUIRE(std::sqrt(err / ref) < 0.02);
  }
}

TEST_CASE("wav round trip is exact at 16-bit granularity") {
  const std::string path = "wav_test_tmp.wav";
  auto rng = Prng::stream(8, stream::kParamInit, 2, 2);
  std::vector<real> x(777);
  for (real& v : x) v = 0.9 * (2.0 * rng.uniform() - 1.0);
  write_wav(path, x, 22050);
  AudioClip clip = read_wav(path);
  REQUIRE(clip.sample_rate == 22050);
  REQUIRE(clip.samples.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const real q = std::lround(x[i] * 32768.0) / 32768.0;
    REQUIRE(clip.samples[i] == q);
    REQUIRE(std::abs(clip.samples[i] - x[i]) <= 0.5 / 32768.0 + 1e-15);
  }

  SECTION("write(read(f)) reproduces the payload bit for bit") {
    write_wav("wav_test_tmp2.wav", clip.samples, clip.sample_rate);
    AudioClip again = read_wav("wav_test_tmp2.wav");
    REQUIRE(again.samples == clip.samples);
    std::remove("wav_test_tmp2.wav");
  }

  SECTION("frame probe skips decoding") {
    int rate = 0;
    REQUIRE(wav_frames(path, &rate) == x.size());
    REQUIRE(rate == 22050);
  }

  std::remove(path.c_str());
}

TEST_CASE("wav reader handles edge cases") {
  SECTION("out-of-range samples are clamped on write") {
    const std::string path = "wav_clamp_tmp.wav";
    std::vector<real> x = {1.5, -1.5, 1.0, -1.0};
    write_wav(path, x, 8000);
    AudioClip clip = read_wav(path);
    REQUIRE(clip.samples[0] == 32767.0 / 32768.0);
    REQUIRE(clip.samples[1] == -1.0);
    REQUIRE(clip.samples[2] == 32767.0 / 32768.0);
    REQUIRE(clip.samples[3] == -1.0);
    std::remove(path.c_str());
  }

  SECTION("stereo content is downmixed by averaging") {
    // Hand-built 2-channel file: frames (L=16384, R=-16384), (L=8192, R=8192).
    const std::string path = "wav_stereo_tmp.wav";
    std::ofstream f(path, std::ios::binary);
    auto u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<char*>(&v), 4); };
    auto u16 = [&](std::uint16_t v) { f.write(reinterpret_cast<char*>(&v), 2); };
    f.write("RIFF", 4);
    u32(36 + 8);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    u32(16);
    u16(1);
    u16(2);
    u32(8000);
    u32(8000 * 4);
    u16(4);
    u16(16);
    f.write("data", 4);
    u32(8);
    u16(16384);
    u16(static_cast<std::uint16_t>(-16384));
    u16(8192);
    u16(8192);
    f.close();
    AudioClip clip = read_wav(path);
    REQUIRE(clip.samples.size() == 2);
    REQUIRE(clip.samples[0] == 0.0);
    REQUIRE(clip.samples[1] == 8192.0 / 32768.0);
    std::remove(path.c_str());
  }

  SECTION("missing and malformed files raise io errors") {
    REQUIRE_THROWS_AS(read_wav("no_such_file_anywhere.wav"), IoError);
    const std::string path = "wav_bad_tmp.wav";
    std::ofstream f(path, std::ios::binary);
    f << "this is not audio";
    f.close();
    REQUIRE_THROWS_AS(read_wav(path), IoError);
    std::remove(path.c_str());
  }
}

TEST_CASE("peak normalization") {
  std::vector<real> x = {0.25, -0.5, 0.1};
  normalize_peak(x);
  REQUIRE(peak_abs(x) == 1.0);
  REQUIRE(x[1] == -1.0);
  REQUIRE_THAT(x[0], Catch::Matchers::WithinRel(0.5, 1e-15));

  SECTION("silence is untouched") {
    std::vector<real> z(16, 0.0);
    normalize_peak(z);
    for (real v : z) REQUIRE(v == 0.0);
  }
}
