#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "xumx/data.hpp"
#include "xumx/error.hpp"

namespace xumx {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw WavError(std::string("truncated file while reading ") + what, pos_);
    }
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }
  std::string tag(const char* what) {
    need(4, what);
    std::string t(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return t;
  }
  void skip(std::size_t n, const char* what) {
    need(n, what);
    pos_ += n;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct Format {
  std::uint16_t code = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits = 0;
};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

Waveform parse_wav(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.tag("RIFF header") != "RIFF") throw WavError("missing RIFF signature", 0);
  r.u32("RIFF size");
  if (r.tag("WAVE tag") != "WAVE") throw WavError("missing WAVE signature", 8);

  Format fmt;
  bool have_fmt = false;
  while (true) {
    const std::size_t chunk_start = r.offset();
    if (r.remaining() == 0) throw WavError("no data chunk", chunk_start);
    const std::string id = r.tag("chunk id");
    const std::uint32_t size = r.u32("chunk size");
    if (id == "fmt ") {
      if (size < 16) throw WavError("fmt chunk too small", chunk_start);
      const std::size_t body = r.offset();
      fmt.code = r.u16("format tag");
      fmt.channels = r.u16("channel count");
      fmt.sample_rate = r.u32("sample rate");
      r.u32("byte rate");
      fmt.block_align = r.u16("block align");
      fmt.bits = r.u16("bits per sample");
      if (fmt.code == kFormatExtensible) {
        if (size < 40) throw WavError("extensible fmt chunk too small", chunk_start);
        r.u16("cbSize");
        r.u16("valid bits");
        r.u32("channel mask");
        fmt.code = r.u16("sub-format");
      }
      r.skip(size - (r.offset() - body), "fmt chunk");
      if (size % 2) r.skip(1, "chunk padding");
      have_fmt = true;
      continue;
    }
    if (id != "data") {
      r.skip(size, "chunk body");
      if (size % 2 && r.remaining() > 0) r.skip(1, "chunk padding");
      continue;
    }

    if (!have_fmt) throw WavError("data chunk before fmt chunk", chunk_start);
    if (fmt.channels == 0) throw WavError("zero channels", chunk_start);
    const bool pcm16 = fmt.code == kFormatPcm && fmt.bits == 16;
    const bool float32 = fmt.code == kFormatFloat && fmt.bits == 32;
    if (!pcm16 && !float32) {
      throw WavError("unsupported codec (format " + std::to_string(fmt.code) + ", " +
                         std::to_string(fmt.bits) + " bits)",
                     chunk_start);
    }
    const std::size_t width = fmt.bits / 8;
    if (fmt.block_align != width * fmt.channels) {
      throw WavError("inconsistent block alignment", chunk_start);
    }
    if (size % fmt.block_align != 0) throw WavError("partial sample frame", chunk_start);
    auto data = r.take(size, "sample data");

    std::vector<double> interleaved(size / width);
    for (std::size_t i = 0; i < interleaved.size(); ++i) {
      const std::uint8_t* p = data.data() + i * width;
      if (pcm16) {
        const auto v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
        interleaved[i] = static_cast<double>(v) / 32768.0;
      } else {
        const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                                   (static_cast<std::uint32_t>(p[1]) << 8) |
                                   (static_cast<std::uint32_t>(p[2]) << 16) |
                                   (static_cast<std::uint32_t>(p[3]) << 24);
        interleaved[i] = static_cast<double>(std::bit_cast<float>(bits));
      }
    }
    Waveform w{downmix(interleaved, fmt.channels), static_cast<int>(fmt.sample_rate)};
    if (!w.all_finite()) throw WavError("non-finite sample", chunk_start);
    return w;
  }
}

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError("cannot open " + path.string(), 0);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes);
  } catch (const WavError& e) {
    throw WavError(path.string() + ": " + e.what(), e.offset());
  }
}

std::vector<std::uint8_t> encode_wav(const Waveform& w, SampleFormat format) {
  if (!w.all_finite()) throw NumericError("save_wav: non-finite sample");
  const bool pcm16 = format == SampleFormat::Pcm16;
  const std::uint16_t width = pcm16 ? 2 : 4;
  const auto data_size = static_cast<std::uint32_t>(w.size() * width);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, pcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * width);
  put_u16(out, width);
  put_u16(out, static_cast<std::uint16_t>(width * 8));
  put_tag(out, "data");
  put_u32(out, data_size);
  for (double v : w.samples) {
    if (pcm16) {
      const double q = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    } else {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  if (data_size % 2) out.push_back(0);
  return out;
}

void save_wav(const std::filesystem::path& path, const Waveform& w, SampleFormat format) {
  const auto bytes = encode_wav(w, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace xumx
