#include "restorekit/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "restorekit/errors.hpp"

namespace restorekit {

namespace {

static_assert(std::endian::native == std::endian::little,
              "raw_f32 I/O assumes a little-endian host");

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class HeaderCursor {
 public:
  HeaderCursor(const std::vector<unsigned char>& bytes, std::string path)
      : bytes_(bytes), path_(std::move(path)) {}

  std::size_t offset() const { return pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }

  void skip_pnm_space() {
    while (pos_ < bytes_.size()) {
      const unsigned char ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(ch)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_uint(const char* field) {
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
      fail(std::string("expected integer ") + field);
    }
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000'000L) fail(std::string("integer overflow in ") + field);
      ++pos_;
    }
    return value;
  }

  void expect(unsigned char ch, const char* what) {
    if (pos_ >= bytes_.size() || bytes_[pos_] != ch) fail(std::string("expected ") + what);
    ++pos_;
  }

  void expect_single_space(const char* what) {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail(std::string("expected ") + what);
    ++pos_;
  }

 private:
  const std::vector<unsigned char>& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

ImageTensor read_pnm(const std::vector<unsigned char>& bytes, const std::string& path,
                     int channels) {
  HeaderCursor cur(bytes, path);
  cur.expect('P', "magic 'P'");
  cur.expect(channels == 1 ? '5' : '6', "magic digit");
  cur.skip_pnm_space();
  const long width = cur.read_uint("width");
  cur.skip_pnm_space();
  const long height = cur.read_uint("height");
  cur.skip_pnm_space();
  const std::size_t maxval_offset = cur.offset();
  const long maxval = cur.read_uint("maxval");
  if (maxval != 255) {
    throw FormatError(path + ": unsupported max-value " + std::to_string(maxval) +
                      " at byte offset " + std::to_string(maxval_offset));
  }
  cur.expect_single_space("whitespace after maxval");
  if (width <= 0 || height <= 0) cur.fail("nonpositive image dimensions");

  const std::size_t payload = static_cast<std::size_t>(width) * height * channels;
  const std::size_t start = cur.offset();
  if (bytes.size() - start < payload) {
    throw FormatError(path + ": truncated payload, expected " + std::to_string(payload) +
                      " bytes at byte offset " + std::to_string(start) + ", found " +
                      std::to_string(bytes.size() - start));
  }
  std::vector<double> data(payload);
  for (std::size_t i = 0; i < payload; ++i) data[i] = bytes[start + i] / 255.0;
  return {static_cast<int>(height), static_cast<int>(width), channels, std::move(data)};
}

ImageTensor read_irtf(const std::vector<unsigned char>& bytes, const std::string& path) {
  HeaderCursor cur(bytes, path);
  for (char ch : std::string("IRTF1")) cur.expect(static_cast<unsigned char>(ch), "magic IRTF1");
  cur.expect('\n', "newline after magic");
  const long height = cur.read_uint("height");
  cur.expect(' ', "space after height");
  const long width = cur.read_uint("width");
  cur.expect(' ', "space after width");
  const std::size_t channel_offset = cur.offset();
  const long channels = cur.read_uint("channels");
  cur.expect('\n', "newline after channels");
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw FormatError(path + ": nonpositive dimensions at byte offset " +
                      std::to_string(channel_offset));
  }

  const std::size_t count = static_cast<std::size_t>(height) * width * channels;
  const std::size_t start = cur.offset();
  if (bytes.size() - start < count * 4) {
    throw FormatError(path + ": truncated payload, expected " + std::to_string(count * 4) +
                      " bytes at byte offset " + std::to_string(start) + ", found " +
                      std::to_string(bytes.size() - start));
  }
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    float f;
    std::memcpy(&f, bytes.data() + start + 4 * i, 4);
    if (!std::isfinite(f)) {
      throw FormatError(path + ": non-finite value at byte offset " +
                        std::to_string(start + 4 * i));
    }
    data[i] = f;
  }
  return {static_cast<int>(height), static_cast<int>(width), static_cast<int>(channels),
          std::move(data)};
}

}  // namespace

unsigned char quantize_8bit(double v) {
  return static_cast<unsigned char>(std::round(std::clamp(v, 0.0, 1.0) * 255.0));
}

ImageTensor read_image(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  const std::string name = path.string();
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return read_pnm(bytes, name, 1);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return read_pnm(bytes, name, 3);
  if (bytes.size() >= 1 && bytes[0] == 'I') return read_irtf(bytes, name);
  throw FormatError(name + ": unrecognized magic at byte offset 0");
}

void write_image(const ImageTensor& img, const std::filesystem::path& path, ImageFormat format) {
  if (format == ImageFormat::pgm8 && img.channels() != 1) {
    throw DomainError("pgm8 requires 1 channel, image has " + std::to_string(img.channels()));
  }
  if (format == ImageFormat::ppm8 && img.channels() != 3) {
    throw DomainError("ppm8 requires 3 channels, image has " + std::to_string(img.channels()));
  }

  std::string header;
  std::vector<unsigned char> payload;
  if (format == ImageFormat::raw_f32) {
    header = "IRTF1\n" + std::to_string(img.height()) + " " + std::to_string(img.width()) + " " +
             std::to_string(img.channels()) + "\n";
    payload.resize(img.size() * 4);
    for (std::size_t i = 0; i < img.size(); ++i) {
      const auto f = static_cast<float>(img[i]);
      std::memcpy(payload.data() + 4 * i, &f, 4);
    }
  } else {
    header = std::string(format == ImageFormat::pgm8 ? "P5" : "P6") + "\n" +
             std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    payload.resize(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) payload[i] = quantize_8bit(img[i]);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

ImageFormat parse_image_format(const std::string& name) {
  if (name == "pgm8") return ImageFormat::pgm8;
  if (name == "ppm8") return ImageFormat::ppm8;
  if (name == "raw_f32") return ImageFormat::raw_f32;
  throw DomainError("unknown image format '" + name + "' (expected pgm8, ppm8, raw_f32)");
}

ImageFormat default_8bit_format(const ImageTensor& img) {
  return img.channels() == 1 ? ImageFormat::pgm8 : ImageFormat::ppm8;
}

}  // namespace restorekit
