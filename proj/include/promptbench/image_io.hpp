/* Copyright 2026 The PromptBench Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// PNG encode/decode (libpng), base64 and content hashing (OpenSSL).

#pragma once

#include <png.h>
#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "promptbench/core.hpp"

namespace promptbench {

using Bytes = std::vector<std::uint8_t>;

inline Bytes read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

inline void write_file_bytes(const std::filesystem::path& path,
                             std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw data_error("short write to " + path.string());
}

// Decodes any PNG to 8-bit grayscale via libpng's simplified API. Colour
// inputs are converted with libpng's luminance weights; alpha is dropped.
inline GrayImage decode_png_gray(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw data_error(std::string("png: ") + image.message);
  image.format = PNG_FORMAT_GRAY;
  const int w = static_cast<int>(image.width);
  const int h = static_cast<int>(image.height);
  std::vector<std::uint8_t> values(PNG_IMAGE_SIZE(image));
  const png_color black{0, 0, 0};
  if (!png_image_finish_read(&image, &black, values.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw data_error("png: " + msg);
  }
  return GrayImage(w, h, std::move(values));
}

// Header-only dimension probe.
inline std::pair<int, int> png_dimensions(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 24 || png_sig_cmp(bytes.data(), 0, 8) != 0)
    throw data_error("png: bad signature");
  auto be32 = [&](std::size_t off) {
    return (static_cast<std::uint32_t>(bytes[off]) << 24) |
           (static_cast<std::uint32_t>(bytes[off + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[off + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[off + 3]);
  };
  return {static_cast<int>(be32(16)), static_cast<int>(be32(20))};
}

inline Bytes encode_png_gray(const GrayImage& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0,
                                 img.values().data(), 0, nullptr))
    throw data_error(std::string("png: ") + image.message);
  Bytes out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0,
                                 img.values().data(), 0, nullptr))
    throw data_error(std::string("png: ") + image.message);
  out.resize(size);
  return out;
}

// Masks are written as 0/255 grayscale.
inline Bytes encode_png_mask(const BinaryMask& m) {
  std::vector<std::uint8_t> v(m.size());
  auto bits = m.bits();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = bits[i] ? 255 : 0;
  return encode_png_gray(GrayImage(m.width(), m.height(), std::move(v)));
}

// Nonzero pixels are object.
inline BinaryMask mask_from_gray(const GrayImage& g) {
  std::vector<std::uint8_t> bits(g.values().begin(), g.values().end());
  return BinaryMask(g.width(), g.height(), std::move(bits));
}

inline BinaryMask decode_png_mask(std::span<const std::uint8_t> bytes) {
  return mask_from_gray(decode_png_gray(bytes));
}

inline GrayImage read_png_gray(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_png_gray(bytes);
  } catch (const Error& e) {
    throw data_error(path.string() + ": " + e.what());
  }
}

inline BinaryMask read_png_mask(const std::filesystem::path& path) {
  return mask_from_gray(read_png_gray(path));
}

inline void write_png(const std::filesystem::path& path, const GrayImage& img) {
  write_file_bytes(path, encode_png_gray(img));
}

inline void write_png(const std::filesystem::path& path, const BinaryMask& m) {
  write_file_bytes(path, encode_png_mask(m));
}

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline Bytes base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw data_error("base64: length not a multiple of 4");
  Bytes out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(
      out.data(), reinterpret_cast<const unsigned char*>(text.data()),
      static_cast<int>(text.size()));
  if (n < 0) throw data_error("base64: invalid input");
  std::size_t len = static_cast<std::size_t>(n);
  // EVP_DecodeBlock counts padding as zero bytes.
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() >= 2 && text[text.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

using Digest128 = std::array<std::uint8_t, 16>;

// Streaming SHA-256 truncated to 128 bits.
class Hasher128 {
 public:
  Hasher128() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1)
      throw std::runtime_error("sha256 init failed");
  }
  ~Hasher128() { EVP_MD_CTX_free(ctx_); }
  Hasher128(const Hasher128&) = delete;
  Hasher128& operator=(const Hasher128&) = delete;

  Hasher128& update(std::span<const std::uint8_t> bytes) {
    EVP_DigestUpdate(ctx_, bytes.data(), bytes.size());
    return *this;
  }
  Hasher128& update(std::string_view s) {
    return update(std::span(reinterpret_cast<const std::uint8_t*>(s.data()),
                            s.size()));
  }
  Hasher128& update_u32(std::uint32_t v) {
    const std::uint8_t le[4] = {static_cast<std::uint8_t>(v),
                                static_cast<std::uint8_t>(v >> 8),
                                static_cast<std::uint8_t>(v >> 16),
                                static_cast<std::uint8_t>(v >> 24)};
    return update(std::span(le));
  }

  Digest128 finish() {
    std::array<std::uint8_t, EVP_MAX_MD_SIZE> full{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, full.data(), &len);
    Digest128 out{};
    std::copy_n(full.begin(), out.size(), out.begin());
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace promptbench
