// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
//
// File formats: PFM (float32 HDR), 8-bit RGB PNG, CSV tables, and the CHS1
// chunked binary container used by scene files and training checkpoints.
// All binary payloads are little-endian.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "chs/errors.hpp"
#include "chs/image.hpp"

namespace chs {

// ---------------------------------------------------------------- PFM / PNG

// PFM, color variant: "PF\n<w> <h>\n-1.0\n" + float32 LE samples, rows
// bottom-up. Values are written as-is (linear HDR radiance).
void write_pfm(const std::filesystem::path& path, const Image3& img);
Image3 read_pfm(const std::filesystem::path& path);

// 8-bit RGB PNG. Values are clamped to [0,1] and quantized round-half-up
// (q = floor(255 v + 0.5)). Encoder settings are pinned so identical pixels
// give identical files.
void write_png(const std::filesystem::path& path, const Image3& img);
// Returns values dequantized to v = q / 255.
Image3 read_png(const std::filesystem::path& path);

inline int quantize8(double v) {
  if (!(v > 0.0)) return 0;
  if (v >= 1.0) return 255;
  return static_cast<int>(v * 255.0 + 0.5);
}

// --------------------------------------------------------------------- CSV

// Writes header + rows, every value formatted with %.17g.
void write_csv(const std::filesystem::path& path, const std::string& header,
               const std::vector<std::vector<double>>& rows);
// Returns rows; checks the header matches exactly.
std::vector<std::vector<double>> read_csv(const std::filesystem::path& path,
                                          const std::string& expected_header);

// ---------------------------------------------------------- byte streams

class ByteWriter {
public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v);
  void str(const std::string& s);                 // u64 length + bytes
  void f64_vec(const std::vector<double>& v);     // u64 count + doubles
  void bytes(const void* p, std::size_t n);
  const std::vector<std::uint8_t>& buffer() const { return buf_; }

private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
  explicit ByteReader(std::vector<std::uint8_t> data) : data_(std::move(data)) {}
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64();
  std::string str();
  std::vector<double> f64_vec();
  bool at_end() const { return pos_ == data_.size(); }

private:
  void need(std::size_t n);
  std::vector<std::uint8_t> data_;
  std::size_t pos_ = 0;
};

// ----------------------------------------------------------- CHS1 container

// Layout: "CHS1" magic, u32 format version, then sections back to back:
// u8 name length, name bytes, u64 payload size, payload bytes.
class ChunkFileWriter {
public:
  explicit ChunkFileWriter(std::uint32_t version = 1) : version_(version) {}
  void add(const std::string& name, const std::vector<std::uint8_t>& payload);
  void add(const std::string& name, const ByteWriter& payload) {
    add(name, payload.buffer());
  }
  void save(const std::filesystem::path& path) const;

private:
  std::uint32_t version_;
  std::vector<std::pair<std::string, std::vector<std::uint8_t>>> sections_;
};

class ChunkFileReader {
public:
  explicit ChunkFileReader(const std::filesystem::path& path);
  std::uint32_t version() const { return version_; }
  bool has(const std::string& name) const;
  // Throws IoError when the section is missing.
  std::vector<std::uint8_t> payload(const std::string& name) const;

private:
  std::uint32_t version_ = 0;
  std::map<std::string, std::vector<std::uint8_t>> sections_;
};

// ------------------------------------------------------------- small utils

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

// %.17g formatting (shortest round-trippable is not required; 17 digits are).
std::string format_g17(double v);

}  // namespace chs
