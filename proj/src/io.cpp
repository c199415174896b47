// Copyright (c) 2026 chsplat contributors
// SPDX-License-Identifier: Apache-2.0
#include "chs/io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace chs {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- PFM / PNG

void write_pfm(const fs::path& path, const Image3& img) {
  if (img.width <= 0 || img.height <= 0)
    throw DomainError("write_pfm: empty image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_pfm: cannot open " + path.string());
  out << "PF\n" << img.width << " " << img.height << "\n-1.0\n";
  // Rows bottom-up, floats little-endian (host order on x86).
  std::vector<float> row(static_cast<std::size_t>(img.width) * 3);
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        row[static_cast<std::size_t>(x) * 3 + c] =
            static_cast<float>(img.at(x, y, c));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw IoError("write_pfm: write failed for " + path.string());
}

Image3 read_pfm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_pfm: cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "PF")
    throw IoError("read_pfm: not a color PFM file: " + path.string());
  int w = 0, h = 0;
  double scale = 0.0;
  in >> w >> h >> scale;
  if (!in || w <= 0 || h <= 0)
    throw IoError("read_pfm: bad header in " + path.string());
  if (scale >= 0.0)
    throw IoError("read_pfm: big-endian PFM not supported: " + path.string());
  in.get();  // single whitespace after the scale line
  Image3 img(w, h);
  std::vector<float> row(static_cast<std::size_t>(w) * 3);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw IoError("read_pfm: truncated data in " + path.string());
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(x, y, c) = row[static_cast<std::size_t>(x) * 3 + c];
  }
  return img;
}

void write_png(const fs::path& path, const Image3& img) {
  if (img.width <= 0 || img.height <= 0)
    throw DomainError("write_png: empty image");
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw IoError("write_png: cannot open " + path.string());
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("write_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("write_png: encode failed for " + path.string());
  }
  png_init_io(png, fp);
  // Pinned encoder settings: fixed compression level, no adaptive filters,
  // so equal pixels always produce byte-identical files.
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        row[static_cast<std::size_t>(x) * 3 + c] =
            static_cast<png_byte>(quantize8(img.at(x, y, c)));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

Image3 read_png(const fs::path& path) {
  std::FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw IoError("read_png: cannot open " + path.string());
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("read_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("read_png: decode failed for " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  // Normalize any input flavor to 8-bit RGB.
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  if (png_get_channels(png, info) != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("read_png: unexpected channel count in " + path.string());
  }
  Image3 img(w, h);
  std::vector<png_byte> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(x, y, c) = row[static_cast<std::size_t>(x) * 3 + c] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

// --------------------------------------------------------------------- CSV

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(const fs::path& path, const std::string& header,
               const std::vector<std::vector<double>>& rows) {
  std::ostringstream out;
  out << header << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ",";
      out << format_g17(row[i]);
    }
    out << "\n";
  }
  write_text_file(path, out.str());
}

std::vector<std::vector<double>> read_csv(const fs::path& path,
                                          const std::string& expected_header) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line))
    throw IoError("read_csv: empty file " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected_header)
    throw IoError("read_csv: unexpected header in " + path.string() + ": " + line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        double v = std::stod(cell, &used);
        if (used != cell.size())
          throw IoError("read_csv: bad number '" + cell + "' in " + path.string());
        row.push_back(v);
      } catch (const std::invalid_argument&) {
        throw IoError("read_csv: bad number '" + cell + "' in " + path.string());
      } catch (const std::out_of_range&) {
        throw IoError("read_csv: number out of range in " + path.string());
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------- byte streams

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back((v >> (8 * i)) & 0xff);
}
void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back((v >> (8 * i)) & 0xff);
}
void ByteWriter::f64(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  u64(bits);
}
void ByteWriter::str(const std::string& s) {
  u64(s.size());
  bytes(s.data(), s.size());
}
void ByteWriter::f64_vec(const std::vector<double>& v) {
  u64(v.size());
  for (double x : v) f64(x);
}
void ByteWriter::bytes(const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  buf_.insert(buf_.end(), b, b + n);
}

void ByteReader::need(std::size_t n) {
  if (pos_ + n > data_.size())
    throw IoError("ByteReader: truncated payload");
}
std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}
std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(data_[pos_++]) << (8 * i);
  return v;
}
std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(data_[pos_++]) << (8 * i);
  return v;
}
double ByteReader::f64() {
  const std::uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}
std::string ByteReader::str() {
  const std::uint64_t n = u64();
  need(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_),
                static_cast<std::size_t>(n));
  pos_ += n;
  return s;
}
std::vector<double> ByteReader::f64_vec() {
  const std::uint64_t n = u64();
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = f64();
  return v;
}

// ----------------------------------------------------------- CHS1 container

namespace {
constexpr char kMagic[4] = {'C', 'H', 'S', '1'};
}

void ChunkFileWriter::add(const std::string& name,
                          const std::vector<std::uint8_t>& payload) {
  if (name.empty() || name.size() > 255)
    throw DomainError("ChunkFileWriter: section name length must be 1..255");
  for (const auto& s : sections_)
    if (s.first == name)
      throw DomainError("ChunkFileWriter: duplicate section " + name);
  sections_.emplace_back(name, payload);
}

void ChunkFileWriter::save(const fs::path& path) const {
  ByteWriter out;
  out.bytes(kMagic, 4);
  out.u32(version_);
  for (const auto& [name, payload] : sections_) {
    out.u8(static_cast<std::uint8_t>(name.size()));
    out.bytes(name.data(), name.size());
    out.u64(payload.size());
    out.bytes(payload.data(), payload.size());
  }
  write_file_bytes(path, out.buffer());
}

ChunkFileReader::ChunkFileReader(const fs::path& path) {
  ByteReader in(read_file_bytes(path));
  char magic[4];
  for (char& c : magic) c = static_cast<char>(in.u8());
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("ChunkFileReader: bad magic in " + path.string());
  version_ = in.u32();
  while (!in.at_end()) {
    const std::uint8_t name_len = in.u8();
    std::string name;
    for (int i = 0; i < name_len; ++i) name.push_back(static_cast<char>(in.u8()));
    const std::uint64_t size = in.u64();
    std::vector<std::uint8_t> payload(static_cast<std::size_t>(size));
    for (auto& b : payload) b = in.u8();
    if (!sections_.emplace(name, std::move(payload)).second)
      throw IoError("ChunkFileReader: duplicate section " + name);
  }
}

bool ChunkFileReader::has(const std::string& name) const {
  return sections_.count(name) != 0;
}

std::vector<std::uint8_t> ChunkFileReader::payload(const std::string& name) const {
  auto it = sections_.find(name);
  if (it == sections_.end())
    throw IoError("ChunkFileReader: missing section " + name);
  return it->second;
}

// ------------------------------------------------------------- small utils

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const std::streamoff n = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
  in.read(reinterpret_cast<char*>(bytes.data()), n);
  if (!in) throw IoError("read failed for " + path.string());
  return bytes;
}

void write_file_bytes(const fs::path& path,
                      const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace chs
