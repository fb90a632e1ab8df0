#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mdis/grid.hpp"
#include "mdis/image.hpp"

namespace mdis {

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

// PNM token reader that skips whitespace and # comments.
inline std::string pnm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
    } else if (!std::isspace(ch)) {
      tok.push_back(static_cast<char>(ch));
      while ((ch = in.peek()) != EOF && !std::isspace(ch) && ch != '#') tok.push_back(static_cast<char>(in.get()));
      return tok;
    }
  }
  throw IoError("pnm: unexpected end of header");
}

inline int pnm_int(std::istream& in) {
  std::string tok = pnm_token(in);
  try {
    return std::stoi(tok);
  } catch (const std::exception&) {
    throw IoError("pnm: bad integer '" + tok + "'");
  }
}

}  // namespace detail

inline Raster read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic = detail::pnm_token(in);
  bool ascii = magic == "P2" || magic == "P3";
  bool binary = magic == "P5" || magic == "P6";
  if (!ascii && !binary) throw IoError(path + ": unsupported PNM magic '" + magic + "'");
  int channels = (magic == "P3" || magic == "P6") ? 3 : 1;
  int w = detail::pnm_int(in);
  int h = detail::pnm_int(in);
  int maxval = detail::pnm_int(in);
  if (w <= 0 || h <= 0) throw IoError(path + ": zero dimension");
  if (maxval <= 0 || maxval > 65535) throw IoError(path + ": bad maxval");

  Raster img;
  img.width = w;
  img.height = h;
  img.channels = channels;
  size_t n = static_cast<size_t>(w) * h * channels;
  img.pixels.resize(n);
  if (ascii) {
    for (size_t i = 0; i < n; ++i) img.pixels[i] = static_cast<double>(detail::pnm_int(in)) / maxval;
  } else {
    in.get();  // single whitespace after maxval
    int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(n * bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw IoError(path + ": truncated pixel data");
    for (size_t i = 0; i < n; ++i) {
      unsigned v = bytes == 1 ? buf[i] : (static_cast<unsigned>(buf[2 * i]) << 8) | buf[2 * i + 1];
      img.pixels[i] = static_cast<double>(v) / maxval;
    }
  }
  return img;
}

inline Raster read_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError(path + ": libpng init failed");
  }
  std::vector<png_bytep> row_ptrs;
  std::vector<unsigned char> data;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError(path + ": PNG decode failed");
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (depth == 16) png_set_strip_16(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);

  int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError(path + ": unsupported PNG channel count");
  }
  size_t stride = png_get_rowbytes(png, info);
  data.resize(stride * h);
  row_ptrs.resize(h);
  for (png_uint_32 r = 0; r < h; ++r) row_ptrs[r] = data.data() + r * stride;
  png_read_image(png, row_ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);

  Raster img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.channels = channels;
  img.pixels.resize(static_cast<size_t>(w) * h * channels);
  for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = data[i] / 255.0;
  return img;
}

// Sniffs the container from magic bytes; supports PGM/PPM and PNG.
inline Raster read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  unsigned char magic[8] = {0};
  in.read(reinterpret_cast<char*>(magic), 8);
  in.close();
  static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (std::memcmp(magic, png_sig, 8) == 0) return read_png(path);
  if (magic[0] == 'P' && magic[1] >= '1' && magic[1] <= '6') return read_pnm(path);
  throw IoError(path + ": unrecognized image format");
}

// --- float map containers ---

// PFM, grayscale "Pf", rows stored bottom-to-top, negative scale = little endian.
inline void write_pfm(const std::string& path, const GridD& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "Pf\n" << map.cols() << " " << map.rows() << "\n-1.0\n";
  for (int r = map.rows() - 1; r >= 0; --r) {
    std::vector<float> row(map.cols());
    for (int c = 0; c < map.cols(); ++c) row[c] = static_cast<float>(map(r, c));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed: " + path);
}

inline GridD read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic = detail::pnm_token(in);
  if (magic != "Pf") throw IoError(path + ": not a grayscale PFM");
  int w = detail::pnm_int(in);
  int h = detail::pnm_int(in);
  double scale = std::stod(detail::pnm_token(in));
  in.get();
  if (w <= 0 || h <= 0) throw IoError(path + ": zero dimension");
  bool little = scale < 0;
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h * 4);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) throw IoError(path + ": truncated PFM data");
  GridD map(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      size_t i = (static_cast<size_t>(h - 1 - r) * w + c) * 4;
      unsigned char b[4] = {buf[i], buf[i + 1], buf[i + 2], buf[i + 3]};
      if (!little) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
      float f;
      std::memcpy(&f, b, 4);
      map(r, c) = f;
    }
  }
  return map;
}

// 16-bit binary PGM; input expected in [0,1].
inline void write_pgm16(const std::string& path, const GridD& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << map.cols() << " " << map.rows() << "\n65535\n";
  for (int r = 0; r < map.rows(); ++r) {
    for (int c = 0; c < map.cols(); ++c) {
      double v = std::clamp(map(r, c), 0.0, 1.0);
      auto q = static_cast<uint16_t>(std::lround(v * 65535.0));
      unsigned char b[2] = {static_cast<unsigned char>(q >> 8), static_cast<unsigned char>(q & 0xff)};
      out.write(reinterpret_cast<const char*>(b), 2);
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

inline void write_csv_map(const std::string& path, const GridD& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  char buf[40];
  for (int r = 0; r < map.rows(); ++r) {
    for (int c = 0; c < map.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", map(r, c));
      out << buf << (c + 1 == map.cols() ? "\n" : ",");
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

inline GridD read_csv_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError(path + ": ragged CSV map");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path + ": empty CSV map");
  GridD map(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (int r = 0; r < map.rows(); ++r)
    for (int c = 0; c < map.cols(); ++c) map(r, c) = rows[r][c];
  return map;
}

// Reads a saliency map in any of the formats the tools emit.
inline GridD read_map(const std::string& path) {
  auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "pfm") return read_pfm(path);
  if (ext == "csv") return read_csv_map(path);
  if (ext == "pgm" || ext == "ppm" || ext == "png") {
    Raster r = read_image(path);
    return luminance(r);
  }
  throw IoError(path + ": unsupported map format");
}

}  // namespace mdis
