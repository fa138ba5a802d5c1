#include "gmmscape/image.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "gmmscape/common.hpp"

namespace gmmscape {

namespace {

// Reads the next PGM header token, skipping whitespace and # comments.
std::string pgm_token(std::istream& is) {
  std::string tok;
  char c;
  while (is.get(c)) {
    if (c == '#') {
      std::string line;
      std::getline(is, line);
      continue;
    }
    if (!std::isspace(static_cast<unsigned char>(c))) {
      tok.push_back(c);
      while (is.get(c) && !std::isspace(static_cast<unsigned char>(c))) {
        tok.push_back(c);
      }
      return tok;
    }
  }
  throw IoError("unexpected end of PGM header");
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace

Image load_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  const std::string magic = pgm_token(is);
  if (magic != "P5" && magic != "P2") {
    throw IoError(path + ": not a PGM file");
  }
  Image img;
  img.width = std::stoi(pgm_token(is));
  img.height = std::stoi(pgm_token(is));
  img.max_value = std::stoi(pgm_token(is));
  if (img.width <= 0 || img.height <= 0 || img.max_value <= 0 ||
      img.max_value > 65535) {
    throw IoError(path + ": bad PGM dimensions");
  }
  const size_t n = static_cast<size_t>(img.width) * img.height;
  img.pixels.resize(n);
  if (magic == "P2") {
    for (size_t i = 0; i < n; ++i) {
      int v;
      if (!(is >> v)) throw IoError(path + ": truncated PGM data");
      img.pixels[i] = static_cast<std::uint16_t>(v);
    }
  } else if (img.max_value < 256) {
    std::vector<unsigned char> raw(n);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (!is) throw IoError(path + ": truncated PGM data");
    for (size_t i = 0; i < n; ++i) img.pixels[i] = raw[i];
  } else {
    // 16-bit PGM samples are big-endian.
    std::vector<unsigned char> raw(n * 2);
    is.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(n * 2));
    if (!is) throw IoError(path + ": truncated PGM data");
    for (size_t i = 0; i < n; ++i) {
      img.pixels[i] =
          static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    }
  }
  return img;
}

void save_pgm(const Image& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "P5\n" << img.width << " " << img.height << "\n" << img.max_value
     << "\n";
  const size_t n = static_cast<size_t>(img.width) * img.height;
  if (img.max_value < 256) {
    std::vector<unsigned char> raw(n);
    for (size_t i = 0; i < n; ++i) {
      raw[i] = static_cast<unsigned char>(img.pixels[i]);
    }
    os.write(reinterpret_cast<const char*>(raw.data()),
             static_cast<std::streamsize>(n));
  } else {
    std::vector<unsigned char> raw(n * 2);
    for (size_t i = 0; i < n; ++i) {
      raw[2 * i] = static_cast<unsigned char>(img.pixels[i] >> 8);
      raw[2 * i + 1] = static_cast<unsigned char>(img.pixels[i] & 0xff);
    }
    os.write(reinterpret_cast<const char*>(raw.data()),
             static_cast<std::streamsize>(n * 2));
  }
  if (!os) throw IoError("write failed for " + path);
}

Image load_png(const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path + ": PNG decode failed");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  png_byte depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (depth == 16) png_set_swap(png);  // file is big-endian
  png_read_update_info(png, info);

  Image img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  depth = png_get_bit_depth(png, info);
  img.max_value = depth == 16 ? 65535 : 255;
  const int channels = png_get_channels(png, info);
  const size_t row_bytes = png_get_rowbytes(png, info);

  std::vector<std::uint8_t> raw(row_bytes * img.height);
  row_ptrs.resize(img.height);
  for (int y = 0; y < img.height; ++y) row_ptrs[y] = raw.data() + y * row_bytes;
  png_read_image(png, row_ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);

  img.pixels.resize(static_cast<size_t>(img.width) * img.height);
  for (int y = 0; y < img.height; ++y) {
    const std::uint8_t* row = raw.data() + y * row_bytes;
    for (int x = 0; x < img.width; ++x) {
      if (depth == 16) {
        const std::uint16_t* p16 = reinterpret_cast<const std::uint16_t*>(row);
        img.at(x, y) = p16[x * channels];
      } else {
        img.at(x, y) = row[x * channels];
      }
    }
  }
  return img;
}

void save_png(const Image& img, const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open " + path + " for writing");

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path + ": PNG encode failed");
  }
  png_init_io(png, fp.get());

  const int depth = img.max_value > 255 ? 16 : 8;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), depth,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (depth == 16) png_set_swap(png);

  std::vector<std::uint8_t> row(static_cast<size_t>(img.width) *
                                (depth == 16 ? 2 : 1));
  for (int y = 0; y < img.height; ++y) {
    if (depth == 16) {
      std::uint16_t* p16 = reinterpret_cast<std::uint16_t*>(row.data());
      for (int x = 0; x < img.width; ++x) p16[x] = img.at(x, y);
    } else {
      for (int x = 0; x < img.width; ++x) {
        row[x] = static_cast<std::uint8_t>(img.at(x, y));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image load_image(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  unsigned char sig[2] = {0, 0};
  is.read(reinterpret_cast<char*>(sig), 2);
  is.close();
  if (sig[0] == 'P' && (sig[1] == '5' || sig[1] == '2')) return load_pgm(path);
  if (sig[0] == 0x89 && sig[1] == 'P') return load_png(path);
  throw IoError(path + ": unrecognized image format");
}

}  // namespace gmmscape
