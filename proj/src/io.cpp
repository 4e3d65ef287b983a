#include "i4d/io.hpp"

#include "i4d/error.hpp"

#include <png.h>
#include <jpeglib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace i4d {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------- PFM

namespace {

// Reads one whitespace-delimited header token starting at `pos`.
std::string header_token(const std::string& bytes, std::size_t& pos, const std::string& name) {
  while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  if (start == pos) throw IoError("PFM '" + name + "': truncated header at byte " + std::to_string(start));
  return bytes.substr(start, pos - start);
}

}  // namespace

PfmImage decode_pfm(const std::string& bytes, const std::string& name) {
  std::size_t pos = 0;
  const std::string magic = header_token(bytes, pos, name);
  PfmImage img;
  if (magic == "Pf") img.channels = 1;
  else if (magic == "PF") img.channels = 3;
  else throw IoError("PFM '" + name + "': bad magic at byte 0");

  auto number = [&](const char* what) {
    const std::size_t at = pos;
    const std::string tok = header_token(bytes, pos, name);
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      throw IoError("PFM '" + name + "': invalid " + what + " '" + tok + "' at byte " + std::to_string(at));
    }
  };
  const double w = number("width");
  const double h = number("height");
  const double scale = number("scale");
  if (w < 1 || h < 1 || w != std::floor(w) || h != std::floor(h) || w > 1 << 16 || h > 1 << 16) {
    throw IoError("PFM '" + name + "': invalid dimensions");
  }
  if (scale == 0 || !std::isfinite(scale)) throw IoError("PFM '" + name + "': invalid scale");
  if (pos >= bytes.size()) throw IoError("PFM '" + name + "': truncated header at byte " + std::to_string(pos));
  ++pos;  // single whitespace byte ends the header

  img.width = int(w);
  img.height = int(h);
  const std::size_t count = std::size_t(img.width) * img.height * img.channels;
  const std::size_t need = count * sizeof(float);
  if (bytes.size() - pos < need) {
    throw IoError("PFM '" + name + "': truncated pixel data at byte " + std::to_string(bytes.size()) + ", expected " +
                  std::to_string(pos + need) + " bytes");
  }
  const bool big_endian = scale > 0;
  img.data.resize(count);
  const std::size_t row = std::size_t(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y) {
    const char* src = bytes.data() + pos + std::size_t(img.height - 1 - y) * row * sizeof(float);
    for (std::size_t i = 0; i < row; ++i) {
      std::uint32_t u;
      std::memcpy(&u, src + i * sizeof(float), sizeof(u));
      if (big_endian) u = __builtin_bswap32(u);
      std::memcpy(&img.data[std::size_t(y) * row + i], &u, sizeof(u));
    }
  }
  return img;
}

std::string encode_pfm(const PfmImage& img) {
  std::string out = (img.channels == 3 ? "PF\n" : "Pf\n") + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n-1.0\n";
  const std::size_t row = std::size_t(img.width) * img.channels;
  const std::size_t header = out.size();
  out.resize(header + img.data.size() * sizeof(float));
  for (int y = 0; y < img.height; ++y) {
    std::memcpy(out.data() + header + std::size_t(img.height - 1 - y) * row * sizeof(float),
                img.data.data() + std::size_t(y) * row, row * sizeof(float));
  }
  return out;
}

Plane<float> read_pfm(const std::string& path) {
  const auto img = decode_pfm(read_file(path), path);
  if (img.channels != 1) throw IoError("PFM '" + path + "': expected a single-channel (Pf) map");
  Plane<float> out(img.height, img.width);
  std::memcpy(out.data(), img.data.data(), img.data.size() * sizeof(float));
  return out;
}

void write_pfm(const std::string& path, const Plane<float>& plane) {
  PfmImage img;
  img.width = int(plane.cols());
  img.height = int(plane.rows());
  img.data.assign(plane.data(), plane.data() + plane.size());
  write_file(path, encode_pfm(img));
}

// ---------------------------------------------------------------- PNG

namespace {

struct PngReadSource {
  const std::string* bytes;
  std::size_t pos;
};

void png_read_from_string(png_structp png, png_bytep out, png_size_t n) {
  auto* src = static_cast<PngReadSource*>(png_get_io_ptr(png));
  if (src->bytes->size() - src->pos < n) png_error(png, "truncated PNG data");
  std::memcpy(out, src->bytes->data() + src->pos, n);
  src->pos += n;
}

void png_write_to_string(png_structp png, png_bytep data, png_size_t n) {
  static_cast<std::string*>(png_get_io_ptr(png))->append(reinterpret_cast<const char*>(data), n);
}

void png_flush_noop(png_structp) {}

[[noreturn]] void png_throw(png_structp, png_const_charp msg) { throw IoError(std::string("PNG: ") + msg); }

void png_warn_silent(png_structp, png_const_charp) {}

// Decodes to 8-bit rows with `channels` samples per pixel.
std::vector<std::uint8_t> png_decode_rows(const std::string& bytes, const std::string& name, int& width, int& height,
                                          bool want_gray) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    throw IoError("PNG '" + name + "': bad signature");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_warn_silent);
  png_infop info = png_create_info_struct(png);
  PngReadSource src{&bytes, 0};
  std::vector<std::uint8_t> pixels;
  try {
    png_set_read_fn(png, &src, png_read_from_string);
    png_read_info(png, info);
    width = int(png_get_image_width(png, info));
    height = int(png_get_image_height(png, info));
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (want_gray) {
      if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    } else if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
      png_set_gray_to_rgb(png);
    }
    png_read_update_info(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    pixels.resize(stride * std::size_t(height));
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) rows[y] = pixels.data() + std::size_t(y) * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  } catch (const IoError& e) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("'" + name + "': " + e.what() + " (offset " + std::to_string(src.pos) + ")");
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return pixels;
}

std::string png_encode_rows(const std::vector<std::uint8_t>& pixels, int width, int height, int color_type,
                            int bit_depth) {
  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_warn_silent);
  png_infop info = png_create_info_struct(png);
  try {
    png_set_write_fn(png, &out, png_write_to_string, png_flush_noop);
    png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = pixels.size() / std::size_t(height);
    for (int y = 0; y < height; ++y) png_write_row(png, pixels.data() + std::size_t(y) * stride);
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace

RgbImage<float> decode_png(const std::string& bytes, const std::string& name) {
  int w = 0, h = 0;
  const auto px = png_decode_rows(bytes, name, w, h, false);
  RgbImage<float> img(w, h);
  for (std::size_t i = 0; i < px.size(); ++i) img.pixels.data()[i] = float(px[i]) / 255.0f;
  return img;
}

std::string encode_png(const RgbImage<float>& image) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(image.pixels.size()));
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = to_u8(image.pixels.data()[i]);
  return png_encode_rows(px, image.width, image.height, PNG_COLOR_TYPE_RGB, 8);
}

RgbImage<float> read_png(const std::string& path) { return decode_png(read_file(path), path); }

void write_png(const std::string& path, const RgbImage<float>& image) { write_file(path, encode_png(image)); }

void write_mask_png(const std::string& path, const Mask& mask) {
  const int w = int(mask.cols()), h = int(mask.rows());
  const std::size_t stride = (std::size_t(w) + 7) / 8;
  std::vector<std::uint8_t> px(stride * std::size_t(h), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask(y, x)) px[std::size_t(y) * stride + std::size_t(x) / 8] |= std::uint8_t(0x80u >> (x % 8));
  write_file(path, png_encode_rows(px, w, h, PNG_COLOR_TYPE_GRAY, 1));
}

Mask read_mask_png(const std::string& path) {
  int w = 0, h = 0;
  const auto px = png_decode_rows(read_file(path), path, w, h, true);
  Mask m(h, w);
  for (std::size_t i = 0; i < px.size(); ++i) m.data()[i] = px[i] >= 128 ? 1 : 0;
  return m;
}

// ---------------------------------------------------------------- JPEG

namespace {

struct JpegError {
  jpeg_error_mgr mgr;
};

[[noreturn]] void jpeg_throw(j_common_ptr cinfo) {
  char msg[JMSG_LENGTH_MAX];
  (*cinfo->err->format_message)(cinfo, msg);
  throw IoError(std::string("JPEG: ") + msg);
}

}  // namespace

std::string encode_jpeg(const RgbImage<float>& image, int quality) {
  require(quality >= 1 && quality <= 100, "jpeg quality must be in [1, 100]");
  jpeg_compress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_throw;
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  std::vector<std::uint8_t> row(std::size_t(image.width) * 3);
  try {
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buffer, &size);
    cinfo.image_width = JDIMENSION(image.width);
    cinfo.image_height = JDIMENSION(image.height);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
      const int y = int(cinfo.next_scanline);
      for (int i = 0; i < image.width * 3; ++i) row[i] = to_u8(image.pixels.data()[std::size_t(y) * image.width * 3 + i]);
      JSAMPROW ptr = row.data();
      jpeg_write_scanlines(&cinfo, &ptr, 1);
    }
    jpeg_finish_compress(&cinfo);
  } catch (...) {
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    throw;
  }
  jpeg_destroy_compress(&cinfo);
  std::string out(reinterpret_cast<const char*>(buffer), size);
  std::free(buffer);
  return out;
}

RgbImage<float> decode_jpeg(const std::string& bytes) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_throw;
  RgbImage<float> img;
  try {
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()), (unsigned long)bytes.size());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    img = RgbImage<float>(int(cinfo.output_width), int(cinfo.output_height));
    std::vector<std::uint8_t> row(std::size_t(img.width) * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
      const int y = int(cinfo.output_scanline);
      JSAMPROW ptr = row.data();
      jpeg_read_scanlines(&cinfo, &ptr, 1);
      for (int i = 0; i < img.width * 3; ++i) img.pixels.data()[std::size_t(y) * img.width * 3 + i] = row[i] / 255.0f;
    }
    jpeg_finish_decompress(&cinfo);
  } catch (...) {
    jpeg_destroy_decompress(&cinfo);
    throw;
  }
  jpeg_destroy_decompress(&cinfo);
  return img;
}

// ---------------------------------------------------------------- PLY

namespace {

const char* ply_type_name(PlyType t) {
  switch (t) {
    case PlyType::Float32: return "float";
    case PlyType::Float64: return "double";
    case PlyType::UInt8: return "uchar";
    case PlyType::Int32: return "int";
    case PlyType::UInt32: return "uint";
  }
  return "float";
}

std::size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::Float64: return 8;
    case PlyType::UInt8: return 1;
    default: return 4;
  }
}

PlyType ply_type_from(const std::string& s, const std::string& name) {
  if (s == "float" || s == "float32") return PlyType::Float32;
  if (s == "double" || s == "float64") return PlyType::Float64;
  if (s == "uchar" || s == "uint8") return PlyType::UInt8;
  if (s == "int" || s == "int32") return PlyType::Int32;
  if (s == "uint" || s == "uint32") return PlyType::UInt32;
  throw IoError("PLY '" + name + "': unsupported property type '" + s + "'");
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

}  // namespace

Eigen::Index PlyTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < properties.size(); ++i)
    if (properties[i].name == name) return Eigen::Index(i);
  throw InvalidInput("PLY: no property named '" + name + "'");
}

std::string encode_ply(const PlyTable& t) {
  std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(t.rows.rows()) + "\n";
  for (const auto& p : t.properties) out += std::string("property ") + ply_type_name(p.type) + " " + p.name + "\n";
  out += "end_header\n";
  for (Eigen::Index r = 0; r < t.rows.rows(); ++r) {
    for (std::size_t c = 0; c < t.properties.size(); ++c) {
      const double v = t.rows(r, Eigen::Index(c));
      switch (t.properties[c].type) {
        case PlyType::Float32: put(out, float(v)); break;
        case PlyType::Float64: put(out, v); break;
        case PlyType::UInt8: put(out, std::uint8_t(v)); break;
        case PlyType::Int32: put(out, std::int32_t(v)); break;
        case PlyType::UInt32: put(out, std::uint32_t(v)); break;
      }
    }
  }
  return out;
}

PlyTable decode_ply(const std::string& bytes, const std::string& name) {
  const std::size_t end = bytes.find("end_header\n");
  if (bytes.rfind("ply\n", 0) != 0 || end == std::string::npos) throw IoError("PLY '" + name + "': missing header");
  std::istringstream header(bytes.substr(0, end));
  std::string line;
  PlyTable t;
  Eigen::Index count = -1;
  bool in_vertex = false;
  while (std::getline(header, line)) {
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") throw IoError("PLY '" + name + "': only binary_little_endian is supported");
    } else if (kw == "element") {
      std::string el;
      long long n = 0;
      ls >> el >> n;
      in_vertex = el == "vertex";
      if (in_vertex) count = Eigen::Index(n);
      else if (n > 0) throw IoError("PLY '" + name + "': unsupported element '" + el + "'");
    } else if (kw == "property" && in_vertex) {
      std::string type, prop;
      ls >> type >> prop;
      if (type == "list") throw IoError("PLY '" + name + "': list properties are not supported");
      t.properties.push_back({prop, ply_type_from(type, name)});
    }
  }
  if (count < 0) throw IoError("PLY '" + name + "': no vertex element");
  std::size_t stride = 0;
  for (const auto& p : t.properties) stride += ply_type_size(p.type);
  const std::size_t start = end + std::string("end_header\n").size();
  const std::size_t need = stride * std::size_t(count);
  if (bytes.size() - start < need) {
    throw IoError("PLY '" + name + "': truncated vertex data at byte " + std::to_string(bytes.size()) + ", expected " +
                  std::to_string(start + need));
  }
  t.rows.resize(count, Eigen::Index(t.properties.size()));
  const char* p = bytes.data() + start;
  for (Eigen::Index r = 0; r < count; ++r) {
    for (std::size_t c = 0; c < t.properties.size(); ++c) {
      double v = 0;
      switch (t.properties[c].type) {
        case PlyType::Float32: v = get<float>(p); break;
        case PlyType::Float64: v = get<double>(p); break;
        case PlyType::UInt8: v = get<std::uint8_t>(p); break;
        case PlyType::Int32: v = get<std::int32_t>(p); break;
        case PlyType::UInt32: v = get<std::uint32_t>(p); break;
      }
      t.rows(r, Eigen::Index(c)) = v;
      p += ply_type_size(t.properties[c].type);
    }
  }
  return t;
}

void write_ply(const std::string& path, const PlyTable& table) { write_file(path, encode_ply(table)); }

PlyTable read_ply(const std::string& path) { return decode_ply(read_file(path), path); }

}  // namespace i4d
