#include "ivos/image_io.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

namespace ivos {

namespace fs = std::filesystem;

namespace {

struct DecodeBuffers {
  std::vector<std::uint8_t> out;
  std::vector<png_bytep> rows;
};

struct PngReadState {
  const std::vector<std::uint8_t>* bytes;
  std::size_t offset;
};

void png_read_from_buffer(png_structp png, png_bytep out, png_size_t n) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->offset + n > st->bytes->size()) png_error(png, "truncated PNG");
  std::memcpy(out, st->bytes->data() + st->offset, n);
  st->offset += n;
}

void png_write_to_buffer(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void png_flush_noop(png_structp) {}

void png_error_throw(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

void png_warning_ignore(png_structp, png_const_charp) {}

/// Decodes to 8-bit rows with either 3 channels (rgb) or 1 channel (labels).
std::vector<std::uint8_t> decode_png(const std::vector<std::uint8_t>& bytes, bool want_rgb, int& height,
                                     int& width) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("not a PNG file");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_throw, png_warning_ignore);
  if (!png) throw FormatError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  // Heap-held so their state stays defined across longjmp.
  auto buf = std::make_unique<DecodeBuffers>();
  auto st = std::make_unique<PngReadState>(PngReadState{&bytes, 0});
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("PNG decode error: " + err);
  }
  png_set_read_fn(png, st.get(), png_read_from_buffer);
  png_read_info(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (bit_depth == 16) png_set_strip_16(png);
  if (want_rgb) {
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (bit_depth < 8 && color_type == PNG_COLOR_TYPE_GRAY) png_set_expand_gray_1_2_4_to_8(png);
  } else {
    if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_PALETTE) {
      png_destroy_read_struct(&png, &info, nullptr);
      throw FormatError("label PNG must be grayscale or palette");
    }
    if (bit_depth < 8) png_set_packing(png);
  }
  png_read_update_info(png, info);
  height = static_cast<int>(png_get_image_height(png, info));
  width = static_cast<int>(png_get_image_width(png, info));
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  const std::size_t channels = want_rgb ? 3 : 1;
  if (rowbytes != static_cast<std::size_t>(width) * channels) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unexpected PNG row layout");
  }
  buf->out.resize(rowbytes * height);
  buf->rows.resize(height);
  for (int y = 0; y < height; ++y) buf->rows[y] = buf->out.data() + y * rowbytes;
  png_read_image(png, buf->rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return std::move(buf->out);
}

std::vector<std::uint8_t> encode_png(const std::uint8_t* data, int height, int width, bool rgb) {
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_throw, png_warning_ignore);
  if (!png) throw FormatError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  auto out = std::make_unique<std::vector<std::uint8_t>>();
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("PNG encode error: " + err);
  }
  png_set_write_fn(png, out.get(), png_write_to_buffer, png_flush_noop);
  png_set_IHDR(png, info, width, height, 8, rgb ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t rowbytes = static_cast<std::size_t>(width) * (rgb ? 3 : 1);
  for (int y = 0; y < height; ++y) png_write_row(png, const_cast<png_bytep>(data + y * rowbytes));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return std::move(*out);
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, mgr->message);
  std::longjmp(mgr->jump, 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

RgbImage decode_png_rgb(const std::vector<std::uint8_t>& bytes) {
  int h = 0, w = 0;
  auto data = decode_png(bytes, true, h, w);
  RgbImage img;
  img.height = h;
  img.width = w;
  img.pixels = std::move(data);
  return img;
}

std::vector<std::uint8_t> encode_png_rgb(const RgbImage& img) {
  return encode_png(img.pixels.data(), img.height, img.width, true);
}

LabelMask decode_png_labels(const std::vector<std::uint8_t>& bytes) {
  int h = 0, w = 0;
  auto data = decode_png(bytes, false, h, w);
  LabelMask m;
  m.labels = Eigen::Map<const Grid<ObjectId>>(data.data(), h, w);
  m.resolution = Resolution::kFull;
  return m;
}

std::vector<std::uint8_t> encode_png_labels(const LabelMask& mask) {
  Grid<ObjectId> rowmajor = mask.labels;
  return encode_png(rowmajor.data(), mask.rows(), mask.cols(), false);
}

RgbImage decode_jpeg_rgb(const std::vector<std::uint8_t>& bytes) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw FormatError(std::string("JPEG decode error: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  RgbImage img(static_cast<int>(cinfo.output_height), static_cast<int>(cinfo.output_width));
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * img.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

std::vector<std::uint8_t> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw LoadError("cannot open " + p.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw LoadError("write failed for " + p.string());
}

RgbImage read_image(const fs::path& p) {
  const std::string ext = lower(p.extension().string());
  auto bytes = read_file(p);
  if (ext == ".jpg" || ext == ".jpeg") return decode_jpeg_rgb(bytes);
  return decode_png_rgb(bytes);
}

void write_png(const fs::path& p, const RgbImage& img) { write_file(p, encode_png_rgb(img)); }

LabelMask read_label_png(const fs::path& p) { return decode_png_labels(read_file(p)); }

void write_label_png(const fs::path& p, const LabelMask& mask) { write_file(p, encode_png_labels(mask)); }

std::vector<fs::path> list_frame_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LoadError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = lower(e.path().extension().string());
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

FrameSequence load_frame_directory(const fs::path& dir) {
  FrameSequence seq;
  for (const auto& f : list_frame_files(dir)) seq.frames.push_back(read_image(f));
  if (seq.frames.empty()) throw LoadError("no frames in " + dir.string());
  seq.validate();
  return seq;
}

std::string frame_file_name(int index, const std::string& ext) {
  std::ostringstream os;
  os << std::setw(5) << std::setfill('0') << index << ext;
  return os.str();
}

}  // namespace ivos
