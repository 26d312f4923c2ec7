#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ivos/core.hpp"

namespace ivos {

// PNG/JPEG ingestion and export. All functions throw LoadError on I/O
// failure and FormatError on undecodable data.

RgbImage decode_png_rgb(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png_rgb(const RgbImage& img);

/// 8-bit single-channel PNG, pixel value = ObjectId. Palette PNGs are read as
/// raw indices.
LabelMask decode_png_labels(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png_labels(const LabelMask& mask);

RgbImage decode_jpeg_rgb(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes);

/// Reads .png or .jpg/.jpeg by extension.
RgbImage read_image(const std::filesystem::path& p);
void write_png(const std::filesystem::path& p, const RgbImage& img);

LabelMask read_label_png(const std::filesystem::path& p);
void write_label_png(const std::filesystem::path& p, const LabelMask& mask);

/// Numbered image files (00000.png, 00001.png, ...) sorted by name.
std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& dir);
FrameSequence load_frame_directory(const std::filesystem::path& dir);

std::string frame_file_name(int index, const std::string& ext = ".png");

}  // namespace ivos
