#pragma once

#include <string>
#include <vector>

namespace tensorreg {

/// 8/16-bit grayscale image, row-major.
struct PgmImage {
  int width = 0;
  int height = 0;
  int max_value = 255;
  std::vector<int> pixels;
};

/// Reads a portable graymap (P2 ascii or P5 binary). Throws InputError with
/// the byte offset of the first malformed token.
PgmImage read_pgm(const std::string& path);

/// Writes an 8-bit binary (P5) graymap atomically (temp file + rename).
void write_pgm(const std::string& path, const PgmImage& img);

}  // namespace tensorreg
