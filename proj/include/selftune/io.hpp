#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "selftune/types.hpp"

namespace selftune {

/// Shortest decimal text that parses back to exactly `v` ("nan", "inf" and
/// "-inf" for non-finite values). Locale independent.
std::string format_double(double v);

/// Parses a full token as a double; throws InputError naming `context`.
double parse_double(const std::string& token, const std::string& context);

/// Row-by-row CSV output with deterministic number formatting.
class CsvWriter {
 public:
  /// Creates parent directories; throws InputError when the file cannot be
  /// opened.
  CsvWriter(const std::filesystem::path& path,
            const std::vector<std::string>& header);

  void row(const std::vector<std::string>& cells);
  void row(const std::vector<double>& values);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_;
};

/// Comma-separated numbers, one matrix row per line, no header.
void write_matrix_csv(const std::filesystem::path& path, const Matrix& M);

/// Reads a numeric CSV. A first line that does not parse as numbers is taken
/// as a header and skipped. Throws InputError on ragged rows, bad tokens or an
/// empty file.
Matrix read_matrix_csv(const std::filesystem::path& path);

/// Binary matrix: magic "STMATF64", rows and cols as little-endian uint64,
/// then rows * cols little-endian float64 in row-major order.
void write_matrix_binary(const std::filesystem::path& path, const Matrix& M);
Matrix read_matrix_binary(const std::filesystem::path& path);

/// Binary when the file starts with the magic, CSV otherwise.
Matrix read_matrix(const std::filesystem::path& path);
/// Binary for a ".bin" extension, CSV otherwise.
void write_matrix(const std::filesystem::path& path, const Matrix& M);

/// 8-bit grayscale image, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Binary PGM (P5) with maxval <= 255.
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

/// A directory of P5 frames (sorted by file name) as a pixels x frames matrix
/// with intensities in [0, 1]. Each frame is reshaped column-wise (image
/// columns stacked). Throws InputError naming the directory when it holds no
/// .pgm files, or the file when one is unreadable or has a different size.
Matrix read_pgm_stack(const std::filesystem::path& dir, int& height, int& width);

/// Writes column j of `frames` (height * width values, column-wise) to
/// dir/prefix_000j.pgm. Values are mapped linearly from [lo, hi] to
/// [0, 255] and clamped.
void write_pgm_stack(const std::filesystem::path& dir, const std::string& prefix,
                     const Matrix& frames, int height, double lo, double hi);

}  // namespace selftune
