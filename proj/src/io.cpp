#include "selftune/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "selftune/errors.hpp"

namespace selftune {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'S', 'T', 'M', 'A', 'T', 'F', '6', '4'};

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

bool try_parse(const std::string& token, double& v) {
  if (token == "nan") {
    v = std::nan("");
    return true;
  }
  if (token == "inf" || token == "-inf") {
    v = token[0] == '-' ? -HUGE_VAL : HUGE_VAL;
    return true;
  }
  const char* begin = token.data();
  const char* end = begin + token.size();
  if (begin != end && *begin == '+') ++begin;
  const auto res = std::from_chars(begin, end, v);
  return res.ec == std::errc() && res.ptr == end && begin != end;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), 8);
}

std::uint64_t get_u64(std::istream& in, const fs::path& path) {
  std::array<unsigned char, 8> b;
  if (!in.read(reinterpret_cast<char*>(b.data()), 8)) {
    throw InputError(path.string() + ": truncated header");
  }
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

/// Next whitespace-delimited PGM header token, skipping # comments.
std::string pgm_token(std::istream& in, const fs::path& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw InputError(path.string() + ": truncated PGM header");
  return tok;
}

int pgm_int(std::istream& in, const fs::path& path) {
  const std::string tok = pgm_token(in, path);
  int v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || v <= 0) {
    throw InputError(path.string() + ": bad PGM header field '" + tok + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  std::array<char, 32> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

double parse_double(const std::string& token, const std::string& context) {
  double v = 0.0;
  if (!try_parse(trim(token), v)) {
    throw InputError(context + ": '" + token + "' is not a number");
  }
  return v;
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header)
    : path_(path), out_(open_out(path, std::ios::out | std::ios::trunc)),
      columns_(header.size()) {
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) {
    throw std::invalid_argument("CsvWriter: row width does not match header");
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    out_ << cells[i];
  }
  out_ << '\n';
  if (!out_) throw InputError("write failed: " + path_.string());
}

void CsvWriter::row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_double(v));
  row(cells);
}

void write_matrix_csv(const fs::path& path, const Matrix& M) {
  auto out = open_out(path, std::ios::out | std::ios::trunc);
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j) out << ',';
      out << format_double(M(i, j));
    }
    out << '\n';
  }
  if (!out) throw InputError("write failed: " + path.string());
}

Matrix read_matrix_csv(const fs::path& path) {
  auto in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    std::vector<double> vals(cells.size());
    bool numeric = true;
    for (std::size_t j = 0; j < cells.size() && numeric; ++j) {
      numeric = try_parse(cells[j], vals[j]);
    }
    if (!numeric) {
      if (rows.empty() && lineno == 1) continue;  // header
      throw InputError(path.string() + ":" + std::to_string(lineno) +
                       ": non-numeric value");
    }
    if (!rows.empty() && vals.size() != rows.front().size()) {
      throw InputError(path.string() + ":" + std::to_string(lineno) +
                       ": expected " + std::to_string(rows.front().size()) +
                       " columns");
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw InputError(path.string() + ": no data");
  Matrix M(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) M(i, j) = rows[i][j];
  }
  return M;
}

void write_matrix_binary(const fs::path& path, const Matrix& M) {
  auto out = open_out(path, std::ios::out | std::ios::trunc | std::ios::binary);
  out.write(kMagic, 8);
  put_u64(out, static_cast<std::uint64_t>(M.rows()));
  put_u64(out, static_cast<std::uint64_t>(M.cols()));
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      put_u64(out, std::bit_cast<std::uint64_t>(M(i, j)));
    }
  }
  if (!out) throw InputError("write failed: " + path.string());
}

Matrix read_matrix_binary(const fs::path& path) {
  auto in = open_in(path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw InputError(path.string() + ": not a STMATF64 matrix file");
  }
  const std::uint64_t rows = get_u64(in, path);
  const std::uint64_t cols = get_u64(in, path);
  const auto start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::uint64_t>(in.tellg() - start);
  if (cols != 0 && rows > bytes / 8 / cols) {
    throw InputError(path.string() + ": truncated data");
  }
  if (rows * cols * 8 != bytes) {
    throw InputError(path.string() + ": size does not match header");
  }
  in.seekg(start);
  Matrix M(rows, cols);
  for (std::uint64_t i = 0; i < rows; ++i) {
    for (std::uint64_t j = 0; j < cols; ++j) {
      M(i, j) = std::bit_cast<double>(get_u64(in, path));
    }
  }
  return M;
}

Matrix read_matrix(const fs::path& path) {
  auto in = open_in(path);
  char magic[8] = {};
  in.read(magic, 8);
  if (in.gcount() == 8 && std::memcmp(magic, kMagic, 8) == 0) {
    return read_matrix_binary(path);
  }
  return read_matrix_csv(path);
}

void write_matrix(const fs::path& path, const Matrix& M) {
  if (path.extension() == ".bin") {
    write_matrix_binary(path, M);
  } else {
    write_matrix_csv(path, M);
  }
}

void write_pgm(const fs::path& path, const GrayImage& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw std::invalid_argument("write_pgm: inconsistent image size");
  }
  auto out = open_out(path, std::ios::out | std::ios::trunc | std::ios::binary);
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw InputError("write failed: " + path.string());
}

GrayImage read_pgm(const fs::path& path) {
  auto in = open_in(path);
  if (pgm_token(in, path) != "P5") {
    throw InputError(path.string() + ": not a binary PGM (P5) file");
  }
  GrayImage img;
  img.width = pgm_int(in, path);
  img.height = pgm_int(in, path);
  const int maxval = pgm_int(in, path);
  if (maxval > 255) {
    throw InputError(path.string() + ": 16-bit PGM is not supported");
  }
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw InputError(path.string() + ": truncated pixel data");
  }
  if (maxval != 255) {
    for (auto& p : img.pixels) {
      p = static_cast<std::uint8_t>(std::lround(255.0 * p / maxval));
    }
  }
  return img;
}

Matrix read_pgm_stack(const fs::path& dir, int& height, int& width) {
  if (!fs::is_directory(dir)) {
    throw InputError(dir.string() + ": not a directory");
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") {
      files.push_back(e.path());
    }
  }
  if (files.empty()) throw InputError(dir.string() + ": no .pgm frames found");
  std::sort(files.begin(), files.end());
  Matrix Y;
  for (std::size_t f = 0; f < files.size(); ++f) {
    const GrayImage img = read_pgm(files[f]);
    if (f == 0) {
      height = img.height;
      width = img.width;
      Y.resize(static_cast<Eigen::Index>(height) * width, files.size());
    } else if (img.height != height || img.width != width) {
      throw InputError(files[f].string() + ": frame size differs from " +
                       files[0].string());
    }
    for (int c = 0; c < width; ++c) {
      for (int r = 0; r < height; ++r) {
        Y(static_cast<Eigen::Index>(c) * height + r, f) =
            img.pixels[static_cast<std::size_t>(r) * width + c] / 255.0;
      }
    }
  }
  return Y;
}

void write_pgm_stack(const fs::path& dir, const std::string& prefix,
                     const Matrix& frames, int height, double lo, double hi) {
  if (height <= 0 || frames.rows() % height != 0) {
    throw std::invalid_argument("write_pgm_stack: rows not a multiple of height");
  }
  const int width = static_cast<int>(frames.rows() / height);
  const double span = hi > lo ? hi - lo : 1.0;
  for (Eigen::Index f = 0; f < frames.cols(); ++f) {
    GrayImage img{width, height, {}};
    img.pixels.resize(static_cast<std::size_t>(width) * height);
    for (int c = 0; c < width; ++c) {
      for (int r = 0; r < height; ++r) {
        double v = (frames(static_cast<Eigen::Index>(c) * height + r, f) - lo) / span;
        if (!std::isfinite(v)) v = 0.0;
        img.pixels[static_cast<std::size_t>(r) * width + c] =
            static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
      }
    }
    char name[32];
    std::snprintf(name, sizeof name, "_%04d.pgm", static_cast<int>(f));
    write_pgm(dir / (prefix + name), img);
  }
}

}  // namespace selftune
