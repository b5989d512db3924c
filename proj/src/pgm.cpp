#include "tensorreg/pgm.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tensorreg/errors.hpp"

namespace tensorreg {

namespace {

// Token scanner that tracks byte offsets and skips whitespace and # comments.
class PnmScanner {
 public:
  explicit PnmScanner(std::istream& in) : in_(in) {}

  long offset() const { return offset_; }

  int get() {
    const int c = in_.get();
    if (c != EOF) ++offset_;
    return c;
  }

  void skip_separators() {
    for (;;) {
      int c = in_.peek();
      if (c == '#') {
        while (c != EOF && c != '\n') c = get();
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        get();
      } else {
        return;
      }
    }
  }

  long read_number(const char* what) {
    skip_separators();
    const long start = offset_;
    long value = 0;
    bool any = false;
    for (;;) {
      const int c = in_.peek();
      if (c < '0' || c > '9') break;
      get();
      value = value * 10 + (c - '0');
      any = true;
      if (value > 1000000000L) throw InputError(std::string("pgm: oversized ") + what, start);
    }
    if (!any) throw InputError(std::string("pgm: expected ") + what, start);
    return value;
  }

 private:
  std::istream& in_;
  long offset_ = 0;
};

}  // namespace

PgmImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("pgm: cannot open " + path);
  PnmScanner scan(in);
  const int m0 = scan.get();
  const int m1 = scan.get();
  if (m0 != 'P' || (m1 != '2' && m1 != '5'))
    throw InputError("pgm: not a P2/P5 graymap", 0);
  const bool binary = m1 == '5';
  PgmImage img;
  img.width = static_cast<int>(scan.read_number("width"));
  img.height = static_cast<int>(scan.read_number("height"));
  img.max_value = static_cast<int>(scan.read_number("maxval"));
  if (img.width < 1 || img.height < 1)
    throw InputError("pgm: non-positive dimensions", scan.offset());
  if (img.max_value < 1 || img.max_value > 65535)
    throw InputError("pgm: maxval out of range", scan.offset());
  const size_t count = static_cast<size_t>(img.width) * img.height;
  img.pixels.resize(count);
  if (binary) {
    const int c = scan.get();  // single separator byte after maxval
    if (c == EOF) throw InputError("pgm: truncated before raster", scan.offset());
    const int bytes = img.max_value > 255 ? 2 : 1;
    for (size_t i = 0; i < count; ++i) {
      int value = 0;
      for (int b = 0; b < bytes; ++b) {
        const int byte = scan.get();
        if (byte == EOF) throw InputError("pgm: truncated raster", scan.offset());
        value = (value << 8) | byte;
      }
      if (value > img.max_value) throw InputError("pgm: sample exceeds maxval", scan.offset() - bytes);
      img.pixels[i] = value;
    }
  } else {
    for (size_t i = 0; i < count; ++i) {
      const long v = scan.read_number("sample");
      if (v > img.max_value) throw InputError("pgm: sample exceeds maxval", scan.offset());
      img.pixels[i] = static_cast<int>(v);
    }
  }
  return img;
}

void write_pgm(const std::string& path, const PgmImage& img) {
  if (img.width < 1 || img.height < 1 ||
      img.pixels.size() != static_cast<size_t>(img.width) * img.height)
    throw InputError("pgm: invalid image to write");
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("pgm: cannot write " + tmp);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    for (int p : img.pixels) {
      const unsigned char byte = static_cast<unsigned char>(std::clamp(p, 0, 255));
      out.put(static_cast<char>(byte));
    }
    if (!out) throw InputError("pgm: short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace tensorreg
