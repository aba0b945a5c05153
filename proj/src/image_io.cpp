#include "director/image_io.hpp"

#include <algorithm>
#include <fstream>

namespace director {

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.ndim() != 3 || image.dim(2) != 3)
    throw ContractError("write_ppm: expected [H,W,3], got " + shape_str(image.shape()));
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ContractError("write_ppm: cannot open " + path);
  os << "P6\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
  std::vector<uint8_t> bytes(static_cast<size_t>(image.numel()));
  for (int64_t i = 0; i < image.numel(); ++i) {
    const float v = std::clamp(image.data()[i], 0.0f, 1.0f);
    bytes[size_t(i)] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
}

Tensor read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContractError("read_ppm: cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255)
    throw ContractError("read_ppm: unsupported format in " + path);
  is.get();  // single whitespace after header
  std::vector<uint8_t> bytes(static_cast<size_t>(w) * h * 3);
  is.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!is) throw ContractError("read_ppm: truncated file " + path);
  Tensor t({h, w, 3});
  for (size_t i = 0; i < bytes.size(); ++i) t.data_mut()[i] = bytes[i] / 255.0f;
  return t;
}

}  // namespace director
