#include "her2/image_io.hpp"

#include <algorithm>
#include <cctype>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "her2/error.hpp"

namespace her2 {

bool is_supported_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".tif" || ext == ".tiff";
}

RasterImage load_image(const std::filesystem::path& path) {
  if (!is_supported_image(path)) throw InputError("unsupported image format: " + path.string());
  const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw InputError("cannot read image " + path.string());
  if (raw.depth() != CV_8U) throw InputError("image is not 8-bit: " + path.string());
  if (raw.channels() != 3) throw InputError("image is not RGB: " + path.string());

  const int w = raw.cols;
  const int h = raw.rows;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    const auto* row = raw.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      const std::size_t i = 3 * (static_cast<std::size_t>(y) * w + x);
      pixels[i] = row[x][2];  // OpenCV stores BGR
      pixels[i + 1] = row[x][1];
      pixels[i + 2] = row[x][0];
    }
  }
  return RasterImage(w, h, std::move(pixels));
}

void save_png(const std::filesystem::path& path, const RasterImage& image) {
  if (image.empty()) throw InputError("cannot write an empty image");
  cv::Mat mat(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      const Rgb c = image.at(x, y);
      row[x] = cv::Vec3b(c.b, c.g, c.r);
    }
  }
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::filesystem::path tmp = path;
  tmp += ".tmp.png";
  if (!cv::imwrite(tmp.string(), mat, {cv::IMWRITE_PNG_COMPRESSION, 6})) {
    throw InputError("cannot write " + path.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw InputError("cannot move output into place at " + path.string());
}

}  // namespace her2
