#include "figforge/perturbations.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <map>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "figforge/errors.hpp"
#include "figforge/rng.hpp"

namespace figforge {

const char* to_string(PerturbKind k) {
  switch (k) {
    case PerturbKind::brightness: return "brightness";
    case PerturbKind::shift: return "shift";
    case PerturbKind::rotation: return "rotation";
    case PerturbKind::hflip: return "hflip";
    case PerturbKind::zoom: return "zoom";
  }
  return "brightness";
}

PerturbKind perturb_kind_from_string(const std::string& s) {
  for (PerturbKind k : {PerturbKind::brightness, PerturbKind::shift,
                        PerturbKind::rotation, PerturbKind::hflip,
                        PerturbKind::zoom}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown perturbation kind: " + s);
}

std::array<double, 2> default_magnitude_range(PerturbKind k) {
  switch (k) {
    case PerturbKind::brightness: return {-0.2, 0.2};
    case PerturbKind::shift: return {-0.1, 0.1};
    case PerturbKind::rotation: return {-15.0, 15.0};
    case PerturbKind::hflip: return {0.0, 0.0};
    case PerturbKind::zoom: return {1.1, 1.3};
  }
  return {0.0, 0.0};
}

double sampled_magnitude(PerturbKind k, std::uint64_t seed) {
  const std::array<double, 2> range = default_magnitude_range(k);
  SplitMix64 rng(seed);
  return range[0] + rng.next_real() * (range[1] - range[0]);
}

namespace {

void check_magnitude(PerturbKind kind, double magnitude) {
  if (!std::isfinite(magnitude))
    throw ValidationError("perturbation magnitude must be finite");
  const char* message = nullptr;
  switch (kind) {
    case PerturbKind::brightness:
      if (magnitude < -1.0 || magnitude > 1.0)
        message = "brightness magnitude outside [-1, 1]";
      break;
    case PerturbKind::shift:
      if (magnitude < -0.5 || magnitude > 0.5)
        message = "shift magnitude outside [-0.5, 0.5]";
      break;
    case PerturbKind::rotation:
      if (magnitude < -45.0 || magnitude > 45.0)
        message = "rotation magnitude outside [-45, 45]";
      break;
    case PerturbKind::hflip:
      break;
    case PerturbKind::zoom:
      if (magnitude < 1.0) message = "zoom magnitude must be >= 1";
      break;
  }
  if (message)
    throw ValidationError(message,
                          {{"magnitude", std::to_string(magnitude)}});
}

cv::Mat shift_columns(const cv::Mat& src, int dx) {
  cv::Mat dst(src.rows, src.cols, src.type());
  const std::size_t pixel = src.elemSize();
  for (int y = 0; y < src.rows; ++y) {
    const unsigned char* in = src.ptr<unsigned char>(y);
    unsigned char* out = dst.ptr<unsigned char>(y);
    for (int x = 0; x < src.cols; ++x) {
      const int sx = std::clamp(x - dx, 0, src.cols - 1);
      std::memcpy(out + pixel * static_cast<std::size_t>(x),
                  in + pixel * static_cast<std::size_t>(sx), pixel);
    }
  }
  return dst;
}

}  // namespace

void validate(const PerturbationSpec& spec) {
  if (!spec.seed) check_magnitude(spec.kind, spec.magnitude);
}

cv::Mat perturb(const cv::Mat& image, const PerturbationSpec& spec) {
  if (image.empty()) throw ValidationError("empty image");
  const double magnitude = spec.seed
                               ? sampled_magnitude(spec.kind, *spec.seed)
                               : spec.magnitude;
  check_magnitude(spec.kind, magnitude);

  switch (spec.kind) {
    case PerturbKind::brightness: {
      if (magnitude == 0.0) return image.clone();
      cv::Mat out;
      image.convertTo(out, -1, 1.0, magnitude * 255.0);
      return out;
    }
    case PerturbKind::shift: {
      const int dx = static_cast<int>(std::llround(magnitude * image.cols));
      if (dx == 0) return image.clone();
      return shift_columns(image, dx);
    }
    case PerturbKind::rotation: {
      if (magnitude == 0.0) return image.clone();
      const cv::Point2f center((image.cols - 1) / 2.0f,
                               (image.rows - 1) / 2.0f);
      const cv::Mat m = cv::getRotationMatrix2D(center, magnitude, 1.0);
      cv::Mat out;
      cv::warpAffine(image, out, m, image.size(), cv::INTER_LINEAR,
                     cv::BORDER_REPLICATE);
      return out;
    }
    case PerturbKind::hflip: {
      cv::Mat out;
      cv::flip(image, out, 1);
      return out;
    }
    case PerturbKind::zoom: {
      const int cw = std::max(
          1, static_cast<int>(std::llround(image.cols / magnitude)));
      const int ch = std::max(
          1, static_cast<int>(std::llround(image.rows / magnitude)));
      if (cw == image.cols && ch == image.rows) return image.clone();
      const int x0 = (image.cols - cw) / 2;
      const int y0 = (image.rows - ch) / 2;
      cv::Mat out;
      cv::resize(image(cv::Rect(x0, y0, cw, ch)), out,
                 cv::Size(image.cols, image.rows), 0, 0, cv::INTER_LINEAR);
      return out;
    }
  }
  throw ValidationError("unknown perturbation kind");
}

std::vector<std::string> perturb_directory(
    const std::filesystem::path& in_dir,
    const std::vector<PerturbationSpec>& specs,
    const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(in_dir))
    throw IoError("input is not a directory", {{"path", in_dir.string()}});
  for (const PerturbationSpec& spec : specs) validate(spec);

  std::vector<fs::path> relative;
  for (const auto& entry : fs::recursive_directory_iterator(in_dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
      relative.push_back(fs::relative(entry.path(), in_dir));
  }
  std::sort(relative.begin(), relative.end());

  std::vector<std::string> subdirs;
  std::map<std::string, int> kind_uses;
  for (const PerturbationSpec& spec : specs) {
    const int use = ++kind_uses[to_string(spec.kind)];
    std::string name = to_string(spec.kind);
    if (use > 1) name += "_" + std::to_string(use);
    subdirs.push_back(name);

    for (std::size_t i = 0; i < relative.size(); ++i) {
      const fs::path src_path = in_dir / relative[i];
      const cv::Mat image = cv::imread(src_path.string(), cv::IMREAD_COLOR);
      if (image.empty())
        throw IoError("cannot decode image", {{"path", src_path.string()}});
      PerturbationSpec effective = spec;
      if (spec.seed) effective.seed = derive_seed(*spec.seed, i);
      const cv::Mat out = perturb(image, effective);
      const fs::path dst_path = out_dir / name / relative[i];
      std::error_code ec;
      fs::create_directories(dst_path.parent_path(), ec);
      if (ec)
        throw IoError("cannot create output directory",
                      {{"path", dst_path.parent_path().string()},
                       {"error", ec.message()}});
      if (!cv::imwrite(dst_path.string(), out))
        throw IoError("cannot write image", {{"path", dst_path.string()}});
    }
  }
  return subdirs;
}

}  // namespace figforge
