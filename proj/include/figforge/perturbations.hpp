#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

namespace figforge {

enum class PerturbKind { brightness, shift, rotation, hflip, zoom };

const char* to_string(PerturbKind k);
PerturbKind perturb_kind_from_string(const std::string& s);

// Magnitude semantics per kind:
//   brightness  additive offset of magnitude*255 per channel, in [-1, 1]
//   shift       horizontal translation by magnitude*width, in [-0.5, 0.5];
//               positive moves content right, vacated columns replicate the
//               edge
//   rotation    degrees about the image center, in [-45, 45], bilinear with
//               edge replication
//   hflip       mirrors columns; magnitude ignored
//   zoom        center-crop to 1/magnitude of each dimension then resize
//               back, magnitude >= 1
// When `seed` is set the magnitude field is ignored and a magnitude is drawn
// uniformly from the kind's default range instead.
struct PerturbationSpec {
  PerturbKind kind = PerturbKind::brightness;
  double magnitude = 0.0;
  std::optional<std::uint64_t> seed;

  friend bool operator==(const PerturbationSpec&,
                         const PerturbationSpec&) = default;
};

// [lo, hi] used for seeded magnitude draws: brightness [-0.2, 0.2], shift
// [-0.1, 0.1], rotation [-15, 15], zoom [1.1, 1.3], hflip [0, 0].
std::array<double, 2> default_magnitude_range(PerturbKind k);

// Uniform draw from the default range via SplitMix64(seed).
double sampled_magnitude(PerturbKind k, std::uint64_t seed);

// Throws ValidationError when the magnitude violates its kind's range.
void validate(const PerturbationSpec& spec);

// Applies one perturbation. Output dimensions always equal input dimensions.
// Identity parameters (brightness 0, shift rounding to 0 px, rotation 0,
// zoom cropping the full frame, hflip twice) are bit-exact.
cv::Mat perturb(const cv::Mat& image, const PerturbationSpec& spec);

// Batch mode: applies every spec to every image under in_dir (png/jpg/jpeg/
// bmp, recursive), mirroring the directory tree under
// out_dir/<kind>[_k]/... where _k disambiguates repeated kinds (second
// brightness spec -> "brightness_2"). A spec with a seed draws a fresh
// magnitude per image from derive_seed(seed, image index in sorted path
// order), so runs are reproducible. Returns the written subdirectory names
// in spec order.
std::vector<std::string> perturb_directory(
    const std::filesystem::path& in_dir,
    const std::vector<PerturbationSpec>& specs,
    const std::filesystem::path& out_dir);

}  // namespace figforge
