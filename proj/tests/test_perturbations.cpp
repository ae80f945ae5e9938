#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "doctest.h"
#include "figforge/perturbations.hpp"
#include "figforge/rng.hpp"
#include "test_support.hpp"

using namespace figforge;
using support::TempDir;

namespace {

bool images_equal(const cv::Mat& a, const cv::Mat& b) {
  if (a.size() != b.size() || a.type() != b.type()) return false;
  return cv::countNonZero(cv::Mat(a != b).reshape(1)) == 0;
}

cv::Mat noise(int w, int h, std::uint64_t seed) {
  SplitMix64 rng(seed);
  cv::Mat img(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.at<cv::Vec3b>(y, x) = cv::Vec3b(rng.next_below(256),
                                          rng.next_below(256),
                                          rng.next_below(256));
  return img;
}

cv::Mat ramp(int w, int h) {
  cv::Mat img(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.at<cv::Vec3b>(y, x) = cv::Vec3b(x % 256, x % 256, x % 256);
  return img;
}

}  // namespace

TEST_CASE("perturbation names round-trip") {
  for (PerturbKind k : {PerturbKind::brightness, PerturbKind::shift,
                        PerturbKind::rotation, PerturbKind::hflip,
                        PerturbKind::zoom})
    CHECK(perturb_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(perturb_kind_from_string("blur"), ConfigError);
}

TEST_CASE("horizontal flip is an involution, bit for bit") {
  const cv::Mat img = noise(37, 23, 1);
  const cv::Mat once = perturb(img, {PerturbKind::hflip, 0.0, {}});
  const cv::Mat twice = perturb(once, {PerturbKind::hflip, 0.0, {}});
  CHECK(images_equal(twice, img));
  CHECK_FALSE(images_equal(once, img));
  // Columns are mirrored.
  for (int x = 0; x < img.cols; ++x)
    CHECK(once.at<cv::Vec3b>(11, x) == img.at<cv::Vec3b>(11, img.cols - 1 - x));
}

TEST_CASE("identity parameters reproduce the input bit for bit") {
  const cv::Mat img = noise(40, 40, 2);
  CHECK(images_equal(perturb(img, {PerturbKind::brightness, 0.0, {}}), img));
  CHECK(images_equal(perturb(img, {PerturbKind::rotation, 0.0, {}}), img));
  CHECK(images_equal(perturb(img, {PerturbKind::zoom, 1.0, {}}), img));
  // A shift that rounds to zero pixels is also exact.
  CHECK(images_equal(perturb(img, {PerturbKind::shift, 0.004, {}}), img));
}

TEST_CASE("brightness adds a scaled offset with saturation") {
  const cv::Mat img(5, 5, CV_8UC3, cv::Scalar(100, 200, 30));
  const cv::Mat up = perturb(img, {PerturbKind::brightness, 0.2, {}});
  // 0.2 * 255 = 51, saturating at 255.
  CHECK(up.at<cv::Vec3b>(2, 2) == cv::Vec3b(151, 251, 81));
  const cv::Mat down = perturb(img, {PerturbKind::brightness, -0.2, {}});
  CHECK(down.at<cv::Vec3b>(2, 2) == cv::Vec3b(49, 149, 0));
}

TEST_CASE("shift moves columns and replicates the entering edge") {
  const cv::Mat img = ramp(100, 10);

  // +0.1 of width 100 is 10 columns to the right: pixel (x, y) comes from
  // (x - 10, y), clamped at the left edge.
  const cv::Mat right = perturb(img, {PerturbKind::shift, 0.1, {}});
  REQUIRE(right.size() == img.size());
  for (int x = 10; x < 100; ++x)
    CHECK(right.at<cv::Vec3b>(5, x)[0] == x - 10);
  for (int x = 0; x < 10; ++x)
    CHECK(right.at<cv::Vec3b>(5, x)[0] == 0);  // replicated column 0

  const cv::Mat left = perturb(img, {PerturbKind::shift, -0.1, {}});
  for (int x = 0; x < 90; ++x)
    CHECK(left.at<cv::Vec3b>(5, x)[0] == x + 10);
  for (int x = 90; x < 100; ++x)
    CHECK(left.at<cv::Vec3b>(5, x)[0] == 99);  // replicated column 99
}

TEST_CASE("rotation keeps dimensions and preserves constant images") {
  const cv::Mat img = noise(31, 17, 3);
  const cv::Mat turned = perturb(img, {PerturbKind::rotation, 15.0, {}});
  CHECK(turned.size() == img.size());
  CHECK_FALSE(images_equal(turned, img));

  const cv::Mat flat(20, 20, CV_8UC3, cv::Scalar(9, 9, 9));
  CHECK(images_equal(perturb(flat, {PerturbKind::rotation, 30.0, {}}), flat));
}

TEST_CASE("zoom crops the center and scales back") {
  const cv::Mat img = noise(50, 50, 4);
  const cv::Mat zoomed = perturb(img, {PerturbKind::zoom, 2.0, {}});
  CHECK(zoomed.size() == img.size());
  CHECK_FALSE(images_equal(zoomed, img));
  const cv::Mat flat(50, 50, CV_8UC3, cv::Scalar(123, 4, 5));
  CHECK(images_equal(perturb(flat, {PerturbKind::zoom, 1.7, {}}), flat));
}

TEST_CASE("magnitudes outside each range are rejected") {
  CHECK_THROWS_AS(validate({PerturbKind::brightness, 1.5, {}}),
                  ValidationError);
  CHECK_THROWS_AS(validate({PerturbKind::brightness, -1.01, {}}),
                  ValidationError);
  CHECK_THROWS_AS(validate({PerturbKind::shift, 0.6, {}}), ValidationError);
  CHECK_THROWS_AS(validate({PerturbKind::rotation, 50.0, {}}),
                  ValidationError);
  CHECK_THROWS_AS(validate({PerturbKind::zoom, 0.9, {}}), ValidationError);
  CHECK_NOTHROW(validate({PerturbKind::brightness, 1.0, {}}));
  CHECK_NOTHROW(validate({PerturbKind::shift, -0.5, {}}));
  CHECK_NOTHROW(validate({PerturbKind::rotation, -45.0, {}}));
  CHECK_NOTHROW(validate({PerturbKind::zoom, 1.0, {}}));
  CHECK_NOTHROW(validate({PerturbKind::hflip, 123.0, {}}));  // ignored
}

TEST_CASE("seeded magnitudes come from the default ranges") {
  for (PerturbKind k : {PerturbKind::brightness, PerturbKind::shift,
                        PerturbKind::rotation, PerturbKind::zoom}) {
    const auto [lo, hi] = default_magnitude_range(k);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const double m = sampled_magnitude(k, seed);
      CHECK(m >= lo);
      CHECK(m <= hi);
    }
    CHECK(sampled_magnitude(k, 7) == sampled_magnitude(k, 7));
  }
}

TEST_CASE("directory perturbation mirrors trees and disambiguates kinds") {
  TempDir in("perturb_in");
  TempDir out("perturb_out");
  std::filesystem::create_directories(in / "sub");
  REQUIRE(cv::imwrite((in / "a.png").string(), noise(20, 20, 5)));
  REQUIRE(cv::imwrite((in / "sub" / "b.png").string(), noise(24, 16, 6)));
  support::write_text(in / "notes.txt", "not an image");

  const std::vector<PerturbationSpec> specs{
      {PerturbKind::brightness, 0.1, {}},
      {PerturbKind::brightness, -0.1, {}},
      {PerturbKind::hflip, 0.0, {}}};
  const auto names = perturb_directory(in.path(), specs, out.path());
  CHECK(names == std::vector<std::string>{"brightness", "brightness_2",
                                          "hflip"});
  for (const std::string& name : names) {
    CHECK(std::filesystem::exists(out.path() / name / "a.png"));
    CHECK(std::filesystem::exists(out.path() / name / "sub" / "b.png"));
    CHECK_FALSE(std::filesystem::exists(out.path() / name / "notes.txt"));
  }

  // The flipped copy round-trips against the original.
  const cv::Mat original = cv::imread((in / "a.png").string());
  const cv::Mat flipped =
      cv::imread((out.path() / "hflip" / "a.png").string());
  CHECK(images_equal(perturb(flipped, {PerturbKind::hflip, 0.0, {}}),
                     original));
}

TEST_CASE("seeded directory runs are reproducible per image") {
  TempDir in("perturb_seed_in");
  REQUIRE(cv::imwrite((in / "a.png").string(), ramp(60, 12)));
  REQUIRE(cv::imwrite((in / "b.png").string(), ramp(60, 12)));

  const std::vector<PerturbationSpec> specs{{PerturbKind::shift, 0.0, 77}};
  TempDir out1("perturb_seed_out1");
  TempDir out2("perturb_seed_out2");
  perturb_directory(in.path(), specs, out1.path());
  perturb_directory(in.path(), specs, out2.path());

  for (const char* name : {"a.png", "b.png"})
    CHECK(support::read_text(out1.path() / "shift" / name) ==
          support::read_text(out2.path() / "shift" / name));

  // Identical inputs at different indices see different draws.
  const cv::Mat a = cv::imread((out1.path() / "shift" / "a.png").string());
  const cv::Mat b = cv::imread((out1.path() / "shift" / "b.png").string());
  const double mag_a =
      sampled_magnitude(PerturbKind::shift, derive_seed(77, 0));
  const double mag_b =
      sampled_magnitude(PerturbKind::shift, derive_seed(77, 1));
  CHECK(images_equal(a, perturb(ramp(60, 12),
                                {PerturbKind::shift, mag_a, {}})));
  CHECK(images_equal(b, perturb(ramp(60, 12),
                                {PerturbKind::shift, mag_b, {}})));
}
