#include <doctest.h>

#include "magic/raster.hpp"
#include "support.hpp"

using namespace magic;

TEST_SUITE("raster") {
  TEST_CASE("png round trip is lossless") {
    const auto scene = test::make_scene(37, 23, 4);
    CHECK(decode_png_rgb(encode_png(scene.pixels)) == scene.pixels);

    RasterRgba rgba = to_rgba(scene.pixels);
    rgba.at(3, 4)[3] = 17;
    CHECK(decode_png_rgba(encode_png(rgba, {9, 0})) == rgba);
    CHECK(decode_png_rgba(encode_png(rgba, {0, 0})) == rgba);
  }

  TEST_CASE("rgb and rgba conversion") {
    const auto scene = test::make_scene(5, 4, 2);
    const auto rgba = to_rgba(scene.pixels);
    CHECK(rgba.at(2, 1)[3] == 255);
    CHECK(to_rgb(rgba) == scene.pixels);
    // An RGB PNG decodes as opaque RGBA.
    CHECK(decode_png_rgba(encode_png(scene.pixels)) == rgba);
  }

  TEST_CASE("physical resolution chunk") {
    const auto img = test::solid_rgba(8, 8, 1, 2, 3);
    CHECK(png_dpi(encode_png(img, {6, 300})) == 300);
    CHECK(png_dpi(encode_png(img, {6, 0})) == 0);
  }

  TEST_CASE("file io and errors") {
    test::TempDir dir("raster");
    const auto img = test::solid_rgba(9, 3, 10, 20, 30, 40);
    write_png(dir.path() / "a.png", img);
    CHECK(read_png_rgba(dir.path() / "a.png") == img);
    CHECK_THROWS(read_png_rgb(dir.path() / "missing.png"));
    CHECK_THROWS(decode_png_rgb("not a png"));
    CHECK_THROWS(RasterRgb(0, 4));
  }
}
