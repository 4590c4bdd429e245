#include <filesystem>

#include "doctest.h"
#include "helpers.hpp"
#include "simexplain/dataset.hpp"
#include "simexplain/error.hpp"
#include "simexplain/io.hpp"
#include "simexplain/synth.hpp"

using namespace simexplain;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("sx_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}
}  // namespace

TEST_CASE("SMAP1 round trip keeps floats and flags") {
  auto rng = make_rng(1);
  SaliencyMap m = make_saliency_map(testutil::random_grid(7, 7, rng), Method::LIME, false);
  const auto dir = scratch("smap");
  io::save_saliency(dir / "m.smap", m);
  const auto back = io::load_saliency(dir / "m.smap");
  CHECK(back == m);
  const auto bytes = io::read_file(dir / "m.smap");
  CHECK(bytes.substr(0, 5) == "SMAP1");
}

TEST_CASE("GRID1 image round trip and truncation") {
  auto rng = make_rng(2);
  const auto img = testutil::random_image({5, 6, 3}, rng);
  const auto dir = scratch("grid");
  io::save_image(dir / "a.grid", img);
  const auto back = io::load_image(dir / "a.grid");
  REQUIRE(back.shape() == img.shape());
  for (std::size_t i = 0; i < img.size(); ++i)
    CHECK(back.data()[i] == static_cast<double>(static_cast<float>(img.data()[i])));
  auto bytes = io::read_file(dir / "a.grid");
  CHECK(bytes.size() == 5 + 12 + 4 * img.size());
  bytes.resize(bytes.size() - 3);
  io::write_file(dir / "b.grid", bytes);
  CHECK_THROWS_AS(io::load_image(dir / "b.grid"), ValidationError);
}

TEST_CASE("image values are validated") {
  CHECK_THROWS_AS(ImageTensor({1, 1, 1}, {1.5}), InvalidData);
  CHECK_THROWS_AS(ImageTensor({1, 2, 1}, {0.5}), InvalidData);
}

TEST_CASE("PGM preview header") {
  const auto dir = scratch("pgm");
  io::write_pgm(dir / "g.pgm", Grid(2, 3, {0, 0.5, 1, 1, 0.5, 0}));
  CHECK(io::read_file(dir / "g.pgm") == "P2\n3 2\n255\n0 128 255\n255 128 0\n");
}

TEST_CASE("dataset round trip and integrity errors") {
  SyntheticSpec spec;
  spec.n_images = 64;
  const auto dir = scratch("ds");
  const Dataset ds = synth_generate(spec, dir);
  const Dataset back = load_dataset(dir / "manifest.json");
  CHECK(back.num_images() == 64);
  CHECK(back.num_attributes() == 8);
  CHECK(back.labels == ds.labels);
  CHECK(back.pairs.size() == ds.pairs.size());
  CHECK(back.image_splits == ds.image_splits);

  // A pair that names an unknown image is reported with its id.
  auto pairs = io::read_file(dir / "pairs.csv");
  io::write_file(dir / "pairs.csv", pairs + "ghost_17," + ds.ids[0] + ",test\n");
  try {
    load_dataset(dir / "manifest.json");
    FAIL("expected an integrity error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("ghost_17") != std::string::npos);
  }
}
