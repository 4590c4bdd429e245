#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "simexplain/error.hpp"
#include "simexplain/external_scorer.hpp"
#include "simexplain/linear_scorer.hpp"
#include "simexplain/protocol.hpp"

using namespace simexplain;
using testutil::random_image;

namespace {
std::vector<std::uint8_t> bytes(const std::string& s) { return {s.begin(), s.end()}; }
}  // namespace

TEST_CASE("base64 vectors") {
  using protocol::base64_decode;
  using protocol::base64_encode;
  CHECK(base64_encode(bytes("Man")) == "TWFu");
  CHECK(base64_encode(bytes("Ma")) == "TWE=");
  CHECK(base64_encode(bytes("M")) == "TQ==");
  CHECK(base64_encode(bytes("")).empty());
  CHECK(base64_decode("TWFu") == bytes("Man"));
  CHECK(base64_decode("TQ==") == bytes("M"));
  CHECK_THROWS(base64_decode("T$=="));
}

TEST_CASE("float payloads round trip at f32 precision") {
  const std::vector<double> v{0.0, 1.0, -2.5, 0.1, 1e-7, 3.4e38};
  const auto back = protocol::decode_floats(protocol::encode_floats(v));
  REQUIRE(back.size() == v.size());
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(back[i] == static_cast<double>(static_cast<float>(v[i])));
}

TEST_CASE("serve answers hello, score_batch and embed in-process") {
  const ImageShape shape{8, 8, 3};
  LinearToyScorer s(shape, LinearToyOptions{});
  auto rng = make_rng(1);
  const auto r = random_image(shape, rng);
  std::vector<ImageTensor> qs{random_image(shape, rng), random_image(shape, rng)};
  std::stringstream in, out;
  in << protocol::hello_request(1) << '\n'
     << protocol::score_batch_request(2, r, qs) << '\n'
     << protocol::embed_request(3, r) << '\n'
     << R"({"id":4,"op":"dance"})" << '\n';
  protocol::serve(s, in, out, 16);
  std::string line;
  std::getline(out, line);
  const auto hello = protocol::parse_hello(line, 1);
  CHECK(hello.dims == shape);
  CHECK(hello.caps.can_embed);
  CHECK(hello.caps.max_batch == 16);
  std::getline(out, line);
  const auto scores = protocol::parse_scores(line, 2, 2);
  // Images cross the wire as f32.
  CHECK(scores[0] == doctest::Approx(s.score(r, qs[0])).epsilon(1e-5));
  std::getline(out, line);
  CHECK(protocol::parse_embedding(line, 3).data.size() == 8);
  std::getline(out, line);
  CHECK(nlohmann::json::parse(line).contains("error"));
  CHECK_THROWS_AS(protocol::parse_scores(R"({"id":9,"scores":[1]})", 2, 1), TransportError);
  CHECK_THROWS_AS(protocol::parse_scores("garbage", 2, 1), TransportError);
}

TEST_CASE("external scorer matches the in-process scorer with chunked batches") {
  const ImageShape shape{12, 12, 3};
  LinearToyOptions o;
  o.dim = 6;
  o.seed = 4;
  LinearToyScorer local(shape, o);
  ExternalScorer ext({SCORER_STUB_PATH, "--height", "12", "--width", "12", "--dim", "6", "--seed", "4",
                      "--max-batch", "7"},
                     2);
  CHECK(ext.caps().max_batch == 7);
  CHECK(ext.input_shape() == shape);
  auto rng = make_rng(5);
  const auto r = random_image(shape, rng);
  std::vector<ImageTensor> qs;
  for (int i = 0; i < 23; ++i) qs.push_back(random_image(shape, rng));
  const auto a = ext.score_batch(r, qs);
  const auto b = local.score_batch(r, qs);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-5);
  const auto e = ext.embed(r).data;
  const auto f = local.embed(r).data;
  REQUIRE(e.size() == f.size());
  for (std::size_t i = 0; i < e.size(); ++i) CHECK(e[i] == doctest::Approx(f[i]).epsilon(1e-4));
  CHECK(ext.restarts() == 0);
  CHECK_THROWS_AS(ext.score_batch(r, std::vector<ImageTensor>{ImageTensor({4, 4, 3})}), ValidationError);
}

TEST_CASE("missing external binary is a transport failure") {
  CHECK_THROWS_AS(ExternalScorer({"/nonexistent/scorer"}), ComputeError);
}
