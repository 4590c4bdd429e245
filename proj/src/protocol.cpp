#include "simexplain/protocol.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "json.hpp"
#include <openssl/evp.h>

#include "simexplain/error.hpp"

namespace simexplain::protocol {

using nlohmann::json;

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw InvalidArgument("base64 length not a multiple of 4");
  std::vector<std::uint8_t> out(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw InvalidArgument("invalid base64 payload");
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::string encode_floats(std::span<const double> values) {
  std::vector<std::uint8_t> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<std::uint8_t>((u >> (8 * b)) & 0xffu);
  }
  return base64_encode(bytes);
}

std::vector<double> decode_floats(const std::string& b64) {
  const auto bytes = base64_decode(b64);
  if (bytes.size() % 4 != 0) throw InvalidArgument("float payload not a multiple of 4 bytes");
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

std::string hello_request(std::uint64_t id) { return json{{"id", id}, {"op", "hello"}}.dump(); }

std::string score_batch_request(std::uint64_t id, const ImageTensor& ref,
                                std::span<const ImageTensor> queries) {
  json j{{"id", id}, {"op", "score_batch"}, {"ref", encode_floats(ref.data())}};
  auto& qs = j["queries"] = json::array();
  for (const auto& q : queries) qs.push_back(encode_floats(q.data()));
  return j.dump();
}

std::string embed_request(std::uint64_t id, const ImageTensor& image) {
  return json{{"id", id}, {"op", "embed"}, {"image", encode_floats(image.data())}}.dump();
}

namespace {

json parse_response(const std::string& line, std::uint64_t expect_id) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw TransportError(std::string("malformed response: ") + e.what());
  }
  if (!j.is_object() || !j.contains("id") || !j["id"].is_number_unsigned())
    throw TransportError("response without id");
  if (j["id"].get<std::uint64_t>() != expect_id)
    throw TransportError("response id " + j["id"].dump() + " does not match request " +
                         std::to_string(expect_id));
  if (j.contains("error")) {
    const auto& e = j["error"];
    const std::string code = e.value("code", "internal");
    const std::string msg = "external scorer: " + e.value("msg", std::string());
    if (code == "unsupported") throw Unsupported(msg);
    if (code == "bad_input") throw InvalidArgument(msg);
    throw ComputeError(msg);
  }
  return j;
}

}  // namespace

Hello parse_hello(const std::string& line, std::uint64_t expect_id) {
  const json j = parse_response(line, expect_id);
  try {
    Hello h;
    h.caps.can_score = false;
    for (const auto& c : j.at("caps")) {
      const auto s = c.get<std::string>();
      if (s == "score") h.caps.can_score = true;
      if (s == "embed") h.caps.can_embed = true;
    }
    h.caps.can_grad = false;
    h.caps.max_batch = j.at("max_batch").get<int>();
    const auto dims = j.at("dims").get<std::vector<int>>();
    if (dims.size() != 3) throw TransportError("hello dims must have 3 entries");
    h.dims = {dims[0], dims[1], dims[2]};
    if (!h.caps.can_score || h.caps.max_batch < 1) throw TransportError("hello: scorer cannot score");
    return h;
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed hello: ") + e.what());
  }
}

std::vector<double> parse_scores(const std::string& line, std::uint64_t expect_id, std::size_t expect_n) {
  const json j = parse_response(line, expect_id);
  try {
    auto scores = j.at("scores").get<std::vector<double>>();
    if (scores.size() != expect_n) throw TransportError("score count mismatch");
    return scores;
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed scores: ") + e.what());
  }
}

Embedding parse_embedding(const std::string& line, std::uint64_t expect_id) {
  const json j = parse_response(line, expect_id);
  try {
    Embedding e{decode_floats(j.at("data").get<std::string>())};
    if (e.dim() != j.at("dim").get<int>()) throw TransportError("embedding dim mismatch");
    return e;
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed embedding: ") + e.what());
  }
}

namespace {

ImageTensor decode_image(const std::string& b64, ImageShape shape) {
  auto values = decode_floats(b64);
  if (values.size() != shape.size())
    throw InvalidArgument("image payload has " + std::to_string(values.size()) + " values, expected " +
                          std::to_string(shape.size()));
  return ImageTensor(shape, std::move(values));
}

json error_response(const json& id, const char* code, const std::string& msg) {
  return json{{"id", id}, {"error", {{"code", code}, {"msg", msg}}}};
}

}  // namespace

void serve(const Scorer& scorer, std::istream& in, std::ostream& out, int max_batch) {
  const ImageShape shape = scorer.input_shape();
  const ScorerCaps caps = scorer.caps();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json id = nullptr, resp;
    try {
      const json req = json::parse(line);
      id = req.at("id");
      const std::string op = req.at("op").get<std::string>();
      if (op == "hello") {
        json capl = json::array({"score"});
        if (caps.can_embed) capl.push_back("embed");
        resp = {{"id", id}, {"caps", capl}, {"max_batch", max_batch},
                {"dims", {shape.height, shape.width, shape.channels}}};
      } else if (op == "score_batch") {
        const auto& qs = req.at("queries");
        if (static_cast<int>(qs.size()) > max_batch) {
          resp = error_response(id, "bad_input", "batch exceeds max_batch");
        } else {
          const ImageTensor ref = decode_image(req.at("ref").get<std::string>(), shape);
          std::vector<ImageTensor> queries;
          for (const auto& q : qs) queries.push_back(decode_image(q.get<std::string>(), shape));
          resp = {{"id", id}, {"scores", scorer.score_batch(ref, queries)}};
        }
      } else if (op == "embed") {
        if (!caps.can_embed) {
          resp = error_response(id, "unsupported", "embed not supported");
        } else {
          const auto e = scorer.embed(decode_image(req.at("image").get<std::string>(), shape));
          resp = {{"id", id}, {"dim", e.dim()}, {"data", encode_floats(e.data)}};
        }
      } else {
        resp = error_response(id, "unsupported", "unknown op '" + op + "'");
      }
    } catch (const json::exception& e) {
      resp = error_response(id, "bad_input", e.what());
    } catch (const ValidationError& e) {
      resp = error_response(id, "bad_input", e.what());
    } catch (const std::exception& e) {
      resp = error_response(id, "internal", e.what());
    }
    out << resp.dump() << '\n' << std::flush;
  }
}

}  // namespace simexplain::protocol
