#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "simexplain/scorer.hpp"

// Newline-delimited JSON protocol spoken with external scorer processes.
//   -> {"id":n,"op":"hello"}
//   <- {"id":n,"caps":["score","embed"],"max_batch":64,"dims":[H,W,C]}
//   -> {"id":n,"op":"score_batch","ref":"<b64 f32 LE>","queries":["<b64>",...]}
//   <- {"id":n,"scores":[f64,...]}
//   -> {"id":n,"op":"embed","image":"<b64>"}
//   <- {"id":n,"dim":D,"data":"<b64 f32 LE>"}
// Failures: {"id":n,"error":{"code":"unsupported|bad_input|internal","msg":"..."}}
namespace simexplain::protocol {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// f32 little-endian payloads.
std::string encode_floats(std::span<const double> values);
std::vector<double> decode_floats(const std::string& b64);

struct Hello {
  ScorerCaps caps;
  ImageShape dims;
};

std::string hello_request(std::uint64_t id);
std::string score_batch_request(std::uint64_t id, const ImageTensor& ref,
                                std::span<const ImageTensor> queries);
std::string embed_request(std::uint64_t id, const ImageTensor& image);

/// Response parsers; throw TransportError on malformed lines or id mismatch
/// and Unsupported / InvalidArgument / ComputeError for protocol errors.
Hello parse_hello(const std::string& line, std::uint64_t expect_id);
std::vector<double> parse_scores(const std::string& line, std::uint64_t expect_id, std::size_t expect_n);
Embedding parse_embedding(const std::string& line, std::uint64_t expect_id);

/// Serves requests from `in` until EOF, one response line per request line.
/// Used by the stub scorer binary and by in-process protocol tests.
void serve(const Scorer& scorer, std::istream& in, std::ostream& out, int max_batch);

}  // namespace simexplain::protocol
