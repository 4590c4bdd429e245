#pragma once

#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "simexplain/scorer.hpp"

namespace simexplain {

/// Client for a scorer running as a child process that speaks the NDJSON
/// protocol on stdin/stdout. Owns a pool of connections (one child each);
/// each connection serializes its request/response traffic and the pool
/// accepts concurrent submitters. Batches are split into max_batch chunks
/// and reassembled in order. A transport failure restarts the connection and
/// retries the request once.
class ExternalScorer : public Scorer {
 public:
  explicit ExternalScorer(std::vector<std::string> argv, int pool_size = 1);
  ~ExternalScorer() override;

  ExternalScorer(const ExternalScorer&) = delete;
  ExternalScorer& operator=(const ExternalScorer&) = delete;

  ScorerCaps caps() const override { return caps_; }
  ImageShape input_shape() const override { return dims_; }
  std::vector<double> score_batch(const ImageTensor& ref,
                                  std::span<const ImageTensor> queries) const override;
  Embedding embed(const ImageTensor& image) const override;

  /// Number of connection restarts so far (transport failures recovered).
  int restarts() const;

 private:
  class Connection;

  std::size_t acquire() const;
  void release(std::size_t i) const;
  template <class Build, class Parse>
  auto call(Build&& build, Parse&& parse) const;

  std::vector<std::string> argv_;
  std::vector<std::unique_ptr<Connection>> pool_;
  mutable std::vector<bool> busy_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  mutable int restarts_ = 0;
  ScorerCaps caps_;
  ImageShape dims_;
};

}  // namespace simexplain
