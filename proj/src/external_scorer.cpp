#include "simexplain/external_scorer.hpp"

#include <csignal>
#include <cstdio>
#include <cstring>
#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "simexplain/error.hpp"
#include "simexplain/parallel.hpp"
#include "simexplain/protocol.hpp"

namespace simexplain {

class ExternalScorer::Connection {
 public:
  explicit Connection(const std::vector<std::string>& argv) { spawn(argv); }
  ~Connection() { shutdown(); }

  void restart(const std::vector<std::string>& argv) {
    shutdown();
    spawn(argv);
  }

  std::uint64_t next_id() { return ++last_id_; }

  std::string roundtrip(const std::string& request) {
    std::string line = request + "\n";
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
      const ssize_t n = ::write(to_child_, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("write to scorer failed: ") + std::strerror(errno));
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
    char* buf = nullptr;
    std::size_t cap = 0;
    const ssize_t n = ::getline(&buf, &cap, from_child_);
    std::string out = n > 0 ? std::string(buf, static_cast<std::size_t>(n)) : std::string();
    std::free(buf);
    if (n <= 0) throw TransportError("scorer process closed its output");
    if (!out.empty() && out.back() == '\n') out.pop_back();
    return out;
  }

 private:
  void spawn(const std::vector<std::string>& argv) {
    int in_pipe[2], out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0)
      throw TransportError("pipe() failed");
    pid_ = ::fork();
    if (pid_ < 0) throw TransportError("fork() failed");
    if (pid_ == 0) {
      ::dup2(in_pipe[0], STDIN_FILENO);
      ::dup2(out_pipe[1], STDOUT_FILENO);
      std::vector<char*> args;
      for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
      args.push_back(nullptr);
      ::execvp(args[0], args.data());
      ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = ::fdopen(out_pipe[0], "r");
    last_id_ = 0;
  }

  void shutdown() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_) std::fclose(from_child_);
    to_child_ = -1;
    from_child_ = nullptr;
    if (pid_ > 0) {
      int status = 0;
      ::waitpid(pid_, &status, 0);
      pid_ = -1;
    }
  }

  pid_t pid_ = -1;
  int to_child_ = -1;
  std::FILE* from_child_ = nullptr;
  std::uint64_t last_id_ = 0;
};

ExternalScorer::ExternalScorer(std::vector<std::string> argv, int pool_size)
    : argv_(std::move(argv)) {
  if (argv_.empty()) throw InvalidArgument("external scorer command is empty");
  if (pool_size < 1) throw InvalidArgument("pool size must be >= 1");
  std::signal(SIGPIPE, SIG_IGN);
  for (int i = 0; i < pool_size; ++i) pool_.push_back(std::make_unique<Connection>(argv_));
  busy_.assign(pool_.size(), false);
  // Handshake on every connection; all must agree.
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    auto& c = *pool_[i];
    const auto id = c.next_id();
    const auto h = protocol::parse_hello(c.roundtrip(protocol::hello_request(id)), id);
    if (i == 0) {
      caps_ = h.caps;
      dims_ = h.dims;
    } else if (!(h.dims == dims_)) {
      throw TransportError("scorer processes disagree on input dims");
    }
  }
}

ExternalScorer::~ExternalScorer() = default;

int ExternalScorer::restarts() const {
  std::lock_guard lock(mu_);
  return restarts_;
}

std::size_t ExternalScorer::acquire() const {
  std::unique_lock lock(mu_);
  for (;;) {
    for (std::size_t i = 0; i < busy_.size(); ++i) {
      if (!busy_[i]) {
        busy_[i] = true;
        return i;
      }
    }
    cv_.wait(lock);
  }
}

void ExternalScorer::release(std::size_t i) const {
  {
    std::lock_guard lock(mu_);
    busy_[i] = false;
  }
  cv_.notify_one();
}

template <class Build, class Parse>
auto ExternalScorer::call(Build&& build, Parse&& parse) const {
  const std::size_t slot = acquire();
  struct Release {
    const ExternalScorer* self;
    std::size_t slot;
    ~Release() { self->release(slot); }
  } guard{this, slot};
  auto& conn = *pool_[slot];
  for (int attempt = 0;; ++attempt) {
    try {
      const auto id = conn.next_id();
      return parse(conn.roundtrip(build(id)), id);
    } catch (const TransportError&) {
      if (attempt >= 1) throw;
      conn.restart(argv_);
      const auto hid = conn.next_id();
      protocol::parse_hello(conn.roundtrip(protocol::hello_request(hid)), hid);
      std::lock_guard lock(mu_);
      ++restarts_;
    }
  }
}

std::vector<double> ExternalScorer::score_batch(const ImageTensor& ref,
                                                std::span<const ImageTensor> queries) const {
  check_shape(ref);
  for (const auto& q : queries) check_shape(q);
  std::vector<double> out(queries.size());
  const std::size_t chunk = static_cast<std::size_t>(caps_.max_batch);
  const Exec exec = pool_.size() > 1 ? Exec::Parallel : Exec::Serial;
  for_each_chunk(queries.size(), chunk, exec, [&](std::size_t, std::size_t b, std::size_t e) {
    const auto part = queries.subspan(b, e - b);
    const auto scores = call(
        [&](std::uint64_t id) { return protocol::score_batch_request(id, ref, part); },
        [&](const std::string& line, std::uint64_t id) {
          return protocol::parse_scores(line, id, part.size());
        });
    std::copy(scores.begin(), scores.end(), out.begin() + static_cast<std::ptrdiff_t>(b));
  });
  return out;
}

Embedding ExternalScorer::embed(const ImageTensor& image) const {
  if (!caps_.can_embed) throw Unsupported("external scorer does not expose embeddings");
  check_shape(image);
  return call([&](std::uint64_t id) { return protocol::embed_request(id, image); },
              [&](const std::string& line, std::uint64_t id) { return protocol::parse_embedding(line, id); });
}

}  // namespace simexplain
