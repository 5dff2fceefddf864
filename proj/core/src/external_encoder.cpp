#include "advqdet/external_encoder.hpp"

#include <csignal>
#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "advqdet/bytes.hpp"
#include "advqdet/errors.hpp"
#include "advqdet/exchange.hpp"

namespace advqdet {

EmbeddingFileEncoder::EmbeddingFileEncoder(const std::filesystem::path& path, Precision precision)
    : precision_(precision) {
  auto file = read_embedding_file(path);
  dim_ = file.dim;
  table_.reserve(file.records.size());
  for (auto& rec : file.records) table_.insert_or_assign(rec.key, std::move(rec.values));
}

Fingerprint EmbeddingFileEncoder::encode(const ImageTensor& image) const {
  const Digest key = content_digest(image);
  auto it = table_.find(key);
  if (it == table_.end()) throw LookupMiss("no embedding for image digest " + to_hex(key));
  return DenseEmbedding(it->second, precision_);
}

ProcessEncoder::ProcessEncoder(const std::string& command, std::size_t dim, Precision precision)
    : dim_(dim), precision_(precision) {
  if (dim_ == 0) throw ConfigError("external encoder dim must be positive");
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe(in_pipe) != 0) throw TransportError("pipe() failed");
  if (::pipe(out_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw TransportError("pipe() failed");
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw TransportError("fork() failed");
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  ::fcntl(to_child_, F_SETFD, FD_CLOEXEC);
  ::fcntl(from_child_, F_SETFD, FD_CLOEXEC);
  pid_ = pid;
  // A dead child must surface as TransportError on write, not kill the caller.
  std::signal(SIGPIPE, SIG_IGN);
}

ProcessEncoder::~ProcessEncoder() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
}

std::vector<float> ProcessEncoder::round_trip(const ImageTensor& image) const {
  const auto request = encode_embedding_request(image);
  std::vector<std::uint8_t> response(dim_ * 4);
  {
    std::lock_guard lock(mu_);
    write_all(to_child_, request.data(), request.size());
    if (!read_exact(from_child_, response.data(), response.size())) {
      throw TransportError("external encoder closed the connection");
    }
  }
  ByteReader r(response);
  std::vector<float> values(dim_);
  for (auto& v : values) v = r.f32();
  return values;
}

Fingerprint ProcessEncoder::encode(const ImageTensor& image) const {
  return DenseEmbedding(round_trip(image), precision_);
}

std::unique_ptr<Encoder> make_external_encoder(const EncoderConfig& cfg) {
  const std::string& src = cfg.external_source;
  if (src.rfind("file:", 0) == 0) {
    return std::make_unique<EmbeddingFileEncoder>(src.substr(5), cfg.precision);
  }
  if (src.rfind("exec:", 0) == 0) {
    return std::make_unique<ProcessEncoder>(src.substr(5), static_cast<std::size_t>(cfg.external_dim),
                                            cfg.precision);
  }
  // Bare paths are treated as embedding files.
  if (!src.empty()) return std::make_unique<EmbeddingFileEncoder>(src, cfg.precision);
  throw ConfigError("external encoder source is empty");
}

}  // namespace advqdet
