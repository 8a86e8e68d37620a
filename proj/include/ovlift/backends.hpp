#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "ovlift/common.hpp"
#include "ovlift/geometry.hpp"
#include "ovlift/mask.hpp"
#include "ovlift/math.hpp"

namespace ovlift {

/// What a backend learns about a frame: enough to key recordings and to let a
/// live model find the actual pixels via image_ref.
struct FrameRef {
  int frame_id = -1;
  std::string image_ref;
  int width = 0;
  int height = 0;
};

/// External-model contract. segment/embed_crop return absent when the model
/// has nothing for that query; the caller skips the (prompt, view) pair.
/// Implementations must be safe to call from multiple threads.
class Backend {
public:
  virtual ~Backend() = default;
  virtual std::optional<Mask2D> segment(const FrameRef& frame, int prompt_id,
                                        const std::vector<PixelPoint>& points) = 0;
  virtual std::vector<std::string> tag(const FrameRef& frame) = 0;
  virtual std::optional<std::vector<double>> embed_crop(const FrameRef& frame, int prompt_id,
                                                        const CropBox& crop) = 0;
  virtual Matrix embed_texts(const std::vector<std::string>& texts) = 0;
};

/// Normalization contract: every vector leaving a backend has unit norm.
inline void normalize_embedding(std::vector<double>& v, const std::string& what) {
  double n2 = 0;
  for (double x : v) n2 += x * x;
  if (n2 == 0.0) throw backend_error("zero embedding vector for " + what);
  double inv = 1.0 / std::sqrt(n2);
  for (double& x : v) x *= inv;
}

inline void normalize_rows(Matrix& m, const std::string& what) {
  for (int r = 0; r < m.rows; ++r) {
    double n2 = 0;
    for (int c = 0; c < m.cols; ++c) n2 += m(r, c) * m(r, c);
    if (n2 == 0.0) throw backend_error("zero embedding row " + std::to_string(r) + " for " + what);
    double inv = 1.0 / std::sqrt(n2);
    for (int c = 0; c < m.cols; ++c) m(r, c) *= inv;
  }
}

// ---------------------------------------------------------------------------
// Fixture store: recorded model outputs on disk.
//   masks/frame_<id>/prompt_<id>.rle   first line "H W", second line runs
//   tags/frame_<id>.json               JSON array of strings
//   embeds/manifest.json               {"dim": D, "entries": {key: record index}}
//   embeds/vectors.f32                 little-endian float32, D per record
// Embedding keys: "text:<tag>" and "crop:<frame_id>:<prompt_id>".
// ---------------------------------------------------------------------------

inline std::string crop_embed_key(int frame_id, int prompt_id) {
  return "crop:" + std::to_string(frame_id) + ":" + std::to_string(prompt_id);
}

inline std::string text_embed_key(const std::string& tag) { return "text:" + tag; }

class FixtureStore {
public:
  explicit FixtureStore(const std::string& dir) : dir_(dir) {
    namespace fs = std::filesystem;
    fs::path root(dir);
    if (!fs::is_directory(root)) throw io_error("fixture directory not found: " + dir);

    fs::path masks = root / "masks";
    if (fs::is_directory(masks)) {
      for (const auto& frame_dir : fs::directory_iterator(masks)) {
        if (!frame_dir.is_directory()) continue;
        std::string name = frame_dir.path().filename().string();
        if (name.rfind("frame_", 0) != 0) continue;
        int frame_id = std::stoi(name.substr(6));
        for (const auto& entry : fs::directory_iterator(frame_dir.path())) {
          std::string file = entry.path().filename().string();
          if (file.rfind("prompt_", 0) != 0 || entry.path().extension() != ".rle") continue;
          int prompt_id = std::stoi(file.substr(7));
          MaskRecord rec = read_mask_rle(entry.path().string());
          rec.frame_id = frame_id;
          rec.prompt_id = prompt_id;
          masks_[{frame_id, prompt_id}] = std::move(rec);
        }
      }
    }

    fs::path tags = root / "tags";
    if (fs::is_directory(tags)) {
      for (const auto& entry : fs::directory_iterator(tags)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("frame_", 0) != 0 || entry.path().extension() != ".json") continue;
        int frame_id = std::stoi(name.substr(6));
        std::ifstream in(entry.path());
        nlohmann::json j;
        try {
          in >> j;
        } catch (const nlohmann::json::exception& e) {
          throw consistency_error("bad JSON in " + entry.path().string() + ": " + e.what());
        }
        if (!j.is_array())
          throw consistency_error("expected a JSON array in " + entry.path().string());
        std::vector<std::string> list;
        for (const auto& t : j) list.push_back(t.get<std::string>());
        tags_[frame_id] = std::move(list);
      }
    }

    fs::path manifest = root / "embeds" / "manifest.json";
    if (fs::exists(manifest)) {
      std::ifstream in(manifest);
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw consistency_error("bad JSON in " + manifest.string() + ": " + e.what());
      }
      dim_ = j.at("dim").get<int>();
      if (dim_ < 1) throw consistency_error("bad embedding dim in " + manifest.string());
      fs::path vec_path = root / "embeds" / "vectors.f32";
      std::ifstream vf(vec_path, std::ios::binary);
      if (!vf) throw io_error("cannot open: " + vec_path.string());
      std::vector<char> raw((std::istreambuf_iterator<char>(vf)),
                            std::istreambuf_iterator<char>());
      size_t record_bytes = static_cast<size_t>(dim_) * sizeof(float);
      for (auto it = j.at("entries").begin(); it != j.at("entries").end(); ++it) {
        size_t index = it.value().get<size_t>();
        size_t offset = index * record_bytes;
        if (offset + record_bytes > raw.size())
          throw consistency_error("embedding record " + it.key() + " is out of range in " +
                                  vec_path.string());
        std::vector<float> v(static_cast<size_t>(dim_));
        std::memcpy(v.data(), raw.data() + offset, record_bytes);
        embeds_[it.key()] = std::move(v);
      }
    }
  }

  const std::string& dir() const { return dir_; }
  int dim() const { return dim_; }

  std::optional<MaskRecord> find_mask(int frame_id, int prompt_id) const {
    auto it = masks_.find({frame_id, prompt_id});
    if (it == masks_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<std::string> find_tags(int frame_id) const {
    auto it = tags_.find(frame_id);
    return it == tags_.end() ? std::vector<std::string>{} : it->second;
  }

  std::optional<std::vector<double>> find_embedding(const std::string& key) const {
    auto it = embeds_.find(key);
    if (it == embeds_.end()) return std::nullopt;
    return std::vector<double>(it->second.begin(), it->second.end());
  }

private:
  std::string dir_;
  int dim_ = 0;
  std::map<std::pair<int, int>, MaskRecord> masks_;
  std::map<int, std::vector<std::string>> tags_;
  std::map<std::string, std::vector<float>> embeds_;
};

inline std::optional<Mask2D> fixture_segment(const FixtureStore& store, int frame_id,
                                             int prompt_id) {
  std::optional<MaskRecord> rec = store.find_mask(frame_id, prompt_id);
  if (!rec) return std::nullopt;
  return rec->decode();
}

/// Text embeddings in tag order; unknown tags raise one error listing all of
/// them. Rows are renormalized to unit length.
inline Matrix fixture_embed_texts(const FixtureStore& store, const std::vector<std::string>& tags) {
  std::vector<std::string> missing;
  std::vector<std::vector<double>> rows;
  for (const std::string& tag : tags) {
    auto v = store.find_embedding(text_embed_key(tag));
    if (!v) {
      missing.push_back(tag);
      continue;
    }
    rows.push_back(std::move(*v));
  }
  if (!missing.empty()) {
    std::string msg = "fixture store has no text embedding for:";
    for (const std::string& tag : missing) msg += " \"" + tag + "\"";
    throw backend_error(msg);
  }
  Matrix m(static_cast<int>(rows.size()), store.dim());
  for (size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<int>(rows[r].size()) != store.dim())
      throw consistency_error("text embedding \"" + tags[r] + "\" has wrong dimension");
    for (int c = 0; c < store.dim(); ++c) m(static_cast<int>(r), c) = rows[r][static_cast<size_t>(c)];
  }
  normalize_rows(m, "fixture text embeddings");
  return m;
}

class FixtureBackend : public Backend {
public:
  explicit FixtureBackend(std::shared_ptr<const FixtureStore> store) : store_(std::move(store)) {}
  explicit FixtureBackend(const std::string& dir)
      : store_(std::make_shared<const FixtureStore>(dir)) {}

  std::optional<Mask2D> segment(const FrameRef& frame, int prompt_id,
                                const std::vector<PixelPoint>&) override {
    return fixture_segment(*store_, frame.frame_id, prompt_id);
  }

  std::vector<std::string> tag(const FrameRef& frame) override {
    return store_->find_tags(frame.frame_id);
  }

  std::optional<std::vector<double>> embed_crop(const FrameRef& frame, int prompt_id,
                                                const CropBox&) override {
    auto v = store_->find_embedding(crop_embed_key(frame.frame_id, prompt_id));
    if (!v) return std::nullopt;
    normalize_embedding(*v, crop_embed_key(frame.frame_id, prompt_id));
    return v;
  }

  Matrix embed_texts(const std::vector<std::string>& texts) override {
    return fixture_embed_texts(*store_, texts);
  }

  const FixtureStore& store() const { return *store_; }

private:
  std::shared_ptr<const FixtureStore> store_;
};

/// Wraps a live backend and writes every answer into a fixture directory so
/// later runs can replay it offline. finalize() flushes the embedding pack.
class FixtureRecorder : public Backend {
public:
  FixtureRecorder(std::shared_ptr<Backend> inner, const std::string& dir)
      : inner_(std::move(inner)), root_(dir) {
    namespace fs = std::filesystem;
    fs::create_directories(root_ / "masks");
    fs::create_directories(root_ / "tags");
    fs::create_directories(root_ / "embeds");
  }

  std::optional<Mask2D> segment(const FrameRef& frame, int prompt_id,
                                const std::vector<PixelPoint>& points) override {
    std::optional<Mask2D> mask = inner_->segment(frame, prompt_id, points);
    if (mask) {
      std::lock_guard<std::mutex> lock(mu_);
      namespace fs = std::filesystem;
      fs::path dir = root_ / "masks" / ("frame_" + std::to_string(frame.frame_id));
      fs::create_directories(dir);
      MaskRecord rec;
      rec.frame_id = frame.frame_id;
      rec.prompt_id = prompt_id;
      rec.width = mask->width;
      rec.height = mask->height;
      rec.rle = rle_encode(*mask);
      write_mask_rle((dir / ("prompt_" + std::to_string(prompt_id) + ".rle")).string(), rec);
    }
    return mask;
  }

  std::vector<std::string> tag(const FrameRef& frame) override {
    std::vector<std::string> tags = inner_->tag(frame);
    std::lock_guard<std::mutex> lock(mu_);
    nlohmann::json j = tags;
    std::ofstream out(root_ / "tags" / ("frame_" + std::to_string(frame.frame_id) + ".json"));
    out << j.dump(2) << '\n';
    return tags;
  }

  std::optional<std::vector<double>> embed_crop(const FrameRef& frame, int prompt_id,
                                                const CropBox& crop) override {
    auto v = inner_->embed_crop(frame, prompt_id, crop);
    if (v) {
      std::lock_guard<std::mutex> lock(mu_);
      remember(crop_embed_key(frame.frame_id, prompt_id), *v);
    }
    return v;
  }

  Matrix embed_texts(const std::vector<std::string>& texts) override {
    Matrix m = inner_->embed_texts(texts);
    std::lock_guard<std::mutex> lock(mu_);
    for (size_t i = 0; i < texts.size(); ++i) {
      std::vector<double> row(m.row_ptr(static_cast<int>(i)),
                              m.row_ptr(static_cast<int>(i)) + m.cols);
      remember(text_embed_key(texts[i]), row);
    }
    return m;
  }

  /// Writes embeds/vectors.f32 and manifest.json in sorted key order.
  void finalize() {
    std::lock_guard<std::mutex> lock(mu_);
    nlohmann::json entries = nlohmann::json::object();
    std::ofstream vf(root_ / "embeds" / "vectors.f32", std::ios::binary);
    if (!vf) throw io_error("cannot open for writing: " + (root_ / "embeds" / "vectors.f32").string());
    size_t index = 0;
    for (const auto& [key, vec] : embeds_) {
      entries[key] = index++;
      std::vector<float> f(vec.begin(), vec.end());
      vf.write(reinterpret_cast<const char*>(f.data()),
               static_cast<std::streamsize>(f.size() * sizeof(float)));
    }
    nlohmann::json manifest;
    manifest["dim"] = dim_ > 0 ? dim_ : 0;
    manifest["entries"] = entries;
    std::ofstream mf(root_ / "embeds" / "manifest.json");
    mf << manifest.dump(2) << '\n';
  }

private:
  void remember(const std::string& key, const std::vector<double>& v) {
    if (dim_ == 0) dim_ = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != dim_)
      throw consistency_error("embedding dimension changed mid-recording at " + key);
    embeds_[key] = v;
  }

  std::shared_ptr<Backend> inner_;
  std::filesystem::path root_;
  std::mutex mu_;
  std::map<std::string, std::vector<double>> embeds_;
  int dim_ = 0;
};

// ---------------------------------------------------------------------------
// Subprocess backend: newline-delimited JSON over the child's stdin/stdout.
// Ops: segment, tag, embed_image, embed_text. Every request carries an "id"
// that the response must echo. One in-flight request per child; parallel
// callers draw children from a small pool.
// ---------------------------------------------------------------------------

namespace detail {

inline void ignore_sigpipe_once() {
  static const bool done = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)done;
}

class ChildProcess {
public:
  explicit ChildProcess(const std::string& command) : command_(command) {
    ignore_sigpipe_once();
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0)
      throw backend_error("cannot create pipes for backend subprocess");
    pid_ = ::fork();
    if (pid_ < 0) throw backend_error("cannot fork backend subprocess");
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      std::perror("exec backend command");
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    in_fd_ = to_child[1];
    out_fd_ = from_child[0];
  }

  ~ChildProcess() {
    if (in_fd_ >= 0) ::close(in_fd_);
    if (out_fd_ >= 0) ::close(out_fd_);
    if (pid_ > 0) {
      int status = 0;
      if (::waitpid(pid_, &status, WNOHANG) == 0) {
        ::kill(pid_, SIGTERM);
        ::waitpid(pid_, &status, 0);
      }
    }
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  /// One request line out, one response line back.
  std::string round_trip(const std::string& line, double timeout_s) {
    write_all(line);
    return read_line(timeout_s);
  }

private:
  void write_all(const std::string& line) {
    std::string data = line + "\n";
    size_t off = 0;
    while (off < data.size()) {
      ssize_t n = ::write(in_fd_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw backend_error("backend subprocess closed its input (" + exit_note() + ")");
      }
      off += static_cast<size_t>(n);
    }
  }

  std::string read_line(double timeout_s) {
    auto deadline_ms = static_cast<long long>(timeout_s * 1000.0);
    while (true) {
      size_t nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      struct pollfd pfd {};
      pfd.fd = out_fd_;
      pfd.events = POLLIN;
      int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(deadline_ms, 1000)));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw backend_error("poll on backend subprocess failed");
      }
      if (rc == 0) {
        deadline_ms -= 1000;
        if (deadline_ms <= 0)
          throw backend_error("backend subprocess timed out after " + std::to_string(timeout_s) +
                              " s");
        continue;
      }
      char chunk[4096];
      ssize_t n = ::read(out_fd_, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR) continue;
        throw backend_error("read from backend subprocess failed");
      }
      if (n == 0)
        throw backend_error("backend subprocess exited mid-call (" + exit_note() + ")");
      buffer_.append(chunk, static_cast<size_t>(n));
    }
  }

  std::string exit_note() {
    // EOF on the pipe can arrive a moment before the child is reapable, so
    // give waitpid a short grace period before reporting it as still running.
    int status = 0;
    for (int waited_ms = 0; waited_ms <= 500; ++waited_ms) {
      pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_) {
        pid_ = -1;
        if (WIFEXITED(status)) return "exit code " + std::to_string(WEXITSTATUS(status));
        if (WIFSIGNALED(status)) return "killed by signal " + std::to_string(WTERMSIG(status));
        break;
      }
      if (r < 0) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    return "still running";
  }

  std::string command_;
  pid_t pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  std::string buffer_;
};

} // namespace detail

class SubprocessBackend : public Backend {
public:
  explicit SubprocessBackend(std::string command, int pool_size = 1, double timeout_s = 60.0)
      : command_(std::move(command)), timeout_s_(timeout_s) {
    if (pool_size < 1) throw argument_error("subprocess backend pool size must be >= 1");
    for (int i = 0; i < pool_size; ++i)
      idle_.push_back(std::make_unique<detail::ChildProcess>(command_));
  }

  std::optional<Mask2D> segment(const FrameRef& frame, int prompt_id,
                                const std::vector<PixelPoint>& points) override {
    nlohmann::json req;
    req["op"] = "segment";
    req["frame"] = frame.frame_id;
    req["prompt"] = prompt_id;
    nlohmann::json pts = nlohmann::json::array();
    for (const PixelPoint& p : points) pts.push_back({p.u, p.v});
    req["points"] = pts;
    nlohmann::json resp = call(req);
    if (!resp.contains("mask_rle") || resp["mask_rle"].is_null()) return std::nullopt;
    MaskRecord rec;
    rec.frame_id = frame.frame_id;
    rec.prompt_id = prompt_id;
    try {
      rec.width = resp.at("width").get<int>();
      rec.height = resp.at("height").get<int>();
      rec.rle = resp.at("mask_rle").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw backend_error(std::string("malformed segment response: ") + e.what());
    }
    return rec.decode();
  }

  std::vector<std::string> tag(const FrameRef& frame) override {
    nlohmann::json req;
    req["op"] = "tag";
    req["frame"] = frame.frame_id;
    nlohmann::json resp = call(req);
    std::vector<std::string> tags;
    try {
      for (const auto& t : resp.at("tags")) tags.push_back(t.get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw backend_error(std::string("malformed tag response: ") + e.what());
    }
    return tags;
  }

  std::optional<std::vector<double>> embed_crop(const FrameRef& frame, int prompt_id,
                                                const CropBox& crop) override {
    nlohmann::json req;
    req["op"] = "embed_image";
    req["frame"] = frame.frame_id;
    req["prompt"] = prompt_id;
    req["crop"] = {crop.x0, crop.y0, crop.x1, crop.y1};
    nlohmann::json resp = call(req);
    if (!resp.contains("vector") || resp["vector"].is_null()) return std::nullopt;
    std::vector<double> v;
    try {
      for (const auto& x : resp.at("vector")) v.push_back(x.get<double>());
    } catch (const nlohmann::json::exception& e) {
      throw backend_error(std::string("malformed embed_image response: ") + e.what());
    }
    normalize_embedding(v, "embed_image response");
    return v;
  }

  Matrix embed_texts(const std::vector<std::string>& texts) override {
    nlohmann::json req;
    req["op"] = "embed_text";
    req["texts"] = texts;
    nlohmann::json resp = call(req);
    std::vector<std::vector<double>> rows;
    try {
      for (const auto& row : resp.at("vectors")) {
        std::vector<double> v;
        for (const auto& x : row) v.push_back(x.get<double>());
        rows.push_back(std::move(v));
      }
    } catch (const nlohmann::json::exception& e) {
      throw backend_error(std::string("malformed embed_text response: ") + e.what());
    }
    if (rows.size() != texts.size())
      throw backend_error("embed_text returned " + std::to_string(rows.size()) + " vectors for " +
                          std::to_string(texts.size()) + " texts");
    int dim = rows.empty() ? 0 : static_cast<int>(rows.front().size());
    Matrix m(static_cast<int>(rows.size()), dim);
    for (size_t r = 0; r < rows.size(); ++r) {
      if (static_cast<int>(rows[r].size()) != dim)
        throw backend_error("embed_text returned rows of differing dimension");
      for (int c = 0; c < dim; ++c) m(static_cast<int>(r), c) = rows[r][static_cast<size_t>(c)];
    }
    normalize_rows(m, "embed_text response");
    return m;
  }

private:
  nlohmann::json call(nlohmann::json req) {
    std::unique_ptr<detail::ChildProcess> child = acquire();
    uint64_t id = next_id_.fetch_add(1);
    req["id"] = id;
    std::string line;
    try {
      line = child->round_trip(req.dump(), timeout_s_);
    } catch (...) {
      // A failed child is dropped, not returned to the pool.
      std::lock_guard<std::mutex> lock(mu_);
      ++lost_;
      cv_.notify_one();
      throw;
    }
    release(std::move(child));
    nlohmann::json resp = nlohmann::json::parse(line, nullptr, false);
    if (resp.is_discarded())
      throw backend_error("backend subprocess sent malformed JSON: " + line.substr(0, 200));
    if (!resp.contains("id") || resp["id"].get<uint64_t>() != id)
      throw backend_error("backend subprocess response id mismatch");
    if (resp.contains("error"))
      throw backend_error("backend reported: " + resp["error"].get<std::string>());
    return resp;
  }

  std::unique_ptr<detail::ChildProcess> acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    while (idle_.empty()) {
      if (lost_ > 0) {
        // Replace a crashed child so the pool keeps its size.
        --lost_;
        lock.unlock();
        return std::make_unique<detail::ChildProcess>(command_);
      }
      cv_.wait(lock);
    }
    auto child = std::move(idle_.back());
    idle_.pop_back();
    return child;
  }

  void release(std::unique_ptr<detail::ChildProcess> child) {
    std::lock_guard<std::mutex> lock(mu_);
    idle_.push_back(std::move(child));
    cv_.notify_one();
  }

  std::string command_;
  double timeout_s_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::unique_ptr<detail::ChildProcess>> idle_;
  int lost_ = 0;
  std::atomic<uint64_t> next_id_{1};
};

} // namespace ovlift
