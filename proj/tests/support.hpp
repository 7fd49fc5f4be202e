#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "met/kb.hpp"
#include "met/rng.hpp"
#include "met/vector_store.hpp"

namespace testing_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

struct EntitySpec {
    std::string id;
    std::vector<std::string> glosses;
    std::vector<std::vector<float>> images;  ///< ids become "<id>_i<k>"
};

met::KnowledgeBase make_kb(const std::vector<EntitySpec>& entities);

/// n Gaussian vectors normalized to unit length, ids "v00000"...
met::VectorStore random_unit_store(std::size_t n, std::size_t dim, std::uint64_t seed);
std::vector<float> random_unit(std::size_t dim, met::Rng& rng);

std::string slurp(const std::filesystem::path& p);

/// Unix-socket server speaking newline-delimited JSON. Each received line is
/// parsed and passed to the handler; its result is written back as one
/// compact line. Runs on a background thread until destroyed.
class FakeScorer {
  public:
    using Handler = std::function<nlohmann::json(const nlohmann::json&)>;

    FakeScorer(std::filesystem::path socket_path, Handler handler);
    ~FakeScorer();

    std::size_t requests() const { return requests_.load(); }
    std::vector<std::string> lines() const;
    std::string endpoint() const { return "unix:" + path_.string(); }

  private:
    void serve();

    std::filesystem::path path_;
    Handler handler_;
    int listen_fd_ = -1;
    std::atomic<bool> stop_{false};
    std::atomic<std::size_t> requests_{0};
    mutable std::mutex mu_;
    std::vector<std::string> lines_;
    std::thread thread_;
};

/// Handler that answers hello and scores every item with a constant.
FakeScorer::Handler constant_scorer(double value);

}  // namespace testing_support
