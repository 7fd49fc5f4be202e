#include "support.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

namespace testing_support {

namespace fs = std::filesystem;

TempDir::TempDir()
{
    std::string tmpl = (fs::temp_directory_path() / "met-test-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) {
        throw std::runtime_error("mkdtemp failed");
    }
    path_ = tmpl;
}

TempDir::~TempDir()
{
    std::error_code ec;
    fs::remove_all(path_, ec);
}

met::KnowledgeBase make_kb(const std::vector<EntitySpec>& entities)
{
    std::uint32_t dim = 0;
    for (const auto& e : entities) {
        if (!e.images.empty()) {
            dim = static_cast<std::uint32_t>(e.images.front().size());
            break;
        }
    }
    met::VectorStore store(dim);
    std::vector<met::Entity> out;
    for (const auto& e : entities) {
        met::Entity ent{met::EntityId(e.id), e.glosses, {}};
        for (std::size_t k = 0; k < e.images.size(); ++k) {
            met::ImageId id(e.id + "_i" + std::to_string(k));
            store.add(id, e.images[k]);
            ent.image_ids.push_back(id);
        }
        out.push_back(std::move(ent));
    }
    store.seal();
    return met::KnowledgeBase(std::move(out), std::move(store));
}

std::vector<float> random_unit(std::size_t dim, met::Rng& rng)
{
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(dim);
    double sq = 0.0;
    for (auto& x : v) {
        x = g(rng);
        sq += x * x;
    }
    std::vector<float> out(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        out[i] = static_cast<float>(v[i] / std::sqrt(sq));
    }
    return out;
}

met::VectorStore random_unit_store(std::size_t n, std::size_t dim, std::uint64_t seed)
{
    met::Rng rng(seed);
    met::VectorStore s(static_cast<std::uint32_t>(dim));
    char buf[32];
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof buf, "v%05zu", i);
        s.add(met::ImageId(buf), random_unit(dim, rng));
    }
    s.seal();
    return s;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

FakeScorer::FakeScorer(fs::path socket_path, Handler handler) : path_(std::move(socket_path)), handler_(std::move(handler))
{
    listen_fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    std::strncpy(addr.sun_path, path_.c_str(), sizeof(addr.sun_path) - 1);
    ::unlink(path_.c_str());
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 4) != 0) {
        throw std::runtime_error("fake scorer: cannot listen on " + path_.string());
    }
    thread_ = std::thread([this] { serve(); });
}

FakeScorer::~FakeScorer()
{
    stop_ = true;
    thread_.join();
    ::close(listen_fd_);
    ::unlink(path_.c_str());
}

std::vector<std::string> FakeScorer::lines() const
{
    std::lock_guard lock(mu_);
    return lines_;
}

void FakeScorer::serve()
{
    while (!stop_) {
        pollfd p{listen_fd_, POLLIN, 0};
        if (::poll(&p, 1, 20) <= 0) {
            continue;
        }
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            continue;
        }
        std::string buf;
        bool open = true;
        while (open && !stop_) {
            pollfd c{fd, POLLIN, 0};
            if (::poll(&c, 1, 20) <= 0) {
                continue;
            }
            char chunk[4096];
            const auto n = ::recv(fd, chunk, sizeof chunk, 0);
            if (n <= 0) {
                break;
            }
            buf.append(chunk, static_cast<std::size_t>(n));
            std::size_t pos;
            while ((pos = buf.find('\n')) != std::string::npos) {
                const std::string line = buf.substr(0, pos);
                buf.erase(0, pos + 1);
                {
                    std::lock_guard lock(mu_);
                    lines_.push_back(line);
                }
                ++requests_;
                nlohmann::json reply;
                try {
                    reply = handler_(nlohmann::json::parse(line));
                } catch (const std::exception& e) {
                    reply = {{"op", "error"}, {"error", e.what()}, {"version", 1}};
                }
                if (reply.is_null()) {
                    open = false;
                    break;
                }
                const std::string out = reply.dump() + "\n";
                if (::send(fd, out.data(), out.size(), MSG_NOSIGNAL) < 0) {
                    open = false;
                }
            }
        }
        ::close(fd);
    }
}

FakeScorer::Handler constant_scorer(double value)
{
    return [value](const nlohmann::json& req) -> nlohmann::json {
        if (req.at("op") == "hello") {
            return {{"op", "hello"},
                    {"version", 1},
                    {"kinds", {"CLIP", "IBM", "TBM", "TCM"}},
                    {"dims", {{"CLIP", 16}, {"IBM", 64}, {"TBM", 256}}}};
        }
        std::vector<double> scores(req.at("items").size(), value);
        return {{"op", "score"}, {"version", 1}, {"scores", scores}};
    };
}

}  // namespace testing_support
