#include "met/scorer_protocol.hpp"

#include <cerrno>
#include <cstdlib>
#include <cstring>

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include "met/error.hpp"

namespace met {

using json = nlohmann::json;

json encode_hello() { return {{"op", "hello"}, {"version", kProtocolVersion}}; }

json encode_score_request(MatcherKind kind, std::span<const MatchItem> items)
{
    auto arr = json::array();
    for (const auto& it : items) {
        json item = json::object();
        switch (kind) {
        case MatcherKind::tbm:
        case MatcherKind::tcm:
            item["query_text"] = std::string(it.left_text);
            item["evidence_text"] = std::string(it.right_text);
            break;
        case MatcherKind::ibm:
            item["query_image_id"] = std::string(it.left_image_id);
            item["evidence_image_id"] = std::string(it.right_image_id);
            break;
        case MatcherKind::clip:
            item["text"] = std::string(it.left_text);
            item["image_id"] = std::string(it.right_image_id);
            break;
        }
        arr.push_back(std::move(item));
    }
    return {{"op", "score"}, {"version", kProtocolVersion}, {"kind", to_string(kind)}, {"items", std::move(arr)}};
}

namespace {

void check_envelope(const json& r, const char* op)
{
    if (!r.is_object()) {
        throw ProviderError("scorer response is not an object");
    }
    if (r.value("op", "") == "error") {
        throw ProviderError("scorer error: " + r.value("error", std::string("unspecified")));
    }
    if (r.value("version", -1) != kProtocolVersion) {
        throw ProviderError("scorer protocol version mismatch");
    }
    if (r.value("op", "") != op) {
        throw ProviderError(std::string("expected \"") + op + "\" response");
    }
}

}  // namespace

Handshake decode_hello(const json& r)
{
    check_envelope(r, "hello");
    Handshake h;
    try {
        h.kinds = r.at("kinds").get<std::vector<std::string>>();
        if (r.contains("dims")) {
            h.dims = r.at("dims").get<std::map<std::string, std::int64_t>>();
        }
    } catch (const json::exception& e) {
        throw ProviderError(std::string("malformed hello response: ") + e.what());
    }
    return h;
}

std::vector<std::optional<double>> decode_score_response(const json& r, std::size_t expected)
{
    check_envelope(r, "score");
    const auto it = r.find("scores");
    if (it == r.end() || !it->is_array()) {
        throw ProviderError("score response without a scores array");
    }
    if (it->size() != expected) {
        throw ProviderError("score response has " + std::to_string(it->size()) + " scores, expected "
                            + std::to_string(expected));
    }
    std::vector<std::optional<double>> out;
    out.reserve(expected);
    for (const auto& s : *it) {
        if (s.is_null()) {
            out.emplace_back(std::nullopt);
        } else if (s.is_number()) {
            out.emplace_back(s.get<double>());
        } else {
            throw ProviderError("non-numeric score in response");
        }
    }
    return out;
}

std::string resolve_endpoint(const std::string& configured)
{
    if (const char* env = std::getenv(kEndpointEnv); env && *env) {
        return env;
    }
    return configured;
}

ScorerClient::ScorerClient(std::string endpoint) : endpoint_(std::move(endpoint)) {}

ScorerClient::~ScorerClient()
{
    if (fd_ >= 0) {
        ::close(fd_);
    }
}

void ScorerClient::connect_if_needed()
{
    if (fd_ >= 0) {
        return;
    }
    std::string path = endpoint_;
    if (path.rfind("unix:", 0) == 0) {
        path = path.substr(5);
    }
    sockaddr_un addr{};
    if (path.empty() || path.size() >= sizeof(addr.sun_path)) {
        throw ProviderError("invalid scorer endpoint: \"" + endpoint_ + "\"");
    }
    addr.sun_family = AF_UNIX;
    std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
    int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd < 0) {
        throw ProviderError(std::string("socket: ") + std::strerror(errno));
    }
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
        const int err = errno;
        ::close(fd);
        throw ProviderError("cannot reach scorer at " + endpoint_ + ": " + std::strerror(err));
    }
    fd_ = fd;
}

void ScorerClient::send_line(const std::string& line)
{
    connect_if_needed();
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
        auto n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw ProviderError(std::string("scorer send failed: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(n);
    }
}

std::string ScorerClient::read_line()
{
    for (;;) {
        auto pos = buffer_.find('\n');
        if (pos != std::string::npos) {
            std::string line = buffer_.substr(0, pos);
            buffer_.erase(0, pos + 1);
            return line;
        }
        char chunk[4096];
        auto n = ::recv(fd_, chunk, sizeof chunk, 0);
        if (n < 0 && errno == EINTR) {
            continue;
        }
        if (n <= 0) {
            throw ProviderError("scorer connection closed before a full response");
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

namespace {

json parse_response(const std::string& line)
{
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        throw ProviderError(std::string("unparseable scorer response: ") + e.what());
    }
}

}  // namespace

Handshake ScorerClient::handshake()
{
    send_line(encode_hello().dump());
    ++requests_;
    return decode_hello(parse_response(read_line()));
}

std::vector<std::optional<double>> ScorerClient::score(MatcherKind kind, std::span<const MatchItem> items)
{
    send_line(encode_score_request(kind, items).dump());
    ++requests_;
    return decode_score_response(parse_response(read_line()), items.size());
}

std::vector<std::vector<std::optional<double>>> ScorerClient::score_pipelined(
    std::span<const std::pair<MatcherKind, std::vector<MatchItem>>> requests)
{
    for (const auto& [kind, items] : requests) {
        send_line(encode_score_request(kind, items).dump());
        ++requests_;
    }
    std::vector<std::vector<std::optional<double>>> out;
    out.reserve(requests.size());
    for (const auto& [kind, items] : requests) {
        out.push_back(decode_score_response(parse_response(read_line()), items.size()));
    }
    return out;
}

std::vector<std::optional<double>> RemoteKindScorer::score(std::span<const MatchItem> items)
{
    return client_->score(kind_, items);
}

}  // namespace met
