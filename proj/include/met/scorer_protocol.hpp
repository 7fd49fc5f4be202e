#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "met/matchers.hpp"

namespace met {

// Remote scorer protocol, version 1. Newline-delimited JSON over a Unix
// domain stream socket; one compact object per line, keys in byte order.
// docs/scorer_protocol.md is the normative description.
inline constexpr int kProtocolVersion = 1;

/// Environment variable that overrides the configured endpoint.
inline constexpr const char* kEndpointEnv = "MET_SCORER_ENDPOINT";

struct Handshake {
    std::vector<std::string> kinds;
    std::map<std::string, std::int64_t> dims;
};

nlohmann::json encode_hello();
nlohmann::json encode_score_request(MatcherKind kind, std::span<const MatchItem> items);
Handshake decode_hello(const nlohmann::json& response);
/// Raw scores aligned with the request; JSON null decodes to nullopt.
/// Throws ProviderError on an error record, a version mismatch, or a count
/// that differs from `expected`.
std::vector<std::optional<double>> decode_score_response(const nlohmann::json& response, std::size_t expected);

/// Blocking client. Requests written by score_pipelined() are all sent before
/// any response is read; responses are matched to requests by order.
class ScorerClient {
  public:
    /// Accepts "unix:/path/to/socket" or a bare path.
    explicit ScorerClient(std::string endpoint);
    ~ScorerClient();
    ScorerClient(const ScorerClient&) = delete;
    ScorerClient& operator=(const ScorerClient&) = delete;

    Handshake handshake();
    std::vector<std::optional<double>> score(MatcherKind kind, std::span<const MatchItem> items);
    std::vector<std::vector<std::optional<double>>> score_pipelined(
        std::span<const std::pair<MatcherKind, std::vector<MatchItem>>> requests);

    std::size_t requests_sent() const noexcept { return requests_; }
    const std::string& endpoint() const noexcept { return endpoint_; }

  private:
    void connect_if_needed();
    void send_line(const std::string& line);
    std::string read_line();

    std::string endpoint_;
    int fd_ = -1;
    std::string buffer_;
    std::size_t requests_ = 0;
};

/// `configured`, unless the endpoint environment variable is set.
std::string resolve_endpoint(const std::string& configured);

/// KindScorer forwarding each batch as one protocol request.
class RemoteKindScorer final : public KindScorer {
  public:
    RemoteKindScorer(std::shared_ptr<ScorerClient> client, MatcherKind kind)
        : client_(std::move(client)), kind_(kind)
    {}
    std::vector<std::optional<double>> score(std::span<const MatchItem> items) override;
    bool concurrent() const override { return false; }

  private:
    std::shared_ptr<ScorerClient> client_;
    MatcherKind kind_;
};

}  // namespace met
