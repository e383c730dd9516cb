#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "seqal/learner.hpp"

namespace seqal::service {

using nlohmann::json;

/// An error with its HTTP status. The response body is {code, message, field?}.
class ApiError : public std::runtime_error {
public:
    ApiError(int status, std::string code, const std::string& message, std::optional<std::string> field = {})
        : std::runtime_error(message), status_(status), code_(std::move(code)), field_(std::move(field)) {}

    int status() const noexcept { return status_; }
    const std::string& code() const noexcept { return code_; }
    const std::optional<std::string>& field() const noexcept { return field_; }
    json body() const;

private:
    int status_;
    std::string code_;
    std::optional<std::string> field_;
};

/// Learner configuration from the "config" object of a create request.
/// Unknown keys and out-of-range values raise a 400 naming the field.
LearnerConfig parse_learner_config(const json& j, std::size_t p);
json learner_config_json(const LearnerConfig& cfg);

struct StoreOptions {
    std::filesystem::path root;             ///< one <id>.jsonl event log per session
    std::filesystem::path data_dir;         ///< base for relative dataset paths
    std::optional<json> default_source;     ///< used when a create request names no feature source
};

/// All sessions plus their append-only event logs. State is rebuilt from the
/// logs on construction. Each session serialises its own mutations; distinct
/// sessions proceed independently.
class SessionStore {
public:
    explicit SessionStore(StoreOptions options);
    ~SessionStore();

    /// Returns the new session id.
    std::string create(const json& request);
    json query(const std::string& id);
    json label(const std::string& id, const json& body);
    json state(const std::string& id);

    std::size_t size() const;
    json health() const;

private:
    struct Session;
    std::shared_ptr<Session> find(const std::string& id) const;
    std::shared_ptr<Session> replay(const std::filesystem::path& log);

    StoreOptions options_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// HTTP front end over a SessionStore.
class Server {
public:
    explicit Server(SessionStore& store);
    ~Server();

    /// Binds without serving. Returns false when the address is unavailable.
    bool bind(const std::string& host, int port);
    /// Binds an ephemeral port and returns it, or -1.
    int bind_any(const std::string& host);
    /// Blocks until stop().
    void listen();
    /// Blocks until listen() is accepting connections.
    void wait_until_ready() const;
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace seqal::service
