#pragma once

// HTTP transport for RemoteAgent. Kept in its own header so only the CLI
// translation unit pays for compiling the bundled HTTP client.

#include <string>
#include <utility>

#include <httplib.h>

#include "aeval/errors.hpp"
#include "aeval/remote_agent.hpp"

namespace aeval::remote {

/// Splits "http://host[:port][/path]" into base ("http://host[:port]") and
/// path ("/path" or "/"). Only plain http is supported.
inline std::pair<std::string, std::string> split_endpoint(
    const std::string& endpoint) {
  const std::string scheme = "http://";
  if (endpoint.rfind(scheme, 0) != 0) {
    throw TransportError("endpoint must start with http://: " + endpoint);
  }
  std::size_t path_at = endpoint.find('/', scheme.size());
  if (path_at == std::string::npos) {
    return {endpoint, "/"};
  }
  return {endpoint.substr(0, path_at), endpoint.substr(path_at)};
}

/// Builds a Transport that POSTs JSON to the endpoint. A non-empty api_key
/// is sent as a bearer token. Any connectivity problem, non-200 status, or
/// unparseable body surfaces as TransportError (which RemoteAgent retries).
inline Transport make_http_transport(const std::string& endpoint,
                                     const std::string& api_key,
                                     int timeout_seconds = 120) {
  auto [base, path] = split_endpoint(endpoint);
  return [base, path, api_key, timeout_seconds](const io::json& request) {
    httplib::Client client(base);
    client.set_connection_timeout(timeout_seconds);
    client.set_read_timeout(timeout_seconds);
    httplib::Headers headers;
    if (!api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + api_key);
    }
    auto result =
        client.Post(path, headers, request.dump(), "application/json");
    if (!result) {
      throw TransportError("POST " + base + path + " failed: " +
                           httplib::to_string(result.error()));
    }
    if (result->status != 200) {
      throw TransportError("POST " + base + path + " returned status " +
                           std::to_string(result->status) + ": " +
                           result->body);
    }
    try {
      return io::json::parse(result->body);
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("response body is not JSON: ") +
                           e.what());
    }
  };
}

}  // namespace aeval::remote
