#pragma once

// Client for an external GoT provider (e.g. a prompted LLM service).
//
// Wire protocol, one exchange per question:
//   POST <endpoint>   {"question": "...", "schema_version": 1}
//   200               {"got": <GoT object or GoT structured text>}
//                  or {"error": "..."}
// Provider output is re-validated and normalized locally before use.

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

#include <httplib.h>
#include <json.hpp>

#include "gotcqa/error.hpp"
#include "gotcqa/got.hpp"
#include "gotcqa/question_parser.hpp"

namespace gotcqa {

inline constexpr int kProviderSchemaVersion = 1;

struct ProviderEndpoint {
  std::string url;  // http://host[:port][/path]
  std::chrono::milliseconds timeout{5000};
};

struct ProviderRequest {
  std::string question;
  int schema_version = kProviderSchemaVersion;

  nlohmann::json to_json() const { return {{"question", question}, {"schema_version", schema_version}}; }
};

namespace detail {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos || url.substr(0, scheme_end) != "http")
    fail(Errc::ProviderUnreachable, "unsupported provider endpoint '" + url + "' (expected http://...)");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace detail

/// Decodes a provider response body into a validated, normalized GoT.
inline Got decode_provider_response(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    fail(Errc::ProviderSchemaError, std::string("response is not structured text: ") + e.what());
  }
  if (!j.is_object()) fail(Errc::ProviderSchemaError, "response must be an object");
  if (j.contains("error")) fail(Errc::ProviderSchemaError, "provider reported: " + j["error"].dump());
  if (!j.contains("got")) fail(Errc::ProviderSchemaError, "response lacks a 'got' field");
  Got got;
  try {
    got = j["got"].is_string() ? deserialize(j["got"].get<std::string>()) : got_from_json(j["got"]);
  } catch (const Error& e) {
    fail(Errc::ProviderSchemaError, e.what());
  }
  auto report = validate(got);
  if (!report.ok()) fail(Errc::ProviderGraphInvalid, report.violations.front().code + ": " + report.violations.front().message);
  return normalize(got);
}

inline Got request_got(std::string_view question, const ProviderEndpoint& endpoint) {
  const auto url = detail::split_url(endpoint.url);
  httplib::Client client(url.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  const ProviderRequest request{std::string(question)};
  auto res = client.Post(url.path, request.to_json().dump(), "application/json");
  if (!res) fail(Errc::ProviderUnreachable, endpoint.url + ": " + httplib::to_string(res.error()));
  if (res->status != 200)
    fail(Errc::ProviderSchemaError, "provider answered HTTP " + std::to_string(res->status));
  return decode_provider_response(res->body);
}

enum class GotSource { Template, Provider };

constexpr std::string_view to_string(GotSource s) { return s == GotSource::Template ? "template" : "provider"; }

struct SourcedGot {
  Got got;
  GotSource source = GotSource::Template;
  std::string rule_id;  // empty for provider output
};

/// Templates first; the provider only on NoTemplateMatch and only when an
/// endpoint is configured.
inline SourcedGot parse_with_fallback(std::string_view question, const RuleSet& rules,
                                      const std::optional<ProviderEndpoint>& endpoint = std::nullopt) {
  try {
    auto parsed = parse_question(question, rules);
    return {std::move(parsed.got), GotSource::Template, std::move(parsed.rule_id)};
  } catch (const Error& e) {
    if (e.code() != Errc::NoTemplateMatch) throw;
    if (!endpoint) fail(Errc::Unparseable, "no template matches and no provider is configured");
    try {
      return {request_got(question, *endpoint), GotSource::Provider, {}};
    } catch (const Error& pe) {
      fail(Errc::Unparseable, std::string("no template matches; provider failed: ") + pe.what());
    }
  }
}

}  // namespace gotcqa
