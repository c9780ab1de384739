#ifndef HYDROLAB_WIRE_HPP_
#define HYDROLAB_WIRE_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "hydrolab/runtime.hpp"

namespace hydrolab {

inline constexpr int kProtocolVersion = 1;

/// Client request: {"cmd": "<name>", "args": {...}, "id": <int>}. `at_step`
/// optionally defers the command to a later step boundary.
struct Request {
  std::optional<std::int64_t> id;
  Command command;
  std::optional<std::uint64_t> at_step;
};

/// Throws ValidationError naming the offending field. Unknown commands and
/// unknown argument keys are rejected.
Command command_from_json(std::string_view name, const nlohmann::json& args);
nlohmann::json command_args(const Command& command);

/// Parses one message. On failure throws ValidationError; `id_out` receives
/// the request id whenever it could be read, so the error can be correlated.
Request parse_request(std::string_view text, std::optional<std::int64_t>* id_out = nullptr);
std::string request_frame(const Request& request);

nlohmann::json to_json(const Snapshot& snapshot);
Snapshot snapshot_from_json(const nlohmann::json& j);

/// Server frames, one JSON object per line / per WebSocket text message.
std::string hello_frame(const nlohmann::json& hello);
std::string ack_frame(std::optional<std::int64_t> id, std::uint64_t applied_at_step,
                      const nlohmann::json& detail = nullptr);
std::string error_frame(std::optional<std::int64_t> id, std::string_view message);
std::string snapshot_frame(const Snapshot& snapshot);

/// JSON encoding of a speed multiplier; +infinity is the string "inf".
nlohmann::json speed_to_json(double speed);
double speed_from_json(const nlohmann::json& j);

}  // namespace hydrolab

#endif  // HYDROLAB_WIRE_HPP_
