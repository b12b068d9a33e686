#pragma once

// Live elicitation backend: batch plans, annotator sessions, submission
// validation, an append-only JSONL store, and dataset export. Transport is
// kept separate; `handle_request` maps plain requests onto the service and
// http_server.hpp binds it to sockets.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "softlabel/ingest.hpp"
#include "softlabel/labelcore.hpp"

namespace softlabel {

struct BatchPlan {
  std::string batch_id;
  std::vector<std::string> image_ids;
  std::size_t low_entropy_count = 3;

  void validate() const;
};

nlohmann::json to_json(const std::vector<BatchPlan>& plans);
std::vector<BatchPlan> batch_plans_from_json(const nlohmann::json& j);
std::vector<BatchPlan> load_batch_plans(const std::filesystem::path& path);

struct BatchPlanSpec {
  std::size_t batches = 40;
  std::size_t batch_size = 25;
  std::size_t low_entropy_per_batch = 3;
  double low_entropy_max = 0.1;
  double high_entropy_min = 0.25;
  std::uint64_t seed = 0;
};

/// Deals images into batches mixing `low_entropy_per_batch` near-certain
/// images with ambiguous ones. Entropies are in nats; images between the
/// two thresholds are never used. Throws std::invalid_argument when either
/// pool runs short.
std::vector<BatchPlan> plan_batches(const std::map<std::string, double>& entropies,
                                    const BatchPlanSpec& spec);

enum class SessionState { Active, Submitted, Expired };

std::string to_string(SessionState state);

using Timestamp = std::chrono::system_clock::time_point;
using Clock = std::function<Timestamp()>;

inline constexpr std::size_t kRepeatCount = 2;
/// Repeats are drawn from the first 20 slots and shown within the last 7.
inline constexpr std::size_t kRepeatSourceSlots = 20;
inline constexpr std::size_t kRepeatTailSlots = 7;

struct Session {
  std::string session_id;
  std::string annotator_id;
  std::string batch_id;
  std::vector<std::string> presented_order;
  /// (original slot, repeat slot) pairs.
  std::vector<std::pair<std::size_t, std::size_t>> repeats;
  std::vector<std::string> label_order;
  SessionState state = SessionState::Active;
  Timestamp created_at;
  std::optional<Timestamp> submitted_at;

  bool is_repeat_slot(std::size_t slot) const;
};

/// What an annotator's client receives; repeat positions are not revealed.
nlohmann::json session_to_client_json(const Session& session, const std::string& instructions,
                                      std::chrono::seconds ttl);

std::string default_instructions();

struct ServiceConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path image_dir = "images";
  std::chrono::seconds session_ttl{60 * 60};
  std::uint64_t seed = 0;
  /// Sessions allowed per batch; unlimited when absent.
  std::optional<std::size_t> sessions_per_batch;
  std::string instructions = default_instructions();
  Clock clock = [] { return std::chrono::system_clock::now(); };
};

class ServiceError : public std::runtime_error {
public:
  enum class Kind { NotFound, Expired, Malformed, Conflict, Unavailable };

  ServiceError(Kind kind, const std::string& message, std::string field = {})
      : std::runtime_error(message), kind_(kind), field_(std::move(field)) {}
  Kind kind() const noexcept { return kind_; }
  const std::string& field() const noexcept { return field_; }

private:
  Kind kind_;
  std::string field_;
};

std::string to_string(ServiceError::Kind kind);

struct RecordFlag {
  std::size_t slot = 0;
  QcRule rule = QcRule::Range;
};

struct SubmitAck {
  std::string session_id;
  std::size_t stored = 0;
  std::vector<RecordFlag> flags;
};

nlohmann::json to_json(const SubmitAck& ack, const LabelSpace& space);

/// Thread-safe. Store layout under data_dir: `annotations.jsonl` holds one
/// canonical session object per line; `index.jsonl` holds one entry per
/// stored line with its byte offset, session id and QC flags.
class ElicitationService {
public:
  ElicitationService(LabelSpace space, std::vector<BatchPlan> plans, ServiceConfig config);
  ~ElicitationService();
  ElicitationService(const ElicitationService&) = delete;
  ElicitationService& operator=(const ElicitationService&) = delete;

  /// Assigns the least-assigned batch (lowest index on ties).
  Session create_session(const std::string& annotator_id);

  /// Payload: `{"responses": [...], "client_metadata": {...}}` with one
  /// response per presented slot, in order. Rule violations are flagged
  /// and stored; structural problems are rejected.
  SubmitAck submit(const std::string& session_id, const nlohmann::json& payload);

  std::optional<Session> session(const std::string& session_id) const;

  /// Canonical JSONL, one line per stored session, in submission order.
  std::string export_dataset(const std::optional<std::string>& batch_id = std::nullopt) const;

  std::vector<std::size_t> assignment_counts() const;
  const std::vector<BatchPlan>& plans() const noexcept { return plans_; }
  const LabelSpace& space() const noexcept { return space_; }
  const ServiceConfig& config() const noexcept { return config_; }

  std::filesystem::path store_path() const;
  std::filesystem::path index_path() const;

private:
  void expire_if_stale(Session& s) const;
  void append_locked(const std::string& line, const nlohmann::json& index_entry);

  LabelSpace space_;
  std::vector<BatchPlan> plans_;
  ServiceConfig config_;

  mutable std::mutex sessions_mutex_;
  std::map<std::string, Session> sessions_;
  std::vector<std::size_t> assigned_;
  std::uint64_t created_ = 0;

  mutable std::mutex writer_mutex_;
  std::uint64_t committed_bytes_ = 0;
};

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Routes:
///   GET  /api/session?annotator_id=
///   POST /api/session/{id}/annotations
///   GET  /api/export[?batch_id=]
///   GET  /images/{image_id}
ApiResponse handle_request(ElicitationService& service, const ApiRequest& request);

}  // namespace softlabel
