#include "softlabel/service.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "softlabel/rng.hpp"

namespace softlabel {

using nlohmann::json;

void BatchPlan::validate() const {
  if (batch_id.empty()) throw std::invalid_argument("batch plan without an id");
  if (image_ids.size() < kRepeatCount)
    throw std::invalid_argument("batch '" + batch_id + "' needs at least two images");
  std::set<std::string> seen(image_ids.begin(), image_ids.end());
  if (seen.size() != image_ids.size())
    throw std::invalid_argument("batch '" + batch_id + "' lists an image twice");
  if (low_entropy_count > image_ids.size())
    throw std::invalid_argument("batch '" + batch_id + "' low-entropy count exceeds its size");
}

json to_json(const std::vector<BatchPlan>& plans) {
  json out = json::array();
  for (const auto& p : plans)
    out.push_back({{"batch_id", p.batch_id},
                   {"image_ids", p.image_ids},
                   {"low_entropy_count", p.low_entropy_count}});
  return out;
}

std::vector<BatchPlan> batch_plans_from_json(const json& j) {
  if (!j.is_array()) throw SchemaError("<root>", "batch plan file must hold an array");
  std::vector<BatchPlan> plans;
  std::set<std::string> ids;
  for (const auto& item : j) {
    BatchPlan p;
    try {
      p.batch_id = item.at("batch_id").get<std::string>();
      p.image_ids = item.at("image_ids").get<std::vector<std::string>>();
      p.low_entropy_count = item.value("low_entropy_count", std::size_t{0});
    } catch (const json::exception& e) {
      throw SchemaError("batch_plan", e.what());
    }
    try {
      p.validate();
    } catch (const std::invalid_argument& e) {
      throw SchemaError("batch_plan", e.what());
    }
    if (!ids.insert(p.batch_id).second)
      throw SchemaError("batch_id", "duplicate batch '" + p.batch_id + "'");
    plans.push_back(std::move(p));
  }
  return plans;
}

std::vector<BatchPlan> load_batch_plans(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open batch plan '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw SchemaError("<root>", e.what());
  }
  return batch_plans_from_json(j);
}

std::vector<BatchPlan> plan_batches(const std::map<std::string, double>& entropies,
                                    const BatchPlanSpec& spec) {
  if (spec.batch_size < kRepeatCount || spec.low_entropy_per_batch > spec.batch_size)
    throw std::invalid_argument("inconsistent batch sizes");
  std::vector<std::string> low, high;
  for (const auto& [id, h] : entropies) {
    if (h <= spec.low_entropy_max)
      low.push_back(id);
    else if (h >= spec.high_entropy_min)
      high.push_back(id);
  }
  const std::size_t need_low = spec.batches * spec.low_entropy_per_batch;
  const std::size_t need_high = spec.batches * (spec.batch_size - spec.low_entropy_per_batch);
  if (low.size() < need_low)
    throw std::invalid_argument("need " + std::to_string(need_low) + " low-entropy images, have " +
                                std::to_string(low.size()));
  if (high.size() < need_high)
    throw std::invalid_argument("need " + std::to_string(need_high) +
                                " high-entropy images, have " + std::to_string(high.size()));
  std::mt19937_64 rng(derive_seed(spec.seed, {30}));
  std::shuffle(low.begin(), low.end(), rng);
  std::shuffle(high.begin(), high.end(), rng);

  std::vector<BatchPlan> plans;
  auto next_low = low.begin();
  auto next_high = high.begin();
  const int width = static_cast<int>(std::to_string(spec.batches).size());
  for (std::size_t b = 0; b < spec.batches; ++b) {
    std::ostringstream id;
    id << "batch_" << std::setw(width) << std::setfill('0') << b;
    BatchPlan p{id.str(), {}, spec.low_entropy_per_batch};
    p.image_ids.insert(p.image_ids.end(), next_low, next_low + spec.low_entropy_per_batch);
    next_low += spec.low_entropy_per_batch;
    const std::size_t h = spec.batch_size - spec.low_entropy_per_batch;
    p.image_ids.insert(p.image_ids.end(), next_high, next_high + h);
    next_high += h;
    plans.push_back(std::move(p));
  }
  return plans;
}

std::string to_string(SessionState state) {
  switch (state) {
    case SessionState::Active:
      return "active";
    case SessionState::Submitted:
      return "submitted";
    case SessionState::Expired:
      return "expired";
  }
  return "active";
}

std::string to_string(ServiceError::Kind kind) {
  switch (kind) {
    case ServiceError::Kind::NotFound:
      return "not_found";
    case ServiceError::Kind::Expired:
      return "expired";
    case ServiceError::Kind::Malformed:
      return "malformed";
    case ServiceError::Kind::Conflict:
      return "conflict";
    case ServiceError::Kind::Unavailable:
      return "unavailable";
  }
  return "malformed";
}

bool Session::is_repeat_slot(std::size_t slot) const {
  return std::any_of(repeats.begin(), repeats.end(),
                     [&](const auto& r) { return r.second == slot; });
}

namespace {

std::int64_t epoch_seconds(Timestamp t) {
  return std::chrono::duration_cast<std::chrono::seconds>(t.time_since_epoch()).count();
}

}  // namespace

json session_to_client_json(const Session& s, const std::string& instructions,
                            std::chrono::seconds ttl) {
  json slots = json::array();
  for (std::size_t i = 0; i < s.presented_order.size(); ++i)
    slots.push_back({{"slot", i},
                     {"image_id", s.presented_order[i]},
                     {"image_url", "/images/" + s.presented_order[i]}});
  json j{{"session_id", s.session_id},
         {"annotator_id", s.annotator_id},
         {"batch_id", s.batch_id},
         {"presented", std::move(slots)},
         {"label_order", s.label_order},
         {"instructions", instructions},
         {"state", to_string(s.state)},
         {"created_at", epoch_seconds(s.created_at)},
         {"expires_at", epoch_seconds(s.created_at + ttl)}};
  if (s.submitted_at) j["submitted_at"] = epoch_seconds(*s.submitted_at);
  return j;
}

std::string default_instructions() {
  return "Suppose this image were shown to 100 crowdsourced workers, each asked to pick "
         "one of the listed classes. Which class would the most workers pick, and how many "
         "of the 100 would pick it? If another class would also draw workers, name the one "
         "with the next-largest share and how many of the 100 would pick it. Finally, tick "
         "every class you are sure none of the workers would pick.";
}

json to_json(const SubmitAck& ack, const LabelSpace&) {
  json flags = json::array();
  for (const auto& f : ack.flags) flags.push_back({{"slot", f.slot}, {"rule", to_string(f.rule)}});
  return {{"session_id", ack.session_id}, {"stored", ack.stored}, {"flags", std::move(flags)}};
}

ElicitationService::ElicitationService(LabelSpace space, std::vector<BatchPlan> plans,
                                       ServiceConfig config)
    : space_(std::move(space)), plans_(std::move(plans)), config_(std::move(config)) {
  std::set<std::string> ids;
  for (const auto& p : plans_) {
    p.validate();
    if (!ids.insert(p.batch_id).second)
      throw std::invalid_argument("duplicate batch '" + p.batch_id + "'");
  }
  if (!config_.clock) throw std::invalid_argument("service clock is unset");
  assigned_.assign(plans_.size(), 0);
  std::filesystem::create_directories(config_.data_dir);
  // A torn final line from an interrupted write is not part of the store.
  if (std::filesystem::exists(store_path())) {
    std::ifstream in(store_path(), std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto last = content.rfind('\n');
    committed_bytes_ = last == std::string::npos ? 0 : last + 1;
  }
}

ElicitationService::~ElicitationService() = default;

std::filesystem::path ElicitationService::store_path() const {
  return config_.data_dir / "annotations.jsonl";
}

std::filesystem::path ElicitationService::index_path() const {
  return config_.data_dir / "index.jsonl";
}

Session ElicitationService::create_session(const std::string& annotator_id) {
  if (annotator_id.empty())
    throw ServiceError(ServiceError::Kind::Malformed, "annotator_id is required", "annotator_id");
  std::lock_guard lock(sessions_mutex_);
  std::optional<std::size_t> pick;
  for (std::size_t b = 0; b < plans_.size(); ++b) {
    if (config_.sessions_per_batch && assigned_[b] >= *config_.sessions_per_batch) continue;
    if (!pick || assigned_[b] < assigned_[*pick]) pick = b;
  }
  if (!pick) throw ServiceError(ServiceError::Kind::Unavailable, "no batches remaining");
  const BatchPlan& plan = plans_[*pick];

  const std::uint64_t n = created_++;
  std::mt19937_64 rng(derive_seed(config_.seed, {40, n}));
  Session s;
  {
    std::ostringstream id;
    id << 's' << std::setw(6) << std::setfill('0') << n << '-' << std::hex << std::setw(8)
       << (derive_seed(config_.seed, {41, n}) & 0xffffffffULL);
    s.session_id = id.str();
  }
  s.annotator_id = annotator_id;
  s.batch_id = plan.batch_id;
  s.created_at = config_.clock();

  std::vector<std::string> images = plan.image_ids;
  std::shuffle(images.begin(), images.end(), rng);
  const std::size_t fresh_tail = std::min(images.size(), kRepeatTailSlots - kRepeatCount);
  const std::size_t head = images.size() - fresh_tail;
  const std::size_t sources = std::max(kRepeatCount, std::min(head, kRepeatSourceSlots));
  std::vector<std::size_t> candidates(sources);
  std::iota(candidates.begin(), candidates.end(), std::size_t{0});
  std::shuffle(candidates.begin(), candidates.end(), rng);
  std::vector<std::size_t> originals(candidates.begin(), candidates.begin() + kRepeatCount);
  std::sort(originals.begin(), originals.end());

  // Tail entries: indices >= 0 name fresh images, -1 - i names repeat i.
  std::vector<long> tail;
  for (std::size_t i = head; i < images.size(); ++i) tail.push_back(static_cast<long>(i));
  for (std::size_t r = 0; r < kRepeatCount; ++r) tail.push_back(-1 - static_cast<long>(r));
  std::shuffle(tail.begin(), tail.end(), rng);

  s.presented_order.assign(images.begin(), images.begin() + static_cast<std::ptrdiff_t>(head));
  for (long t : tail) {
    if (t >= 0) {
      s.presented_order.push_back(images[static_cast<std::size_t>(t)]);
    } else {
      const std::size_t original = originals[static_cast<std::size_t>(-1 - t)];
      s.repeats.emplace_back(original, s.presented_order.size());
      s.presented_order.push_back(images[original]);
    }
  }
  std::sort(s.repeats.begin(), s.repeats.end());

  s.label_order = space_.names();
  std::shuffle(s.label_order.begin(), s.label_order.end(), rng);

  ++assigned_[*pick];
  sessions_.emplace(s.session_id, s);
  return s;
}

void ElicitationService::expire_if_stale(Session& s) const {
  if (s.state == SessionState::Active && config_.clock() - s.created_at > config_.session_ttl)
    s.state = SessionState::Expired;
}

std::optional<Session> ElicitationService::session(const std::string& session_id) const {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return std::nullopt;
  Session s = it->second;
  expire_if_stale(s);
  return s;
}

SubmitAck ElicitationService::submit(const std::string& session_id, const json& payload) {
  Session snapshot;
  {
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end())
      throw ServiceError(ServiceError::Kind::NotFound, "unknown session '" + session_id + "'");
    expire_if_stale(it->second);
    if (it->second.state == SessionState::Expired)
      throw ServiceError(ServiceError::Kind::Expired, "session '" + session_id + "' has expired");
    if (it->second.state == SessionState::Submitted)
      throw ServiceError(ServiceError::Kind::Conflict,
                         "session '" + session_id + "' was already submitted");
    snapshot = it->second;
  }

  RawSubmission sub;
  sub.annotator_id = snapshot.annotator_id;
  sub.batch_id = snapshot.batch_id;
  SubmitAck ack{session_id, 0, {}};
  try {
    if (!payload.is_object())
      throw SchemaError("<root>", "expected a JSON object");
    auto responses = payload.find("responses");
    if (responses == payload.end() || !responses->is_array())
      throw SchemaError("responses", "expected an array");
    if (responses->size() != snapshot.presented_order.size())
      throw SchemaError("responses", "expected " + std::to_string(snapshot.presented_order.size()) +
                                         " responses, got " + std::to_string(responses->size()));
    for (std::size_t i = 0; i < responses->size(); ++i) {
      AnnotationRecord r = record_from_json((*responses)[i], space_, snapshot.annotator_id);
      if (r.image_id != snapshot.presented_order[i])
        throw SchemaError("image_id", "slot " + std::to_string(i) + " expects image '" +
                                          snapshot.presented_order[i] + "'");
      r.is_repeat = snapshot.is_repeat_slot(i);
      for (QcRule rule : record_violations(r)) ack.flags.push_back({i, rule});
      sub.responses.push_back(std::move(r));
    }
    if (auto meta = payload.find("client_metadata"); meta != payload.end() && !meta->is_null()) {
      if (!meta->is_object()) throw SchemaError("client_metadata", "expected an object");
      sub.client_metadata = *meta;
    }
  } catch (const SchemaError& e) {
    throw ServiceError(ServiceError::Kind::Malformed, e.what(), e.field());
  }

  {
    // Claim the session before writing so a concurrent duplicate loses.
    std::lock_guard lock(sessions_mutex_);
    Session& live = sessions_.at(session_id);
    if (live.state != SessionState::Active)
      throw ServiceError(ServiceError::Kind::Conflict,
                         "session '" + session_id + "' was already submitted");
    live.state = SessionState::Submitted;
    live.submitted_at = config_.clock();
  }

  json flags = json::array();
  for (const auto& f : ack.flags) flags.push_back({{"slot", f.slot}, {"rule", to_string(f.rule)}});
  json index_entry{{"session_id", session_id},
                   {"annotator_id", sub.annotator_id},
                   {"batch_id", sub.batch_id},
                   {"responses", sub.responses.size()},
                   {"flags", std::move(flags)}};
  try {
    append_locked(submission_to_json(sub, space_).dump(), std::move(index_entry));
  } catch (...) {
    std::lock_guard lock(sessions_mutex_);
    Session& live = sessions_.at(session_id);
    live.state = SessionState::Active;
    live.submitted_at.reset();
    throw;
  }
  ack.stored = sub.responses.size();
  return ack;
}

void ElicitationService::append_locked(const std::string& line, const json& index_entry) {
  std::lock_guard lock(writer_mutex_);
  {
    std::ofstream out(store_path(), std::ios::binary | std::ios::app);
    const std::string record = line + '\n';
    out.write(record.data(), static_cast<std::streamsize>(record.size()));
    out.flush();
    if (!out) throw std::runtime_error("failed to append to '" + store_path().string() + "'");
  }
  json entry = index_entry;
  entry["offset"] = committed_bytes_;
  entry["length"] = line.size() + 1;
  {
    std::ofstream out(index_path(), std::ios::binary | std::ios::app);
    out << entry.dump() << '\n';
    out.flush();
    if (!out) throw std::runtime_error("failed to append to '" + index_path().string() + "'");
  }
  committed_bytes_ += line.size() + 1;
}

std::string ElicitationService::export_dataset(const std::optional<std::string>& batch_id) const {
  std::uint64_t limit = 0;
  {
    std::lock_guard lock(writer_mutex_);
    limit = committed_bytes_;
  }
  if (limit == 0) return {};
  // Bytes below `limit` are never rewritten, so they can be read unlocked.
  std::ifstream in(store_path(), std::ios::binary);
  std::string content(limit, '\0');
  in.read(content.data(), static_cast<std::streamsize>(limit));
  content.resize(static_cast<std::size_t>(in.gcount()));
  if (!batch_id) return content;

  std::string out;
  std::istringstream lines(content);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_object() && j.value("batch_id", std::string{}) == *batch_id) out += line + '\n';
  }
  return out;
}

std::vector<std::size_t> ElicitationService::assignment_counts() const {
  std::lock_guard lock(sessions_mutex_);
  return assigned_;
}

namespace {

ApiResponse json_response(int status, const json& body) {
  return {status, "application/json", body.dump()};
}

ApiResponse error_response(const ServiceError& e) {
  int status = 400;
  switch (e.kind()) {
    case ServiceError::Kind::NotFound:
      status = 404;
      break;
    case ServiceError::Kind::Expired:
      status = 410;
      break;
    case ServiceError::Kind::Malformed:
      status = 400;
      break;
    case ServiceError::Kind::Conflict:
      status = 409;
      break;
    case ServiceError::Kind::Unavailable:
      status = 503;
      break;
  }
  json body{{"error", to_string(e.kind())}, {"message", e.what()}};
  if (!e.field().empty()) body["field"] = e.field();
  return json_response(status, body);
}

bool safe_image_id(const std::string& id) {
  if (id.empty() || id.find("..") != std::string::npos) return false;
  return std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  });
}

ApiResponse serve_image(const ElicitationService& service, const std::string& id) {
  if (!safe_image_id(id))
    return json_response(400, {{"error", "malformed"}, {"message", "bad image id"}});
  static const std::pair<const char*, const char*> kTypes[] = {
      {"", "application/octet-stream"}, {".png", "image/png"}, {".jpg", "image/jpeg"},
      {".jpeg", "image/jpeg"}};
  for (const auto& [ext, type] : kTypes) {
    const auto path = service.config().image_dir / (id + ext);
    if (!std::filesystem::is_regular_file(path)) continue;
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::string content_type = type;
    if (*ext == '\0') {
      const auto dot = id.rfind('.');
      const std::string suffix = dot == std::string::npos ? "" : id.substr(dot);
      if (suffix == ".png") content_type = "image/png";
      if (suffix == ".jpg" || suffix == ".jpeg") content_type = "image/jpeg";
    }
    return {200, content_type, std::move(bytes)};
  }
  return json_response(404, {{"error", "not_found"}, {"message", "no image '" + id + "'"}});
}

}  // namespace

ApiResponse handle_request(ElicitationService& service, const ApiRequest& req) {
  static const std::string kSessionPrefix = "/api/session/";
  static const std::string kSubmitSuffix = "/annotations";
  static const std::string kImagePrefix = "/images/";
  try {
    if (req.path == "/api/session") {
      if (req.method != "GET") return json_response(405, {{"error", "method_not_allowed"}});
      auto it = req.query.find("annotator_id");
      if (it == req.query.end() || it->second.empty())
        throw ServiceError(ServiceError::Kind::Malformed, "annotator_id is required",
                           "annotator_id");
      const Session s = service.create_session(it->second);
      return json_response(200, session_to_client_json(s, service.config().instructions,
                                                       service.config().session_ttl));
    }
    if (req.path.starts_with(kSessionPrefix) && req.path.ends_with(kSubmitSuffix) &&
        req.path.size() > kSessionPrefix.size() + kSubmitSuffix.size()) {
      if (req.method != "POST") return json_response(405, {{"error", "method_not_allowed"}});
      const std::string id = req.path.substr(
          kSessionPrefix.size(), req.path.size() - kSessionPrefix.size() - kSubmitSuffix.size());
      const json payload = json::parse(req.body, nullptr, false);
      if (payload.is_discarded())
        throw ServiceError(ServiceError::Kind::Malformed, "body is not valid JSON", "<root>");
      const SubmitAck ack = service.submit(id, payload);
      return json_response(200, to_json(ack, service.space()));
    }
    if (req.path == "/api/export") {
      if (req.method != "GET") return json_response(405, {{"error", "method_not_allowed"}});
      std::optional<std::string> batch;
      if (auto it = req.query.find("batch_id"); it != req.query.end() && !it->second.empty())
        batch = it->second;
      return {200, "application/x-ndjson", service.export_dataset(batch)};
    }
    if (req.path.starts_with(kImagePrefix)) {
      if (req.method != "GET") return json_response(405, {{"error", "method_not_allowed"}});
      return serve_image(service, req.path.substr(kImagePrefix.size()));
    }
    return json_response(404, {{"error", "not_found"}, {"message", "no route " + req.path}});
  } catch (const ServiceError& e) {
    return error_response(e);
  } catch (const std::exception& e) {
    return json_response(500, {{"error", "internal"}, {"message", e.what()}});
  }
}

}  // namespace softlabel
