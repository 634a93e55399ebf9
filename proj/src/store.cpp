#include "coexist/store.hpp"

#include <sqlite3.h>

#include "coexist/error.hpp"
#include "text_util.hpp"

namespace coexist {
namespace {

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS registrations (
  scenario_id TEXT NOT NULL, kind TEXT NOT NULL, id TEXT NOT NULL,
  lat REAL NOT NULL, lon REAL NOT NULL, height_m REAL NOT NULL,
  parameters TEXT NOT NULL, registered_at INTEGER NOT NULL,
  PRIMARY KEY (scenario_id, kind, id));
CREATE TABLE IF NOT EXISTS contexts (
  id TEXT PRIMARY KEY, timestamp INTEGER NOT NULL, weather TEXT NOT NULL,
  rain_rate REAL NOT NULL, lat REAL NOT NULL, lon REAL NOT NULL, height_m REAL NOT NULL,
  provider_id TEXT NOT NULL, raw_record TEXT NOT NULL, stale INTEGER NOT NULL,
  created_at INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS priorities (
  user_id TEXT NOT NULL, context_id TEXT NOT NULL, score REAL NOT NULL,
  computed_at INTEGER NOT NULL, stale INTEGER NOT NULL,
  PRIMARY KEY (user_id, context_id));
CREATE TABLE IF NOT EXISTS policies (
  version TEXT PRIMARY KEY, document TEXT NOT NULL, created_at INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS experiments (
  id TEXT PRIMARY KEY, scenario_ref TEXT NOT NULL, context_id TEXT NOT NULL,
  policy_version TEXT NOT NULL, record TEXT NOT NULL, created_at INTEGER NOT NULL);
)sql";

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK)
      throw Error(ErrorCode::kIo, std::string("store: ") + sqlite3_errmsg(db));
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& bind(int i, const std::string& v) {
    sqlite3_bind_text(stmt_, i, v.c_str(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
    return *this;
  }
  Statement& bind(int i, double v) {
    sqlite3_bind_double(stmt_, i, v);
    return *this;
  }
  Statement& bind(int i, std::int64_t v) {
    sqlite3_bind_int64(stmt_, i, v);
    return *this;
  }

  // true while a row is available
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    if (rc == SQLITE_CONSTRAINT)
      throw Error(ErrorCode::kConflict, std::string("store: ") + sqlite3_errmsg(db_));
    throw Error(ErrorCode::kIo, std::string("store: ") + sqlite3_errmsg(db_));
  }
  void run() {
    while (step()) {
    }
  }

  std::string text(int col) const {
    const auto* p = sqlite3_column_text(stmt_, col);
    return p ? std::string(reinterpret_cast<const char*>(p),
                           static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)))
             : std::string();
  }
  double real(int col) const { return sqlite3_column_double(stmt_, col); }
  std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }
  int columns() const { return sqlite3_column_count(stmt_); }
  std::string name(int col) const { return sqlite3_column_name(stmt_, col); }
  int type(int col) const { return sqlite3_column_type(stmt_, col); }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

void exec(sqlite3* db, const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw Error(ErrorCode::kIo, "store: " + msg);
  }
}

Registration read_registration(const Statement& s) {
  Registration r;
  r.scenario_id = s.text(0);
  r.kind = parse_entity_kind(s.text(1)).value_or(EntityKind::kMbs);
  r.id = s.text(2);
  r.location = {s.real(3), s.real(4), s.real(5)};
  r.parameters = nlohmann::json::parse(s.text(6));
  r.registered_at = s.integer(7);
  return r;
}

ContextSnapshot read_context(const Statement& s) {
  ContextSnapshot c;
  c.id = s.text(0);
  c.timestamp = s.integer(1);
  c.weather = parse_weather_kind(s.text(2)).value_or(WeatherKind::kClear);
  c.rain_rate_mm_per_hr = s.real(3);
  c.location = {s.real(4), s.real(5), s.real(6)};
  c.provider_id = s.text(7);
  c.raw_record = s.text(8);
  c.stale = s.integer(9) != 0;
  return c;
}

StoredExperiment read_experiment(const Statement& s) {
  return {s.text(0), s.text(1), s.text(2), s.text(3), nlohmann::json::parse(s.text(4)),
          s.integer(5)};
}

const char* table_for(std::string_view kind) {
  if (kind == "registrations") return "SELECT * FROM registrations ORDER BY scenario_id, kind, id";
  if (kind == "contexts") return "SELECT * FROM contexts ORDER BY timestamp, id";
  if (kind == "priorities") return "SELECT * FROM priorities ORDER BY computed_at, user_id";
  if (kind == "policies") return "SELECT * FROM policies ORDER BY created_at, version";
  if (kind == "experiments") return "SELECT * FROM experiments ORDER BY created_at, id";
  throw Error(ErrorCode::kInvalidArgument, "unknown export kind '" + std::string(kind) + "'");
}

std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n\r") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string_view to_string(EntityKind kind) {
  switch (kind) {
    case EntityKind::kFss: return "fss";
    case EntityKind::kMbs: return "mbs";
    case EntityKind::kSu: return "su";
  }
  return "mbs";
}

std::optional<EntityKind> parse_entity_kind(std::string_view text) {
  for (auto k : {EntityKind::kFss, EntityKind::kMbs, EntityKind::kSu})
    if (to_string(k) == text) return k;
  return std::nullopt;
}

Store::Store(const std::filesystem::path& path) {
  if (sqlite3_open_v2(path.string().c_str(), &db_,
                      SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                      nullptr) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    throw Error(ErrorCode::kIo, "cannot open store " + path.string() + ": " + msg);
  }
  sqlite3_busy_timeout(db_, 5000);
  exec(db_, "PRAGMA journal_mode=WAL; PRAGMA synchronous=FULL; PRAGMA foreign_keys=ON;");
  exec(db_, kSchema);
}

Store::~Store() { sqlite3_close(db_); }

void Store::put_registration(const Registration& r) {
  std::lock_guard lock(mutex_);
  if (r.kind == EntityKind::kFss) {
    Statement q(db_, "SELECT id FROM registrations WHERE scenario_id = ? AND kind = 'fss' AND id <> ?");
    q.bind(1, r.scenario_id).bind(2, r.id);
    if (q.step())
      throw Error(ErrorCode::kConflict,
                  "scenario " + r.scenario_id + " already has FSS " + q.text(0) +
                      "; one FSS per scenario",
                  {q.text(0)});
  }
  Statement s(db_,
              "INSERT OR REPLACE INTO registrations VALUES (?, ?, ?, ?, ?, ?, ?, ?)");
  s.bind(1, r.scenario_id)
      .bind(2, std::string(to_string(r.kind)))
      .bind(3, r.id)
      .bind(4, r.location.latitude_deg)
      .bind(5, r.location.longitude_deg)
      .bind(6, r.location.height_m)
      .bind(7, r.parameters.dump())
      .bind(8, r.registered_at);
  s.run();
}

Registration Store::get_registration(const std::string& scenario_id, EntityKind kind,
                                     const std::string& id) const {
  std::lock_guard lock(mutex_);
  Statement s(db_, "SELECT * FROM registrations WHERE scenario_id = ? AND kind = ? AND id = ?");
  s.bind(1, scenario_id).bind(2, std::string(to_string(kind))).bind(3, id);
  if (!s.step())
    throw Error(ErrorCode::kNotFound, "no " + std::string(to_string(kind)) + " registration '" +
                                          id + "' in scenario " + scenario_id);
  return read_registration(s);
}

std::vector<Registration> Store::list_registrations(const std::string& scenario_id,
                                                    std::optional<EntityKind> kind) const {
  std::lock_guard lock(mutex_);
  Statement s(db_,
              "SELECT * FROM registrations WHERE scenario_id = ? AND (? = '' OR kind = ?) "
              "ORDER BY kind, id");
  const std::string k = kind ? std::string(to_string(*kind)) : std::string();
  s.bind(1, scenario_id).bind(2, k).bind(3, k);
  std::vector<Registration> out;
  while (s.step()) out.push_back(read_registration(s));
  return out;
}

void Store::put_context(const ContextSnapshot& c, std::int64_t created_at) {
  std::lock_guard lock(mutex_);
  Statement s(db_, "INSERT OR IGNORE INTO contexts VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)");
  s.bind(1, c.id)
      .bind(2, c.timestamp)
      .bind(3, std::string(to_string(c.weather)))
      .bind(4, c.rain_rate_mm_per_hr)
      .bind(5, c.location.latitude_deg)
      .bind(6, c.location.longitude_deg)
      .bind(7, c.location.height_m)
      .bind(8, c.provider_id)
      .bind(9, c.raw_record)
      .bind(10, std::int64_t{c.stale ? 1 : 0})
      .bind(11, created_at);
  s.run();
}

ContextSnapshot Store::get_context(const std::string& id) const {
  std::lock_guard lock(mutex_);
  Statement s(db_, "SELECT * FROM contexts WHERE id = ?");
  s.bind(1, id);
  if (!s.step()) throw Error(ErrorCode::kNotFound, "no context '" + id + "'");
  return read_context(s);
}

std::vector<ContextSnapshot> Store::list_contexts(TimeRange range) const {
  std::lock_guard lock(mutex_);
  Statement s(db_, "SELECT * FROM contexts WHERE timestamp BETWEEN ? AND ? ORDER BY timestamp, id");
  s.bind(1, range.from).bind(2, range.to);
  std::vector<ContextSnapshot> out;
  while (s.step()) out.push_back(read_context(s));
  return out;
}

void Store::put_priority(const PriorityRecord& p) {
  std::lock_guard lock(mutex_);
  Statement s(db_, "INSERT OR REPLACE INTO priorities VALUES (?, ?, ?, ?, ?)");
  s.bind(1, p.user_id)
      .bind(2, p.context_id)
      .bind(3, p.score)
      .bind(4, p.computed_at)
      .bind(5, std::int64_t{p.stale ? 1 : 0});
  s.run();
}

std::vector<PriorityRecord> Store::list_priorities(TimeRange range) const {
  std::lock_guard lock(mutex_);
  Statement s(db_,
              "SELECT user_id, score, context_id, computed_at, stale FROM priorities "
              "WHERE computed_at BETWEEN ? AND ? ORDER BY computed_at, user_id");
  s.bind(1, range.from).bind(2, range.to);
  std::vector<PriorityRecord> out;
  while (s.step())
    out.push_back({s.text(0), s.real(1), s.text(2), s.integer(3), s.integer(4) != 0});
  return out;
}

void Store::put_policy(const StoredPolicy& p) {
  std::lock_guard lock(mutex_);
  Statement s(db_, "INSERT OR REPLACE INTO policies VALUES (?, ?, ?)");
  s.bind(1, p.version).bind(2, p.document.dump()).bind(3, p.created_at);
  s.run();
}

StoredPolicy Store::get_policy(const std::string& version) const {
  std::lock_guard lock(mutex_);
  Statement s(db_, "SELECT * FROM policies WHERE version = ?");
  s.bind(1, version);
  if (!s.step()) throw Error(ErrorCode::kNotFound, "no policy '" + version + "'");
  return {s.text(0), nlohmann::json::parse(s.text(1)), s.integer(2)};
}

std::vector<StoredPolicy> Store::list_policies() const {
  std::lock_guard lock(mutex_);
  Statement s(db_, "SELECT * FROM policies ORDER BY created_at, version");
  std::vector<StoredPolicy> out;
  while (s.step()) out.push_back({s.text(0), nlohmann::json::parse(s.text(1)), s.integer(2)});
  return out;
}

void Store::put_experiment(const StoredExperiment& e) {
  std::lock_guard lock(mutex_);
  Statement s(db_, "INSERT INTO experiments VALUES (?, ?, ?, ?, ?, ?)");
  s.bind(1, e.id)
      .bind(2, e.scenario_ref)
      .bind(3, e.context_id)
      .bind(4, e.policy_version)
      .bind(5, e.record.dump())
      .bind(6, e.created_at);
  try {
    s.run();
  } catch (const Error& err) {
    if (err.code() == ErrorCode::kConflict)
      throw Error(ErrorCode::kConflict, "experiment '" + e.id + "' already stored", {e.id});
    throw;
  }
}

StoredExperiment Store::get_experiment(const std::string& id) const {
  std::lock_guard lock(mutex_);
  Statement s(db_, "SELECT * FROM experiments WHERE id = ?");
  s.bind(1, id);
  if (!s.step()) throw Error(ErrorCode::kNotFound, "no experiment '" + id + "'");
  return read_experiment(s);
}

std::vector<StoredExperiment> Store::list_experiments(TimeRange range) const {
  std::lock_guard lock(mutex_);
  Statement s(db_,
              "SELECT * FROM experiments WHERE created_at BETWEEN ? AND ? ORDER BY created_at, id");
  s.bind(1, range.from).bind(2, range.to);
  std::vector<StoredExperiment> out;
  while (s.step()) out.push_back(read_experiment(s));
  return out;
}

PurgeStats Store::purge(const RetentionPolicy& retention, std::int64_t now) {
  std::lock_guard lock(mutex_);
  PurgeStats stats;
  exec(db_, "BEGIN IMMEDIATE");
  try {
    auto remove = [&](const char* sql, const std::optional<std::int64_t>& horizon) -> std::size_t {
      if (!horizon) return 0;
      Statement s(db_, sql);
      s.bind(1, now - *horizon);
      s.run();
      return static_cast<std::size_t>(sqlite3_changes(db_));
    };
    // Experiments first so their references stop protecting old rows.
    stats.experiments = remove("DELETE FROM experiments WHERE created_at < ?", retention.experiments_s);
    stats.contexts = remove(
        "DELETE FROM contexts WHERE created_at < ? "
        "AND id NOT IN (SELECT context_id FROM experiments)",
        retention.contexts_s);
    stats.priorities =
        remove("DELETE FROM priorities WHERE computed_at < ?", retention.priorities_s);
    stats.policies = remove(
        "DELETE FROM policies WHERE created_at < ? "
        "AND version NOT IN (SELECT policy_version FROM experiments)",
        retention.policies_s);
    exec(db_, "COMMIT");
  } catch (...) {
    sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
    throw;
  }
  return stats;
}

std::string Store::export_csv(std::string_view kind) const {
  std::lock_guard lock(mutex_);
  Statement s(db_, table_for(kind));
  std::string out;
  for (int c = 0; c < s.columns(); ++c) out += (c ? "," : "") + s.name(c);
  out += '\n';
  while (s.step()) {
    for (int c = 0; c < s.columns(); ++c) {
      if (c) out += ',';
      out += s.type(c) == SQLITE_FLOAT ? format_number(s.real(c)) : csv_field(s.text(c));
    }
    out += '\n';
  }
  return out;
}

nlohmann::json Store::export_json(std::string_view kind) const {
  std::lock_guard lock(mutex_);
  Statement s(db_, table_for(kind));
  nlohmann::json rows = nlohmann::json::array();
  while (s.step()) {
    nlohmann::json row = nlohmann::json::object();
    for (int c = 0; c < s.columns(); ++c) {
      switch (s.type(c)) {
        case SQLITE_INTEGER: row[s.name(c)] = s.integer(c); break;
        case SQLITE_FLOAT: row[s.name(c)] = s.real(c); break;
        case SQLITE_NULL: row[s.name(c)] = nullptr; break;
        default: {
          // Structured columns are stored as JSON text; hand them back as objects.
          const std::string text = s.text(c);
          auto parsed = nlohmann::json::parse(text, nullptr, false);
          row[s.name(c)] = (!parsed.is_discarded() && parsed.is_structured()) ? parsed
                                                                               : nlohmann::json(text);
        }
      }
    }
    rows.push_back(std::move(row));
  }
  return {{"schema_version", 1}, {"kind", std::string(kind)}, {"rows", rows}};
}

}  // namespace coexist
