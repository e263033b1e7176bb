#include <algorithm>
#include <map>
#include <set>

#include "domremedy/error.hpp"
#include "domremedy/html.hpp"
#include "domremedy/workspace.hpp"
#include "httplib.h"

namespace domremedy {

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

[[noreturn]] void config_error(const std::string& message) { throw Error(ErrorCode::ConfigError, message); }

void check_keys(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) config_error(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) config_error("unknown key '" + key + "' in " + where);
  }
}

template <class T>
T get(const Json& obj, const std::string& key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    config_error(where + "." + key + ": " + e.what());
  }
}

std::size_t get_count(const Json& obj, const std::string& key, const std::string& where) {
  const Json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) config_error(where + "." + key + " must be a non-negative integer");
  return v.get<std::size_t>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return (path.is_absolute() || base.empty() ? path : base / path).lexically_normal();
}

bool is_url(std::string_view s) {
  return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0 || s.rfind("file://", 0) == 0;
}

MetricsAggregation change_aggregation_from_string(std::string_view name) {
  if (name == "pooled") return MetricsAggregation::Pooled;
  if (name == "per_page_mean") return MetricsAggregation::PerPageMean;
  config_error("unknown change_aggregation '" + std::string(name) + "'");
}

BackendConfig backend_from_json(const Json& j, const fs::path& base) {
  check_keys(j,
             {"model_id", "kind", "endpoint", "model_name", "auth_env_var", "max_output_tokens", "context_window",
              "requests_per_minute", "timeout_s", "transcripts"},
             "backend");
  BackendConfig b;
  b.http.model_id = get<std::string>(j, "model_id", "backend");
  const std::string where = "backend " + b.http.model_id;
  if (j.contains("kind")) b.kind = get<std::string>(j, "kind", where);
  if (b.kind != "identity" && b.kind != "replay" && b.kind != "http") {
    config_error(where + ": unknown kind '" + b.kind + "'");
  }
  if (j.contains("endpoint")) b.http.endpoint = get<std::string>(j, "endpoint", where);
  b.http.model_name = j.contains("model_name") ? get<std::string>(j, "model_name", where) : b.http.model_id;
  if (j.contains("auth_env_var")) b.http.auth_env_var = get<std::string>(j, "auth_env_var", where);
  if (j.contains("max_output_tokens")) b.http.max_output_tokens = get_count(j, "max_output_tokens", where);
  if (j.contains("context_window")) b.http.context_window = get_count(j, "context_window", where);
  if (j.contains("requests_per_minute")) b.http.requests_per_minute = get<double>(j, "requests_per_minute", where);
  if (j.contains("timeout_s")) b.http.timeout = std::chrono::seconds(get_count(j, "timeout_s", where));
  if (j.contains("transcripts")) b.transcripts = resolve(base, get<std::string>(j, "transcripts", where));
  return b;
}

std::string host_path_id(std::string_view url) {
  std::string_view rest = url.substr(url.find("://") + 3);
  auto cut = rest.find_first_of("?#");
  if (cut != std::string_view::npos) rest = rest.substr(0, cut);
  while (!rest.empty() && rest.back() == '/') rest.remove_suffix(1);
  return std::string(rest);
}

struct UrlParts {
  std::string scheme_host_port;
  std::string path;
};

UrlParts split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string join_location(const std::string& current, const std::string& location) {
  if (is_url(location)) return location;
  auto parts = split_url(current);
  if (location.rfind("//", 0) == 0) return current.substr(0, current.find("://") + 1) + location;
  if (!location.empty() && location[0] == '/') return parts.scheme_host_port + location;
  auto dir = parts.path.substr(0, parts.path.rfind('/') + 1);
  return parts.scheme_host_port + dir + location;
}

}  // namespace

PipelineConfig config_from_json(const Json& j, const fs::path& base) {
  check_keys(j,
             {"workspace", "pages", "models", "budget", "headroom", "estimator", "auditor", "counting_mode",
              "aggregation_mode", "change_aggregation", "parallelism", "retries", "category_map", "seed", "backends"},
             "config");
  PipelineConfig c;
  if (j.contains("workspace")) c.workspace = resolve(base, get<std::string>(j, "workspace", "config"));
  if (j.contains("pages")) {
    for (const auto& p : get<std::vector<std::string>>(j, "pages", "config")) {
      c.pages.push_back(is_url(p) ? p : resolve(base, p).string());
    }
  }
  if (j.contains("models")) {
    const Json& m = j.at("models");
    if (m.is_string() && m.get<std::string>() == "none") {
      c.models.clear();
    } else {
      c.models = get<std::vector<std::string>>(j, "models", "config");
    }
  }
  if (j.contains("budget")) c.budget = get_count(j, "budget", "config");
  if (j.contains("headroom")) c.headroom = get_count(j, "headroom", "config");
  if (j.contains("estimator")) c.estimator = get<std::string>(j, "estimator", "config");
  if (j.contains("auditor")) {
    const Json& a = j.at("auditor");
    check_keys(a, {"mode", "path", "fixtures", "timeout_s", "extra_args"}, "auditor");
    if (a.contains("mode")) c.auditor.mode = get<std::string>(a, "mode", "auditor");
    if (a.contains("path")) {
      auto p = get<std::string>(a, "path", "auditor");
      c.auditor.path = p.find('/') == std::string::npos ? fs::path(p) : resolve(base, p);
    }
    if (a.contains("fixtures")) c.auditor.fixtures = resolve(base, get<std::string>(a, "fixtures", "auditor"));
    if (a.contains("timeout_s")) c.auditor.timeout = std::chrono::seconds(get_count(a, "timeout_s", "auditor"));
    if (a.contains("extra_args")) c.auditor.extra_args = get<std::vector<std::string>>(a, "extra_args", "auditor");
  }
  try {
    if (j.contains("counting_mode")) c.counting_mode = counting_mode_from_string(get<std::string>(j, "counting_mode", "config"));
    if (j.contains("aggregation_mode")) {
      c.aggregation_mode = aggregation_mode_from_string(get<std::string>(j, "aggregation_mode", "config"));
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    config_error(e.what());
  }
  if (j.contains("change_aggregation")) {
    c.change_aggregation = change_aggregation_from_string(get<std::string>(j, "change_aggregation", "config"));
  }
  if (j.contains("parallelism")) {
    const Json& p = j.at("parallelism");
    check_keys(p, {"pages", "chunks", "audits"}, "parallelism");
    if (p.contains("pages")) c.page_parallelism = get_count(p, "pages", "parallelism");
    if (p.contains("chunks")) c.chunk_parallelism = get_count(p, "chunks", "parallelism");
    if (p.contains("audits")) c.audit_parallelism = get_count(p, "audits", "parallelism");
  }
  if (j.contains("retries")) c.retries = get_count(j, "retries", "config");
  if (j.contains("category_map")) c.category_map = resolve(base, get<std::string>(j, "category_map", "config"));
  if (j.contains("seed") && !j.at("seed").is_null()) c.seed = get<std::uint64_t>(j, "seed", "config");
  if (j.contains("backends")) {
    const Json& list = j.at("backends");
    if (!list.is_array()) config_error("backends must be an array");
    for (const auto& b : list) {
      auto backend = backend_from_json(b, base);
      std::string id = backend.http.model_id;
      if (!c.backends.emplace(id, std::move(backend)).second) config_error("duplicate backend '" + id + "'");
    }
  }
  validate_config(c);
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    config_error("cannot read " + path.string() + ": " + e.what());
  }
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    config_error(path.string() + ": " + e.what());
  }
  return config_from_json(j, fs::absolute(path).parent_path());
}

Json config_to_json(const PipelineConfig& c) {
  Json j;
  j["pages"] = c.pages;
  j["models"] = c.models;
  j["budget"] = c.budget;
  j["headroom"] = c.headroom;
  j["estimator"] = c.estimator;
  Json a;
  a["mode"] = c.auditor.mode;
  a["path"] = c.auditor.path.string();
  if (!c.auditor.fixtures.empty()) a["fixtures"] = c.auditor.fixtures.string();
  a["timeout_s"] = c.auditor.timeout.count();
  a["extra_args"] = c.auditor.extra_args;
  j["auditor"] = std::move(a);
  j["counting_mode"] = to_string(c.counting_mode);
  j["aggregation_mode"] = to_string(c.aggregation_mode);
  j["change_aggregation"] = c.change_aggregation == MetricsAggregation::Pooled ? "pooled" : "per_page_mean";
  j["parallelism"] = Json{{"pages", c.page_parallelism}, {"chunks", c.chunk_parallelism}, {"audits", c.audit_parallelism}};
  j["retries"] = c.retries;
  if (c.category_map) j["category_map"] = c.category_map->string();
  j["seed"] = c.seed ? Json(*c.seed) : Json();
  auto backends = Json::array();
  for (const auto& [id, b] : c.backends) {
    Json jb;
    jb["model_id"] = id;
    jb["kind"] = b.kind;
    if (b.kind == "http") {
      jb["endpoint"] = b.http.endpoint;
      jb["model_name"] = b.http.model_name;
      jb["auth_env_var"] = b.http.auth_env_var;
      jb["requests_per_minute"] = b.http.requests_per_minute;
      jb["timeout_s"] = b.http.timeout.count();
    }
    jb["max_output_tokens"] = b.http.max_output_tokens;
    jb["context_window"] = b.http.context_window;
    if (b.kind == "replay") jb["transcripts"] = b.transcripts.string();
    backends.push_back(std::move(jb));
  }
  j["backends"] = std::move(backends);
  return j;
}

void validate_config(const PipelineConfig& c) {
  if (c.budget == 0) config_error("budget must be positive");
  if (c.auditor.mode != "lighthouse" && c.auditor.mode != "replay") {
    config_error("unknown auditor mode '" + c.auditor.mode + "'");
  }
  if (c.auditor.mode == "replay" && c.auditor.fixtures.empty()) config_error("replay auditor needs fixtures");
  if (c.page_parallelism == 0 || c.chunk_parallelism == 0 || c.audit_parallelism == 0) {
    config_error("parallelism values must be at least 1");
  }
  try {
    estimator_by_name(c.estimator);
  } catch (const std::exception& e) {
    config_error(e.what());
  }
  std::set<std::string> seen;
  for (const auto& m : c.models) {
    if (!seen.insert(m).second) config_error("model '" + m + "' listed twice");
    auto it = c.backends.find(m);
    if (it == c.backends.end()) config_error("model '" + m + "' has no backend entry");
    const auto& b = it->second;
    if (b.http.max_output_tokens < c.budget + c.headroom) {
      config_error("model '" + m + "' max_output_tokens " + std::to_string(b.http.max_output_tokens) +
                   " is below budget + headroom " + std::to_string(c.budget + c.headroom));
    }
    if (b.kind == "http" && b.http.endpoint.empty()) config_error("model '" + m + "' needs an endpoint");
    if (b.kind == "replay" && b.transcripts.empty()) config_error("model '" + m + "' needs a transcripts directory");
  }
}

std::vector<std::string> page_ids(const std::vector<std::string>& pages) {
  std::vector<std::string> ids;
  std::map<std::string, int> used;
  for (const auto& p : pages) {
    std::string base;
    if (p.rfind("file://", 0) == 0) {
      base = fs::path(p.substr(7)).stem().string();
    } else if (is_url(p)) {
      base = host_path_id(p);
    } else {
      base = fs::path(p).stem().string();
    }
    base = sanitize_id(base);
    if (base.empty()) base = "page";
    int n = ++used[base];
    ids.push_back(n == 1 ? base : base + "-" + std::to_string(n));
  }
  return ids;
}

std::string Workspace::sanitize(const std::string& s) { return sanitize_id(s); }

std::vector<std::string> Workspace::pages() const {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(root_ / "pages", ec)) {
    if (entry.is_directory()) out.push_back(entry.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

FetchedPage fetch_page_raw(const std::string& source, const FetchOptions& options) {
  FetchedPage page;
  if (source.rfind("http://", 0) != 0 && source.rfind("https://", 0) != 0) {
    fs::path path = source.rfind("file://", 0) == 0 ? fs::path(source.substr(7)) : fs::path(source);
    try {
      page.body = read_file(path);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::FetchFailed, path.string() + ": " + e.what());
    }
    page.final_url = "file://" + fs::absolute(path).lexically_normal().string();
  } else {
    std::string url = source;
    for (int hop = 0;; ++hop) {
      auto parts = split_url(url);
      httplib::Client client(parts.scheme_host_port);
      client.set_follow_location(false);
      client.set_connection_timeout(options.timeout);
      client.set_read_timeout(options.timeout);
      client.set_write_timeout(options.timeout);
      auto res = client.Get(parts.path, httplib::Headers{{"User-Agent", options.user_agent}, {"Accept", "text/html"}});
      if (!res) throw Error(ErrorCode::FetchFailed, url + ": " + httplib::to_string(res.error()));
      if (res->status >= 300 && res->status < 400 && res->has_header("Location")) {
        if (hop >= options.max_redirects) throw Error(ErrorCode::FetchFailed, url + ": too many redirects");
        url = join_location(url, res->get_header_value("Location"));
        continue;
      }
      if (res->status < 200 || res->status >= 300) {
        throw Error(ErrorCode::FetchFailed, url + ": HTTP " + std::to_string(res->status));
      }
      std::string type = res->get_header_value("Content-Type");
      std::transform(type.begin(), type.end(), type.begin(), [](unsigned char ch) { return std::tolower(ch); });
      if (!type.empty() && type.find("html") == std::string::npos) {
        throw Error(ErrorCode::NotHtml, url + " is " + type);
      }
      page.body = std::move(res->body);
      page.final_url = url;
      break;
    }
  }
  page.doc = parse_html(page.body, page.final_url);
  page.doc.fetched_at = options.clock ? options.clock() : utc_timestamp();
  return page;
}

DomDocument fetch_page(const std::string& source, const FetchOptions& options) {
  return fetch_page_raw(source, options).doc;
}

}  // namespace domremedy
