#include <cstdlib>
#include <regex>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "sps/generator.hpp"
#include "sps/io.hpp"

namespace sps {

TokenBucket::TokenBucket(double requests_per_minute)
    : rate_per_sec_(requests_per_minute / 60.0),
      capacity_(std::max(1.0, requests_per_minute / 60.0)),
      tokens_(capacity_),
      last_(std::chrono::steady_clock::now()) {
  if (!(requests_per_minute > 0.0)) throw Error(Errc::config, "requests_per_minute must be positive");
}

void TokenBucket::acquire() {
  std::unique_lock lock(mutex_);
  for (;;) {
    const auto now = std::chrono::steady_clock::now();
    tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_per_sec_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_per_sec_);
    lock.unlock();
    std::this_thread::sleep_for(wait);
    lock.lock();
  }
}

ServiceConfig ServiceConfig::from_json(const nlohmann::json& j) {
  ServiceConfig c;
  try {
    c.endpoint = j.at("endpoint").get<std::string>();
    c.token_env = j.value("token_env", c.token_env);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.temperature = j.value("temperature", c.temperature);
    c.send_seed = j.value("send_seed", c.send_seed);
    c.max_attempts = j.value("max_attempts", c.max_attempts);
    c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    c.requests_per_minute = j.value("requests_per_minute", c.requests_per_minute);
    c.tokenizer = j.value("tokenizer", c.tokenizer);
    if (j.contains("lexicon")) c.lexicon = Lexicon::load(j.at("lexicon").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config, std::string("service config: ") + e.what());
  }
  if (c.tokenizer != "whitespace" && c.tokenizer != "chars" && c.tokenizer != "maxmatch")
    throw Error(Errc::config, "unknown tokenizer '" + c.tokenizer + "'");
  if (c.tokenizer == "maxmatch" && !c.lexicon) throw Error(Errc::config, "maxmatch tokenizer needs a lexicon");
  if (c.max_attempts < 1) throw Error(Errc::config, "max_attempts must be at least 1");
  return c;
}

ServiceGenerator::ServiceGenerator(ServiceConfig config, PromptTemplate tmpl)
    : config_(std::move(config)), template_(std::move(tmpl)), bucket_(config_.requests_per_minute) {
  if (config_.endpoint.rfind("http://", 0) != 0 && config_.endpoint.rfind("https://", 0) != 0)
    throw Error(Errc::config, "service endpoint must be an http(s) URL");
}

std::vector<Sentence> ServiceGenerator::split_reply(const std::string& text) const {
  // "1. ", "2) ", "3、", "- ", "* " list markers
  static const std::regex marker(R"(^\s*(?:\d+\s*(?:[.):]|、)|[-*•])\s*)");
  std::vector<Sentence> out;
  for (const auto& raw : split_lines(text)) {
    std::string line = std::regex_replace(raw, marker, "", std::regex_constants::format_first_only);
    line = std::string(trim(line));
    if (line.empty()) continue;
    Sentence s;
    if (config_.tokenizer == "whitespace") {
      s = split_ws(line);
    } else if (config_.tokenizer == "chars") {
      for (auto& ch : utf8_chars(line))
        if (!trim(ch).empty()) s.push_back(ch);
    } else {
      std::string joined;
      for (const auto& t : split_ws(line)) joined += t;
      s = max_match_tokenize(joined, *config_.lexicon);
    }
    bool ok = !s.empty();
    for (const auto& t : s) ok = ok && valid_token(t);
    if (ok) out.push_back(std::move(s));
  }
  return out;
}

GenerationBatch ServiceGenerator::generate(const PromptSpec& spec, std::size_t count, std::uint64_t seed) const {
  spec.validate();
  const std::string prompt = template_.render(spec, count);

  const auto scheme_end = config_.endpoint.find("://") + 3;
  const auto path_start = config_.endpoint.find('/', scheme_end);
  const std::string base = config_.endpoint.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);

  nlohmann::json body = {{"prompt", prompt}, {"max_tokens", config_.max_tokens}, {"temperature", config_.temperature}};
  if (config_.send_seed) body["seed"] = seed;

  httplib::Headers headers;
  if (const char* token = std::getenv(config_.token_env.c_str()); token && *token)
    headers.emplace("Authorization", std::string("Bearer ") + token);

  std::string last_error;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    if (attempt > 1)
      std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms * (1 << (attempt - 2))));
    bucket_.acquire();
    httplib::Client client(base);
    client.set_connection_timeout(config_.timeout_s);
    client.set_read_timeout(config_.timeout_s);
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      spdlog::debug("generation attempt {} failed: {}", attempt, last_error);
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      spdlog::debug("generation attempt {} failed: {}", attempt, last_error);
      continue;
    }
    if (res->status != 200)
      throw ServiceError("generation service refused the request: HTTP " + std::to_string(res->status), attempt);

    nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.is_object() || !reply.contains("text") || !reply["text"].is_string())
      throw Error(Errc::empty_generation, "generation service reply is not {\"text\": ...}");
    GenerationBatch batch;
    batch.sentences = split_reply(reply["text"].get<std::string>());
    for (auto it = batch.sentences.begin(); it != batch.sentences.end();)
      it = (it->size() < spec.min_length || it->size() > spec.max_length) ? batch.sentences.erase(it) : it + 1;
    if (batch.sentences.empty()) throw Error(Errc::empty_generation, "generation service returned no usable sentence");
    batch.provenance = {hex64(fnv1a(prompt)), id(), seed};
    return batch;
  }
  throw ServiceError("generation service unavailable: " + last_error, config_.max_attempts);
}

}  // namespace sps
