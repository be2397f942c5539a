#include "sps/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "sps/error.hpp"

namespace sps {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::unbalanced: return "unbalanced";
    case Errc::empty_node: return "empty_node";
    case Errc::malformed: return "malformed";
    case Errc::unknown_label: return "unknown_label";
    case Errc::inventory_overlap: return "inventory_overlap";
    case Errc::root_promotion: return "root_promotion";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::unmapped_node: return "unmapped_node";
    case Errc::duplicate_priority: return "duplicate_priority";
    case Errc::empty_features: return "empty_features";
    case Errc::missing_reference: return "missing_reference";
    case Errc::token_mismatch: return "token_mismatch";
    case Errc::length_mismatch: return "length_mismatch";
    case Errc::empty_corpus: return "empty_corpus";
    case Errc::empty_treebank: return "empty_treebank";
    case Errc::invalid_model: return "invalid_model";
    case Errc::empty_generation: return "empty_generation";
    case Errc::service_unavailable: return "service_unavailable";
    case Errc::io: return "io";
    case Errc::config: return "config";
  }
  return "unknown";
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error(Errc::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::io, "cannot rename " + tmp.string() + ": " + ec.message());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::config, path.string() + ": " + e.what());
  }
}

void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    start = end + 1;
  }
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

namespace {
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }
}  // namespace

std::vector<std::string> split_ws(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::uint64_t fnv1a(std::string_view data) noexcept {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace sps
