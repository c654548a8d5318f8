#include "pcnn/config.hpp"

#include <cstdlib>
#include <sstream>

#include "pcnn/errors.hpp"
#include "pcnn/io.hpp"

namespace pcnn {

namespace {
std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}
}  // namespace

Config Config::parse(std::string_view text) {
  Config c;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
    auto key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
    c.set(std::move(key), trim(std::string_view(line).substr(eq + 1)));
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) { return parse(io::read_text(path)); }

std::optional<std::string> Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_string(const std::string& key, std::string fallback) const {
  auto v = get(key);
  return v ? *v : fallback;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  char* end = nullptr;
  const double d = std::strtod(v->c_str(), &end);
  if (end == v->c_str() || *end != '\0') throw ValidationError("config '" + key + "' is not a number: " + *v);
  return d;
}

long Config::get_int(const std::string& key, long fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  char* end = nullptr;
  const long d = std::strtol(v->c_str(), &end, 10);
  if (end == v->c_str() || *end != '\0') throw ValidationError("config '" + key + "' is not an integer: " + *v);
  return d;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ValidationError("config '" + key + "' is not a boolean: " + *v);
}

}  // namespace pcnn
