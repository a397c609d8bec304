#pragma once

#include <iostream>
#include <mutex>
#include <sstream>
#include <string>

namespace stylediff::log {

enum class Level { debug, info, warning, error };

inline Level& threshold() {
  static Level level = Level::info;
  return level;
}

/// Structured single-line log record on stderr: `level=... msg="..." k=v ...`.
class Record {
 public:
  Record(Level level, std::string msg) : level_(level) {
    static const char* names[] = {"debug", "info", "warning", "error"};
    os_ << "level=" << names[static_cast<int>(level)] << " msg=\"" << msg << "\"";
  }
  ~Record() {
    if (level_ < threshold()) return;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    std::cerr << os_.str() << '\n';
  }
  Record(const Record&) = delete;
  Record& operator=(const Record&) = delete;

  template <class T>
  Record& kv(const std::string& key, const T& value) {
    os_ << ' ' << key << '=' << value;
    return *this;
  }

 private:
  Level level_;
  std::ostringstream os_;
};

inline Record info(std::string msg) { return Record(Level::info, std::move(msg)); }
inline Record warning(std::string msg) { return Record(Level::warning, std::move(msg)); }
inline Record debug(std::string msg) { return Record(Level::debug, std::move(msg)); }
inline Record error(std::string msg) { return Record(Level::error, std::move(msg)); }

}  // namespace stylediff::log
