#pragma once

// Domain warnings: approximation preconditions that are violated but not fatal
// (weak-field limit, sigma << omega1, ...). Results are still returned.

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace rfmag {

struct DomainWarning {
  std::string operation;
  std::string message;
};

using WarningHandler = std::function<void(const DomainWarning&)>;

/// Routes a warning to the handler installed on this thread, or to stderr.
void emit_warning(std::string_view operation, std::string message);

/// Replaces the process-wide fallback handler (default: print to stderr).
/// Passing an empty handler silences warnings.
void set_default_warning_handler(WarningHandler handler);

/// Collects warnings raised on the current thread while alive.
class ScopedWarningCapture {
 public:
  ScopedWarningCapture();
  ~ScopedWarningCapture();
  ScopedWarningCapture(const ScopedWarningCapture&) = delete;
  ScopedWarningCapture& operator=(const ScopedWarningCapture&) = delete;

  const std::vector<DomainWarning>& warnings() const { return warnings_; }
  bool contains(std::string_view operation) const;

 private:
  friend void emit_warning(std::string_view operation, std::string message);
  std::vector<DomainWarning> warnings_;
  ScopedWarningCapture* previous_;
};

}  // namespace rfmag
