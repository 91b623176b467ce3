#include "rfmag/diagnostics.hpp"

#include <iostream>
#include <mutex>

namespace rfmag {

namespace {

thread_local ScopedWarningCapture* active_capture = nullptr;

std::mutex& handler_mutex() {
  static std::mutex m;
  return m;
}

WarningHandler& fallback_handler() {
  static WarningHandler handler = [](const DomainWarning& w) {
    std::cerr << "warning: [" << w.operation << "] " << w.message << '\n';
  };
  return handler;
}

}  // namespace

void emit_warning(std::string_view operation, std::string message) {
  DomainWarning w{std::string(operation), std::move(message)};
  if (active_capture != nullptr) {
    active_capture->warnings_.push_back(std::move(w));
    return;
  }
  std::lock_guard lock(handler_mutex());
  if (fallback_handler()) fallback_handler()(w);
}

void set_default_warning_handler(WarningHandler handler) {
  std::lock_guard lock(handler_mutex());
  fallback_handler() = std::move(handler);
}

ScopedWarningCapture::ScopedWarningCapture() : previous_(active_capture) {
  active_capture = this;
}

ScopedWarningCapture::~ScopedWarningCapture() { active_capture = previous_; }

bool ScopedWarningCapture::contains(std::string_view operation) const {
  for (const auto& w : warnings_) {
    if (w.operation == operation) return true;
  }
  return false;
}

}  // namespace rfmag
