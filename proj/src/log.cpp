#include "iqa/log.hpp"

#include <iostream>
#include <mutex>

namespace iqa {
namespace {

std::mutex g_mutex;
LogSink g_sink;

}  // namespace

LogSink set_warning_sink(LogSink sink) {
  std::lock_guard lock(g_mutex);
  std::swap(g_sink, sink);
  return sink;
}

void warn(const std::string& message) {
  std::lock_guard lock(g_mutex);
  if (g_sink) g_sink(message);
  else std::cerr << "warning: " << message << '\n';
}

}  // namespace iqa
