// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <functional>
#include <string>

namespace cloglog {

// Warnings go to stderr unless a sink is installed (the C API forwards them).
using WarningSink = std::function<void(const std::string&)>;

void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace cloglog
