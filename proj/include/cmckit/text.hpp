#pragma once

#include <string>

namespace cmckit {

// Shortest decimal string that round-trips the value; used everywhere a
// byte-deterministic text output is required.
std::string format_double(double v);

}  // namespace cmckit
