#pragma once

#include <string>

namespace probloc {

/// Shortest decimal text that round-trips to the same double ("nan", "inf"
/// for non-finite values).
std::string format_number(double value);

}  // namespace probloc
