#pragma once

#include <optional>
#include <string_view>

namespace rewardkit::detail {

// Files under core/data compiled into the library, keyed by relative path.
std::optional<std::string_view> embedded_file(std::string_view name);

}  // namespace rewardkit::detail
