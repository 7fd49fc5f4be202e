#pragma once

#include <compare>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>

namespace met {

/// Opaque string identifier distinguished at compile time by its tag.
template <typename Tag>
class StrongId {
  public:
    StrongId() = default;
    explicit StrongId(std::string value) : value_(std::move(value)) {}

    const std::string& str() const noexcept { return value_; }
    bool empty() const noexcept { return value_.empty(); }

    friend auto operator<=>(const StrongId&, const StrongId&) = default;
    friend bool operator==(const StrongId&, const StrongId&) = default;

    friend std::ostream& operator<<(std::ostream& os, const StrongId& id) { return os << id.value_; }

  private:
    std::string value_;
};

struct EntityIdTag {};
struct ImageIdTag {};

using EntityId = StrongId<EntityIdTag>;
using ImageId = StrongId<ImageIdTag>;

}  // namespace met

template <typename Tag>
struct std::hash<met::StrongId<Tag>> {
    std::size_t operator()(const met::StrongId<Tag>& id) const noexcept
    {
        return std::hash<std::string>{}(id.str());
    }
};
