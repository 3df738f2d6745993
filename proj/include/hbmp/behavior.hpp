#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

namespace hbmp {

/// The five high-level behaviors. The integer value is the policy's action index.
enum class Behavior : std::uint8_t { kKeep, kChangeLeft, kChangeRight, kSpeedUp, kSpeedDown };

inline constexpr std::size_t kBehaviorCount = 5;
inline constexpr std::array<Behavior, kBehaviorCount> kAllBehaviors{
    Behavior::kKeep, Behavior::kChangeLeft, Behavior::kChangeRight, Behavior::kSpeedUp,
    Behavior::kSpeedDown};

const char* to_string(Behavior b);
std::optional<Behavior> behavior_from_string(const std::string& s);

inline std::size_t index_of(Behavior b) { return static_cast<std::size_t>(b); }

}  // namespace hbmp
