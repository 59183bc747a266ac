#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace killchain {

/// The seven kill-chain phases, in order.
enum class Phase : int { recon = 0, weapon, delivery, exploit, install, c2, objectives };

inline constexpr int kNumPhases = 7;

inline constexpr std::array<Phase, kNumPhases> kAllPhases = {
    Phase::recon, Phase::weapon, Phase::delivery, Phase::exploit,
    Phase::install, Phase::c2, Phase::objectives};

constexpr int ordinal(Phase p) noexcept { return static_cast<int>(p); }

constexpr std::string_view phase_name(Phase p) noexcept {
  constexpr std::array<std::string_view, kNumPhases> names = {
      "recon", "weapon", "delivery", "exploit", "install", "c2", "objectives"};
  return names[static_cast<std::size_t>(ordinal(p))];
}

constexpr std::optional<Phase> parse_phase(std::string_view name) noexcept {
  for (Phase p : kAllPhases)
    if (phase_name(p) == name) return p;
  return std::nullopt;
}

constexpr std::optional<Phase> phase_from_ordinal(int i) noexcept {
  if (i < 0 || i >= kNumPhases) return std::nullopt;
  return static_cast<Phase>(i);
}

constexpr bool is_terminal(Phase p) noexcept { return p == Phase::objectives; }

/// Successor phase, or nullopt for objectives.
constexpr std::optional<Phase> next_phase(Phase p) noexcept { return phase_from_ordinal(ordinal(p) + 1); }

}  // namespace killchain
