#pragma once
// The fixed anatomy label table shared by every stage, plus the small
// categorical types (lobe, side, zone, malignancy) that ride along with it.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace trialforge {

namespace labels {
inline constexpr std::uint8_t background = 0;
inline constexpr std::uint8_t body = 1;
inline constexpr std::uint8_t lul = 2;
inline constexpr std::uint8_t lll = 3;
inline constexpr std::uint8_t rul = 4;
inline constexpr std::uint8_t rml = 5;
inline constexpr std::uint8_t rll = 6;
inline constexpr std::uint8_t airway = 7;
inline constexpr std::uint8_t heart = 8;
inline constexpr std::uint8_t aorta = 9;
inline constexpr std::uint8_t esophagus = 10;
inline constexpr std::uint8_t trachea = 11;
inline constexpr std::uint8_t pulmonary_vein = 12;
inline constexpr std::uint8_t svc = 13;
inline constexpr std::uint8_t nodule = 23;

// Canonical lobe order everywhere (matches the lobe-prior vector order).
inline constexpr std::array<std::uint8_t, 5> lobes{rul, rml, rll, lul, lll};

const char* name(std::uint8_t label);
}  // namespace labels

enum class Lobe : int { RUL = 0, RML = 1, RLL = 2, LUL = 3, LLL = 4 };
enum class Side : int { right = 0, left = 1 };
enum class Zone : int { upper = 0, middle = 1, lower = 2 };
enum class Malignancy : int { benign = 0, malignant = 1, unlabeled = 2 };

std::uint8_t lobe_label(Lobe l);
std::optional<Lobe> lobe_from_label(std::uint8_t label);
Side lobe_side(Lobe l);

std::string_view to_string(Lobe l);
std::string_view to_string(Side s);
std::string_view to_string(Zone z);
std::string_view to_string(Malignancy m);

std::optional<Lobe> lobe_from_string(std::string_view s);
std::optional<Zone> zone_from_string(std::string_view s);
std::optional<Malignancy> malignancy_from_string(std::string_view s);

}  // namespace trialforge
