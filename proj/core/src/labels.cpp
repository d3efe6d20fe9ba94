#include "trialforge/labels.hpp"

namespace trialforge {

namespace labels {

const char* name(std::uint8_t label) {
  switch (label) {
    case background: return "background";
    case body: return "body";
    case lul: return "LUL";
    case lll: return "LLL";
    case rul: return "RUL";
    case rml: return "RML";
    case rll: return "RLL";
    case airway: return "airway";
    case heart: return "heart";
    case aorta: return "aorta";
    case esophagus: return "esophagus";
    case trachea: return "trachea";
    case pulmonary_vein: return "pulmonary_vein";
    case svc: return "svc";
    case nodule: return "nodule";
    default: return "unknown";
  }
}

}  // namespace labels

std::uint8_t lobe_label(Lobe l) {
  return labels::lobes[static_cast<int>(l)];
}

std::optional<Lobe> lobe_from_label(std::uint8_t label) {
  for (int i = 0; i < 5; ++i)
    if (labels::lobes[i] == label) return static_cast<Lobe>(i);
  return std::nullopt;
}

Side lobe_side(Lobe l) {
  return (l == Lobe::LUL || l == Lobe::LLL) ? Side::left : Side::right;
}

std::string_view to_string(Lobe l) {
  switch (l) {
    case Lobe::RUL: return "RUL";
    case Lobe::RML: return "RML";
    case Lobe::RLL: return "RLL";
    case Lobe::LUL: return "LUL";
    case Lobe::LLL: return "LLL";
  }
  return "?";
}

std::string_view to_string(Side s) { return s == Side::left ? "left" : "right"; }

std::string_view to_string(Zone z) {
  switch (z) {
    case Zone::upper: return "upper";
    case Zone::middle: return "middle";
    case Zone::lower: return "lower";
  }
  return "?";
}

std::string_view to_string(Malignancy m) {
  switch (m) {
    case Malignancy::benign: return "benign";
    case Malignancy::malignant: return "malignant";
    case Malignancy::unlabeled: return "unlabeled";
  }
  return "?";
}

std::optional<Lobe> lobe_from_string(std::string_view s) {
  if (s == "RUL") return Lobe::RUL;
  if (s == "RML") return Lobe::RML;
  if (s == "RLL") return Lobe::RLL;
  if (s == "LUL") return Lobe::LUL;
  if (s == "LLL") return Lobe::LLL;
  return std::nullopt;
}

std::optional<Zone> zone_from_string(std::string_view s) {
  if (s == "upper") return Zone::upper;
  if (s == "middle") return Zone::middle;
  if (s == "lower") return Zone::lower;
  return std::nullopt;
}

std::optional<Malignancy> malignancy_from_string(std::string_view s) {
  if (s == "benign") return Malignancy::benign;
  if (s == "malignant") return Malignancy::malignant;
  if (s == "unlabeled") return Malignancy::unlabeled;
  return std::nullopt;
}

}  // namespace trialforge
