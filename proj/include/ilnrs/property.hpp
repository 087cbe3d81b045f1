#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace ilnrs {

// The five target properties. Viscosity is handled as ln(viscosity / mPa*s)
// end to end, so no extra transform exists anywhere in the pipeline.
enum class Property {
  density,          // kg/m^3
  ln_viscosity,     // ln(mPa*s)
  surface_tension,  // N/m
  heat_capacity,    // J/(mol*K)
  melting_point,    // K, structure-only (no T/P inputs)
};

inline constexpr std::array<Property, 5> kAllProperties = {
    Property::density, Property::ln_viscosity, Property::surface_tension,
    Property::heat_capacity, Property::melting_point};

// Properties with dense simulated data available for pre-training.
inline constexpr std::array<Property, 3> kPretrainProperties = {
    Property::density, Property::ln_viscosity, Property::heat_capacity};

inline const char* to_string(Property p) {
  switch (p) {
    case Property::density: return "density";
    case Property::ln_viscosity: return "ln_viscosity";
    case Property::surface_tension: return "surface_tension";
    case Property::heat_capacity: return "heat_capacity";
    case Property::melting_point: return "melting_point";
  }
  throw std::invalid_argument("unknown property enum value");
}

inline Property property_from_string(const std::string& s) {
  for (Property p : kAllProperties)
    if (s == to_string(p)) return p;
  throw std::invalid_argument("unknown property tag '" + s + "'");
}

inline bool is_condition_free(Property p) { return p == Property::melting_point; }

}  // namespace ilnrs
