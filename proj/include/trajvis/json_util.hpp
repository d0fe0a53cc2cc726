#ifndef TRAJVIS_JSON_UTIL_HPP
#define TRAJVIS_JSON_UTIL_HPP

#include <json.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace trajvis {

/** JSON number for finite values; "inf", "-inf" or "nan" otherwise. */
inline nlohmann::json real_to_json(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    return value;
}

inline double real_from_json(const nlohmann::json& json) {
    if (json.is_number()) {
        return json.get<double>();
    }
    if (json.is_string()) {
        const auto text = json.get<std::string>();
        if (text == "inf") return std::numeric_limits<double>::infinity();
        if (text == "-inf") return -std::numeric_limits<double>::infinity();
        if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
    }
    throw std::invalid_argument("expected a real number, got " + json.dump());
}

inline nlohmann::json optional_to_json(const std::optional<double>& value) {
    return value ? real_to_json(*value) : nlohmann::json(nullptr);
}

inline std::optional<double> optional_from_json(const nlohmann::json& json) {
    if (json.is_null()) {
        return std::nullopt;
    }
    return real_from_json(json);
}

} // namespace trajvis

#endif
