#pragma once

// Agent observation vector and its mixed-radix code over (2, s, 3, s, 3).

#include <cstddef>
#include <string>

#include "isem/error.hpp"

namespace isem::sar {

struct ObservationVector {
    std::size_t self_state = 0;      ///< 1 when carrying a victim
    std::size_t self_location = 1;   ///< site id 1..s
    std::size_t location_state = 0;  ///< 0 none, 1 non-critical, 2 critical
    std::size_t second_location = 1; ///< site id 1..s
    std::size_t second_state = 0;

    bool operator==(const ObservationVector&) const = default;
};

inline std::size_t observation_space(std::size_t sites) { return 18 * sites * sites; }

inline std::size_t encode_observation(const ObservationVector& v, std::size_t sites) {
    if (sites == 0) throw DomainError("site count must be positive");
    if (v.self_state > 1 || v.location_state > 2 || v.second_state > 2 || v.self_location < 1 ||
        v.self_location > sites || v.second_location < 1 || v.second_location > sites)
        throw DomainError("observation field out of range");
    std::size_t i = v.self_state;
    i = i * sites + (v.self_location - 1);
    i = i * 3 + v.location_state;
    i = i * sites + (v.second_location - 1);
    i = i * 3 + v.second_state;
    return i;
}

inline ObservationVector decode_observation(std::size_t code, std::size_t sites) {
    if (sites == 0) throw DomainError("site count must be positive");
    if (code >= observation_space(sites))
        throw DomainError("observation code " + std::to_string(code) + " out of range");
    ObservationVector v;
    v.second_state = code % 3;
    code /= 3;
    v.second_location = code % sites + 1;
    code /= sites;
    v.location_state = code % 3;
    code /= 3;
    v.self_location = code % sites + 1;
    code /= sites;
    v.self_state = code;
    return v;
}

} // namespace isem::sar
