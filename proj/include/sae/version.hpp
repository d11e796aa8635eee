#ifndef SAE_VERSION_HPP
#define SAE_VERSION_HPP

namespace sae {

inline constexpr const char* version = "0.1.0";

}

#endif
