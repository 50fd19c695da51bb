#ifndef AAP_AAP_HPP
#define AAP_AAP_HPP

#include "accel.hpp"
#include "encoder.hpp"
#include "funcsim.hpp"
#include "groups.hpp"
#include "io.hpp"
#include "pruner.hpp"
#include "report.hpp"
#include "synth.hpp"
#include "tensor.hpp"
#include "verify.hpp"

namespace aap {
inline constexpr const char* kVersion = "0.1.0";
}

#endif
