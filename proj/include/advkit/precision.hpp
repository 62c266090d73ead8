#pragma once

// Scalar type selection. The library builds twice: the default real32 flavour
// and a real64 flavour used by gradient-check tests. Each flavour lives in its
// own inline namespace so both can be linked into one binary.

#if defined(ADVKIT_REAL64)
#define ADVKIT_PRECISION_NS f64
#else
#define ADVKIT_PRECISION_NS f32
#endif

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

#if defined(ADVKIT_REAL64)
using Real = double;
#else
using Real = float;
#endif

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
