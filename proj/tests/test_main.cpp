#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eagle/tensor.hpp"

// Tests run in f64 mode by default (matching the CLI default); cases probing
// f32 rounding switch modes explicitly.
namespace {
const bool g_precision_init = [] {
    eagle::ad::set_precision(eagle::ad::Precision::f64);
    return true;
}();
}  // namespace
