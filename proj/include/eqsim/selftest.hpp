#pragma once

#include <iosfwd>
#include <string>

namespace eqsim {

struct SelftestOptions {
    // Test fixture: replaces the input-gradient path with a deliberately
    // unflipped kernel so the gradient suite must fail.
    bool inject_wrong_flip = false;
};

// Runs the gradient, conv-oracle, loss, and buffer-invariance property
// suites; prints one line per suite. Returns true when everything passed.
bool run_selftest(std::ostream& out, const SelftestOptions& opts = {});

}  // namespace eqsim
