#pragma once

#include <cstdint>
#include <ostream>

namespace rd {

// Property suites behind the `check` CLI subcommand. Each prints a report
// and returns false on the first violation.

bool check_fuse(std::ostream& os, int seeds = 20);
bool check_grads(std::ostream& os, int seeds = 20);
bool check_taylor(std::ostream& os);
bool check_pono(std::ostream& os, int seeds = 20);

}  // namespace rd
