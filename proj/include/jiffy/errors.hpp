#pragma once

#include <stdexcept>

namespace jiffy {

// A snapshot version older than the GC horizon. Revisions it would need
// may already be gone.
struct StaleSnapshot : std::runtime_error {
  StaleSnapshot() : std::runtime_error("snapshot version below GC horizon") {}
};

struct UseAfterUnregister : std::logic_error {
  UseAfterUnregister()
      : std::logic_error("snapshot handle used after unregister") {}
};

// A revision would hold more entries than its 16-bit index can address.
struct CapacityExceeded : std::length_error {
  CapacityExceeded() : std::length_error("revision entry count exceeds 65535") {}
};

}  // namespace jiffy
