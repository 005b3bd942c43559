#pragma once

namespace mfdal {

/// Keeps large training temporaries on the heap instead of fresh mmap
/// regions per allocation (glibc only; a no-op elsewhere). Call once from
/// main before training.
void tune_allocator();

}  // namespace mfdal
