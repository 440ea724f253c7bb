#pragma once

namespace delip {

// Keeps large tensor buffers on the heap free lists instead of returning them
// to the OS after every graph, which otherwise costs a page-fault storm per
// training batch. Idempotent; a no-op off glibc.
void configure_allocator();

}  // namespace delip
