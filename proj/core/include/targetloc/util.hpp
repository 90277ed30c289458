#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

namespace targetloc {

/// FNV-1a 64 over a byte range / whole file, hex-encoded. Used for the
/// provenance stamps written next to every run's outputs.
std::uint64_t fnv1a64_bytes(const void* data, std::size_t size);
std::string hash_file_hex(const std::filesystem::path& path);
std::string hash_bytes_hex(const void* data, std::size_t size);

/// Runs fn(i) for i in [0, n) on `threads` workers. Results must be written
/// to per-index slots by the caller; the partition is deterministic and the
/// call returns only when every index is done, so any follow-up reduction in
/// index order is independent of the thread count.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

/// Same, but passes the worker id in [0, threads) so callers can reuse
/// per-worker scratch buffers.
void parallel_for_workers(int n, int threads, const std::function<void(int, int)>& fn);

} // namespace targetloc
