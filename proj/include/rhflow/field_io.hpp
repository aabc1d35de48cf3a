#ifndef RHFLOW_FIELD_IO_HPP
#define RHFLOW_FIELD_IO_HPP

#include <filesystem>

#include "rhflow/grid.hpp"

namespace rhflow {

/// Writes "RHFLOW n N1 N2 [N3] L1 L2 [L3]\n" followed by the values as
/// little-endian 64-bit floats, x1 slowest.
void write_field(const std::filesystem::path& path, const ScalarField& field);

/// Reads a dump produced by write_field. Throws std::runtime_error on a
/// malformed header or short payload.
ScalarField read_field(const std::filesystem::path& path);

}  // namespace rhflow

#endif  // RHFLOW_FIELD_IO_HPP
