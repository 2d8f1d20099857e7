#pragma once

#include <string>

#include "paser/data.hpp"

namespace paser {

/// PASERDS v1 container: one file per split. Text header line
/// `PASERDS v1 <n> <C> <H> <W> <K>` followed, per sample, by the image as
/// little-endian 32-bit floats and the labels as unsigned bytes.
void write_paserds(const std::string& path, const Dataset& data);

/// Reads a PASERDS file. Generator/noise tags are not part of the format;
/// callers that need them tag samples from the file name.
Dataset read_paserds(const std::string& path);

}  // namespace paser
