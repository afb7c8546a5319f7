#pragma once

#include <string>

#include "tcmap/field.hpp"

namespace tcmap {

/// Binary container: field configuration, layout descriptors, raw parameter
/// values. Round-trip exact (doubles stored verbatim).
void save_checkpoint(const FieldModel& model, const std::string& path);

FieldModel load_checkpoint(const std::string& path);

}  // namespace tcmap
