#pragma once

#include <string>
#include <string_view>

#include "dbvar/design.hpp"

namespace dbvar {

struct ParsedDesign {
  DesignSpec spec;
  DesignOptions options;
};

// Parses the JSON design description documented in docs/formats.md.
// Syntax errors are reported with line and column.
ParsedDesign parse_design_text(std::string_view text);
ParsedDesign load_design_file(const std::string& path);

}  // namespace dbvar
