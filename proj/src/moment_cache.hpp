#pragma once

#include <mutex>

#include "dbvar/design.hpp"

namespace dbvar {

struct MomentCache {
  std::once_flag once;
  DesignMoments value;
};

}  // namespace dbvar
