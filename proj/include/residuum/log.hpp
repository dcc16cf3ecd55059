#pragma once

#include <memory>

namespace spdlog {
class logger;
}

namespace residuum {

// Shared stderr logger. Level comes from RESIDUUM_LOG (error, info, debug; default info).
spdlog::logger& log();

} // namespace residuum
