#include "residuum/log.hpp"

#include <cstdlib>
#include <string_view>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace residuum {

namespace {

spdlog::level::level_enum level_from_env() {
    const char* value = std::getenv("RESIDUUM_LOG");
    if (value == nullptr) {
        return spdlog::level::info;
    }
    const std::string_view v{value};
    if (v == "error") {
        return spdlog::level::err;
    }
    if (v == "debug") {
        return spdlog::level::debug;
    }
    return spdlog::level::info;
}

std::shared_ptr<spdlog::logger> make_logger() {
    auto logger = spdlog::stderr_color_st("residuum");
    logger->set_pattern("[%l] %v");
    logger->set_level(level_from_env());
    return logger;
}

} // namespace

spdlog::logger& log() {
    static const std::shared_ptr<spdlog::logger> logger = make_logger();
    return *logger;
}

} // namespace residuum
