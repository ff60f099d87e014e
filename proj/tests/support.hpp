#pragma once

#include <string>

#include "shipem/domain.hpp"

namespace shipem::test {

inline std::string config_path(const std::string& name) {
  return std::string(SHIPEM_CONFIG_DIR) + "/" + name;
}

inline ScenarioConfig load_named(const std::string& name) {
  return load_config_file(config_path(name));
}

}  // namespace shipem::test
