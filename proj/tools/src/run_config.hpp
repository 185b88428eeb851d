#pragma once

#include "gsw/dataio.hpp"
#include "gsw/optim.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsw::cli {

/// Invalid configuration: maps to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string dataset;  // dataset directory
    std::string output = "out";
    std::uint64_t seed = 1;
    TrainConfig train;
    DatasetSpec data;
    std::vector<double> tune_weights{0.0, 0.25, 0.5, 0.75, 1.0};
    bool transfer = false;
    bool grad_threshold_set = false;

    /// Cross-field checks; throws UsageError.
    void validate() const;
};

/// Parses `key = value` lines; `#` starts a comment. Unknown keys, duplicate
/// keys and malformed values throw UsageError naming the key and line.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Every recognised key, for help output and tests.
std::vector<std::string> config_keys();

}  // namespace gsw::cli
