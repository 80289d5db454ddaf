#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ssae/run_config.hpp"

namespace ssae {

enum ExitCode { kExitOk = 0, kExitConfig = 2, kExitRuntime = 3 };

/// Command-line overrides shared by every command.
struct CommandOptions {
    std::filesystem::path config;
    std::filesystem::path checkpoint;
    std::filesystem::path out;
    bool overwrite = false;
    std::optional<std::uint64_t> seed;
    std::string device = "cpu";
    std::string mode;  // transfer mode override
    bool quiet = false;
};

/// Runs one of fit-target | train | attack | eval | transfer | bench and
/// maps failures to exit codes (2 config, 3 runtime). Messages go to stderr.
int run_command(const std::string& command, const CommandOptions& opt);

/// argv front end (CLI11).
int run_cli(int argc, char** argv);

/// Output files each command owns inside the output directory. Existing
/// ones make the command refuse to run unless --overwrite is given.
std::vector<std::filesystem::path> command_outputs(const std::string& command, const RunConfig& cfg);

/// `<out>/effective_config_<command>.json` (fit-target adds the target id).
std::filesystem::path effective_config_path(const std::string& command, const RunConfig& cfg);

/// Exclusive lock file `<dir>/.ssae.lock`, removed on destruction.
class OutputLock {
public:
    explicit OutputLock(const std::filesystem::path& dir);
    ~OutputLock();
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    std::filesystem::path path_;
};

}  // namespace ssae
