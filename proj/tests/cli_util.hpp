#pragma once

// Runs the papsmear binary whose path is baked in at build time.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#ifndef PAP_CLI_PATH
#error "PAP_CLI_PATH must name the papsmear executable"
#endif

namespace cli {

/// Exit status of `papsmear <args>`; output goes to `log` when given.
inline int run(const std::string& args, const std::filesystem::path& log = {}) {
    std::string cmd = std::string("\"") + PAP_CLI_PATH + "\" " + args;
    cmd += log.empty() ? " >/dev/null 2>&1" : " >\"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    if (status == -1 || !WIFEXITED(status)) return -1;
    return WEXITSTATUS(status);
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

inline std::filesystem::path scratch(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("pap_cli_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace cli
