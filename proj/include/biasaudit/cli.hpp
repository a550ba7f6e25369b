#pragma once

#include "biasaudit/finetune.hpp"
#include "biasaudit/gateway.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace biasaudit {

/// Hooks for tests and embedding callers. Anything left empty is built from
/// the command-line flags.
struct CliEnvironment {
    std::shared_ptr<ChatProvider> chat;
    std::vector<std::shared_ptr<EmbeddingProvider>> embedders;
    std::shared_ptr<FineTuneBackend> finetune;
    std::function<std::optional<std::string>(const std::string&)> getenv;
};

/// Runs one command line (without the program name). Returns the exit code:
/// 0 success, 1 usage, 2 data, 3 provider.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const CliEnvironment& env = {});

}  // namespace biasaudit
