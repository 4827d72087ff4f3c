#pragma once

#include "hai/onboarding.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace httplib {
class Server;
}

namespace hai {

// JSON API over an OnboardingService. Every response body carries "v": 1;
// errors are {"v": 1, "error": "..."} with 400 (bad request), 404 (unknown
// session or example) or 409 (illegal in the current phase).
class OnboardingServer {
public:
    OnboardingServer(std::shared_ptr<OnboardingService> service,
                     std::optional<std::filesystem::path> assets_dir = std::nullopt);
    ~OnboardingServer();

    OnboardingServer(const OnboardingServer&) = delete;
    OnboardingServer& operator=(const OnboardingServer&) = delete;

    // Binds; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    // Blocks until stop().
    void listen();
    void stop();
    void wait_until_ready() const;

private:
    std::shared_ptr<OnboardingService> service_;
    std::unique_ptr<httplib::Server> server_;
};

} // namespace hai
