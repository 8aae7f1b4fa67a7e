#ifndef DFQ_SERVICE_HPP
#define DFQ_SERVICE_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>

#include <json.hpp>

#include "dfq/model_io.hpp"

namespace httplib {
class Server;
}

namespace dfq {

inline constexpr std::size_t kMaxUploadBytes = 16u * 1024u * 1024u;

struct ServiceOptions {
    std::string host = "127.0.0.1";
    int port = 8760;  // 0 picks a free port
    std::filesystem::path ui_dir = "ui";  // mounted at /ui when it exists
    std::size_t max_body = kMaxUploadBytes;
};

/// "host:port" -> (host, port). Throws ConfigError.
std::pair<std::string, int> parse_address(const std::string& addr);

/// Error codes carried by every non-2xx response.
namespace error_code {
inline constexpr const char* kBadImage = "bad_image";
inline constexpr const char* kTooLarge = "too_large";
inline constexpr const char* kMethodNotAllowed = "method_not_allowed";
inline constexpr const char* kInternal = "internal";
}  // namespace error_code

nlohmann::json model_info(const InferenceModel& model);

struct ClassifyOutcome {
    int status = 200;
    nlohmann::json body;
};

/// The /classify handler minus the HTTP plumbing.
ClassifyOutcome classify_bytes(const InferenceModel& model, std::span<const std::uint8_t> bytes,
                               const std::string& content_type);

class InspectionService {
public:
    InspectionService(std::shared_ptr<const InferenceModel> model, ServiceOptions options);
    ~InspectionService();
    InspectionService(const InspectionService&) = delete;
    InspectionService& operator=(const InspectionService&) = delete;

    /// Binds the listening socket; throws std::runtime_error if the address is busy.
    void bind();
    int port() const { return bound_port_; }
    /// Serves until stop() is called. bind() must have succeeded.
    void run();
    void stop();

private:
    void install_routes();

    std::shared_ptr<const InferenceModel> model_;
    ServiceOptions options_;
    std::unique_ptr<httplib::Server> server_;
    int bound_port_ = -1;
};

}  // namespace dfq

#endif  // DFQ_SERVICE_HPP
