#include "dfq/service.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <stdexcept>

#include <httplib.h>

#include "dfq/errors.hpp"
#include "dfq/image.hpp"

namespace dfq {

std::pair<std::string, int> parse_address(const std::string& addr) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size()) {
        throw ConfigError("address must look like HOST:PORT, got '" + addr + "'");
    }
    const std::string host = addr.substr(0, colon);
    const std::string port_text = addr.substr(colon + 1);
    if (!std::all_of(port_text.begin(), port_text.end(), [](unsigned char c) { return std::isdigit(c); }) ||
        port_text.size() > 5) {
        throw ConfigError("bad port in '" + addr + "'");
    }
    const int port = std::stoi(port_text);
    if (port > 65535) throw ConfigError("port out of range in '" + addr + "'");
    return {host, port};
}

nlohmann::json model_info(const InferenceModel& model) {
    const Shape& s = model.input_shape();
    return {{"classes", kClassNames},
            {"input_size", {s[0], s[1], s[2]}},
            {"width", model.width()},
            {"quantized", model.quantized()},
            {"total_parameters", model.total_parameters()}};
}

namespace {

nlohmann::json error_body(const char* code, const std::string& message) {
    return {{"error", code}, {"message", message}};
}

std::string media_type(const std::string& content_type) {
    std::string t = content_type.substr(0, content_type.find(';'));
    t.erase(std::remove_if(t.begin(), t.end(), [](unsigned char c) { return std::isspace(c); }), t.end());
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    return t;
}

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

}  // namespace

ClassifyOutcome classify_bytes(const InferenceModel& model, std::span<const std::uint8_t> bytes,
                               const std::string& content_type) {
    const std::string type = media_type(content_type);
    if (type != "image/png" && type != "image/jpeg" && type != "image/jpg" && type != "application/octet-stream") {
        return {400, error_body(error_code::kBadImage, "content type must be image/png or image/jpeg")};
    }
    if (bytes.size() > kMaxUploadBytes) return {413, error_body(error_code::kTooLarge, "body exceeds 16 MiB")};
    const auto start = std::chrono::steady_clock::now();
    Tensor image;
    try {
        const Shape& s = model.input_shape();
        if (s[0] != s[1]) throw DecodeError("model input is not square");
        image = decode_and_resize(bytes, s[0]);
    } catch (const DecodeError& e) {
        return {400, error_body(error_code::kBadImage, e.what())};
    }
    const Tensor probs = model.predict(reshape(image, image.shape().with_leading(1)));
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    const std::size_t best = argmax_rows(probs).front();
    nlohmann::json p = nlohmann::json::object();
    for (std::size_t c = 0; c < kNumClasses; ++c) p[std::string(kClassNames[c])] = probs[c];
    nlohmann::json info = model_info(model);
    return {200,
            {{"label", kClassNames[best]},
             {"probabilities", p},
             {"inference_ms", ms},
             {"model", {{"width", info["width"]}, {"quantized", info["quantized"]}, {"total_parameters", info["total_parameters"]}}}}};
}

InspectionService::InspectionService(std::shared_ptr<const InferenceModel> model, ServiceOptions options)
    : model_(std::move(model)), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
    if (!model_) throw ConfigError("service needs a model");
    install_routes();
}

InspectionService::~InspectionService() { stop(); }

void InspectionService::install_routes() {
    auto& srv = *server_;
    srv.set_payload_max_length(options_.max_body);

    srv.Get("/health", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"status", "ok"}}); });
    srv.Get("/model/info", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, model_info(*model_));
    });
    srv.Post("/classify", [this](const httplib::Request& req, httplib::Response& res) {
        const auto* data = reinterpret_cast<const std::uint8_t*>(req.body.data());
        const auto out = classify_bytes(*model_, {data, req.body.size()}, req.get_header_value("Content-Type"));
        send_json(res, out.status, out.body);
    });

    auto not_allowed = [](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 405, error_body(error_code::kMethodNotAllowed, req.method + " is not supported on " + req.path));
    };
    for (const char* path : {"/health", "/model/info"}) {
        srv.Post(path, not_allowed).Put(path, not_allowed).Delete(path, not_allowed).Patch(path, not_allowed);
    }
    srv.Get("/classify", not_allowed).Put("/classify", not_allowed).Delete("/classify", not_allowed);
    srv.Patch("/classify", not_allowed);

    if (!options_.ui_dir.empty() && std::filesystem::is_directory(options_.ui_dir)) {
        srv.set_mount_point("/ui", options_.ui_dir.string());
    }

    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "unexpected failure";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        send_json(res, 500, error_body(error_code::kInternal, what));
    });
    // statuses produced inside httplib itself (oversized body, unknown route)
    srv.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
        const int status = res.status;
        if (status == 413) {
            send_json(res, 413, error_body(error_code::kTooLarge, "body exceeds 16 MiB"));
        } else if (status == 404) {
            send_json(res, 404, error_body(error_code::kMethodNotAllowed, "no route for " + req.method + " " + req.path));
        } else if (status == 400) {
            send_json(res, 400, error_body(error_code::kBadImage, "malformed request"));
        } else {
            send_json(res, status, error_body(error_code::kInternal, "request failed"));
        }
        return httplib::Server::HandlerResponse::Handled;
    });
}

void InspectionService::bind() {
    if (options_.port == 0) {
        bound_port_ = server_->bind_to_any_port(options_.host);
    } else if (server_->bind_to_port(options_.host, options_.port)) {
        bound_port_ = options_.port;
    }
    if (bound_port_ <= 0) {
        throw std::runtime_error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
    }
}

void InspectionService::run() {
    if (bound_port_ <= 0) throw StateError("service is not bound");
    server_->listen_after_bind();
}

void InspectionService::stop() {
    if (server_) server_->stop();
}

}  // namespace dfq
