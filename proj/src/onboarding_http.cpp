#include "hai/onboarding_http.hpp"

#include <httplib.h>

namespace hai {

using nlohmann::json;

namespace {

void reply(httplib::Response& res, int status, json body) {
    body["v"] = 1;
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

// Maps library errors onto HTTP statuses.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const NotFoundError& e) {
        reply(res, 404, {{"error", e.what()}});
    } catch (const SessionStateError& e) {
        reply(res, 409, {{"error", e.what()}});
    } catch (const Error& e) {
        reply(res, 400, {{"error", e.what()}});
    } catch (const json::exception& e) {
        reply(res, 400, {{"error", std::string("malformed request: ") + e.what()}});
    }
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("request body: ") + e.what());
    }
}

json recommendation_json(const std::optional<Recommendation>& rec) {
    if (!rec) return json{{"recommendation", nullptr}};
    return json{{"recommendation",
                 {{"decision", rec->decision},
                  {"action", rec->decision ? "use_ai" : "use_own"},
                  {"region_id", rec->region_id},
                  {"description", rec->description ? json(*rec->description) : json(nullptr)},
                  {"stats",
                   {{"member_count", rec->stats.member_count},
                    {"consistency", rec->stats.consistency},
                    {"gain", rec->stats.gain},
                    {"human_accuracy", rec->stats.human_accuracy},
                    {"ai_accuracy", rec->stats.ai_accuracy}}}}}};
}

} // namespace

OnboardingServer::OnboardingServer(std::shared_ptr<OnboardingService> service,
                                   std::optional<std::filesystem::path> assets_dir)
    : service_(std::move(service)), server_(std::make_unique<httplib::Server>()) {
    auto svc = service_;
    auto& s = *server_;

    s.Post("/sessions", [svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = parse_body(req);
            const auto opts = session_options_from_json(body.contains("options") ? body["options"] : body);
            reply(res, 201, {{"session_id", svc->create_session(opts)}});
        });
    });
    s.Get(R"(/sessions/([^/]+)/next)", [svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { reply(res, 200, svc->next_item(req.matches[1])); });
    });
    s.Post(R"(/sessions/([^/]+)/answer)", [svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = parse_body(req);
            Submission sub;
            if (body.contains("answer") && !body["answer"].is_null()) sub.answer = body["answer"].get<std::string>();
            sub.used_ai = body.value("used_ai", false);
            if (body.contains("item_id") && !body["item_id"].is_null()) sub.item_id = body["item_id"].get<std::uint64_t>();
            reply(res, 200, svc->submit_answer(req.matches[1], sub));
        });
    });
    s.Get(R"(/sessions/([^/]+)/transcript)", [svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { reply(res, 200, svc->transcript(req.matches[1])); });
    });
    s.Get("/recommend", [svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            if (!req.has_param("example_id")) throw ValidationError("missing example_id parameter");
            reply(res, 200, recommendation_json(svc->context().recommend(req.get_param_value("example_id"))));
        });
    });
    s.Post("/recommend", [svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = parse_body(req);
            const auto emb = body.at("embedding").get<std::vector<double>>();
            const auto ai = body.value("ai_features", std::vector<double>{});
            reply(res, 200, recommendation_json(svc->context().recommend(emb, ai)));
        });
    });
    s.Get("/card", [svc](const httplib::Request&, httplib::Response& res) {
        reply(res, 200, {{"card", to_json(svc->context().card)}});
    });
    if (assets_dir) s.set_mount_point("/assets", assets_dir->string());
    s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        reply(res, res.status, {{"error", "no route for " + req.method + " " + req.path}});
    });
}

OnboardingServer::~OnboardingServer() { stop(); }

int OnboardingServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = server_->bind_to_any_port(host);
        if (bound < 0) throw BackendError("cannot bind " + host);
        return bound;
    }
    if (!server_->bind_to_port(host, port)) throw BackendError("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void OnboardingServer::listen() { server_->listen_after_bind(); }

void OnboardingServer::stop() {
    if (server_) server_->stop();
}

void OnboardingServer::wait_until_ready() const { server_->wait_until_ready(); }

} // namespace hai
