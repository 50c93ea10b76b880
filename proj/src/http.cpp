/**
 * Copyright 2026 The finreid Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "httplib.h"
#include "json.hpp"

#include "finreid/service.hpp"

namespace finreid::service {

namespace {
using nlohmann::json;

void send_json(httplib::Response& res, int status, const std::string& body) {
  res.status = status;
  res.set_content(body, "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, json{{"error", message}, {"status", status}}.dump());
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& e) {
      send_error(res, e.status(), e.detail());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  };
}
}  // namespace

void install_routes(httplib::Server& server, ReviewService& service) {
  server.Get("/tasks/next", guarded([&service](const httplib::Request&, httplib::Response& res) {
               const auto t = service.next();
               if (!t) {
                 res.status = 204;
                 return;
               }
               send_json(res, 200, task_json(*t));
             }));
  server.Get(R"(/tasks/([^/]+))", guarded([&service](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, task_json(service.task(req.matches[1])));
             }));
  server.Post(R"(/tasks/([^/]+)/decision)",
              guarded([&service](const httplib::Request& req, httplib::Response& res) {
                json body;
                try {
                  body = json::parse(req.body);
                } catch (const json::exception&) {
                  throw ServiceError(400, "request body is not JSON");
                }
                if (!body.is_object() || !body.contains("action") || !body["action"].is_string())
                  throw ServiceError(400, "body needs a string 'action'");
                const Action action = parse_action(body["action"].get<std::string>());
                const auto str = [&](const char* key) {
                  if (!body.contains(key) || body[key].is_null()) return std::string();
                  if (!body[key].is_string()) throw ServiceError(400, std::string("'") + key + "' must be a string");
                  return body[key].get<std::string>();
                };
                bool override_candidates = false;
                if (body.contains("override")) {
                  if (!body["override"].is_boolean()) throw ServiceError(400, "'override' must be a boolean");
                  override_candidates = body["override"].get<bool>();
                }
                const ReviewTask t =
                    service.decide(req.matches[1], action, str("identity_id"), override_candidates, str("decided_by"));
                send_json(res, 200, task_json(t));
              }));
  server.Get(R"(/images/([^/]+))", guarded([&service](const httplib::Request& req, httplib::Response& res) {
               res.set_content(service.image_png(req.matches[1]), "image/png");
             }));
  server.Get("/stats", guarded([&service](const httplib::Request&, httplib::Response& res) {
               send_json(res, 200, stats_json(service.stats()));
             }));
}

}  // namespace finreid::service
