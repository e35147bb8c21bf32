#pragma once

// Eigen must be seen before httplib: <resolv.h> defines a `_res` macro that
// collides with Eigen parameter names.
#include "bold/service/api.hpp"

#include <httplib.h>

namespace bold::service {

/// Binds every API route on an httplib server. Handlers run on httplib's
/// thread pool; per-campaign serialization lives in Api.
inline void mount(httplib::Server& server, Api& api) {
  const auto dispatch = [&api](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query[k] = v;
    const auto r = api.handle(req.method, req.path, req.body, query);
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    if (r.content_type == "application/json")
      res.set_content(r.body.dump(), "application/json");
    else
      res.set_content(r.text, r.content_type);
  };
  server.Get(R"(/campaigns.*)", dispatch);
  server.Post(R"(/campaigns.*)", dispatch);
}

}  // namespace bold::service
