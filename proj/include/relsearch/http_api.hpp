#pragma once

#include "relsearch/service.hpp"

#include <filesystem>

namespace httplib {
class Server;
}

namespace relsearch {

/// Asset root for GET /v1/images: $WHITTLE_DATA_DIR, else the working directory.
std::filesystem::path asset_root_from_env();

/// Installs the /v1 JSON routes on `server`. Errors come back as {"error": msg}
/// with 400 (bad input), 404 (unknown session, dataset or image) or 409
/// (stale question token).
void register_routes(httplib::Server& server, Engine& engine, std::filesystem::path asset_root);

}  // namespace relsearch
