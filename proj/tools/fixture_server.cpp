// Reference implementation of the line-JSON backend protocol, answering from
// a recorded fixture directory. One JSON request per stdin line, one JSON
// response per stdout line; every response echoes the request "id".
//
//   ovlift-fixture-server <fixture_dir>
//
// Doubles as the test double for the subprocess backend: point
// backend.subprocess at this binary to replay a recording out-of-process.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovlift/backends.hpp"

using nlohmann::json;

namespace {

json handle(const ovlift::FixtureStore& store, const json& req) {
  json resp;
  resp["id"] = req.at("id");
  const std::string op = req.at("op").get<std::string>();
  if (op == "segment") {
    auto rec = store.find_mask(req.at("frame").get<int>(), req.value("prompt", -1));
    if (rec) {
      resp["mask_rle"] = rec->rle;
      resp["width"] = rec->width;
      resp["height"] = rec->height;
    } else {
      resp["mask_rle"] = nullptr;
    }
  } else if (op == "tag") {
    resp["tags"] = store.find_tags(req.at("frame").get<int>());
  } else if (op == "embed_image") {
    auto v = store.find_embedding(
        ovlift::crop_embed_key(req.at("frame").get<int>(), req.value("prompt", -1)));
    if (v)
      resp["vector"] = *v;
    else
      resp["vector"] = nullptr;
  } else if (op == "embed_text") {
    std::vector<std::vector<double>> rows;
    for (const auto& t : req.at("texts")) {
      auto v = store.find_embedding(ovlift::text_embed_key(t.get<std::string>()));
      if (!v) {
        resp["error"] = "no text embedding for \"" + t.get<std::string>() + "\"";
        return resp;
      }
      rows.push_back(std::move(*v));
    }
    resp["vectors"] = rows;
  } else {
    resp["error"] = "unknown op \"" + op + "\"";
  }
  return resp;
}

} // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: ovlift-fixture-server <fixture_dir>\n";
    return 2;
  }
  std::unique_ptr<ovlift::FixtureStore> store;
  try {
    store = std::make_unique<ovlift::FixtureStore>(argv[1]);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    json resp;
    try {
      json req = json::parse(line);
      resp = handle(*store, req);
    } catch (const std::exception& e) {
      resp["id"] = nullptr;
      resp["error"] = std::string("bad request: ") + e.what();
    }
    std::cout << resp.dump() << "\n" << std::flush;
  }
  return 0;
}
