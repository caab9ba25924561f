#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <string>
#include <thread>

#include "faceaudit/remote.hpp"

using namespace faceaudit;

TEST_CASE("base64 rfc 4648 vectors") {
  CHECK(base64_encode("") == "");
  CHECK(base64_encode("f") == "Zg==");
  CHECK(base64_encode("fo") == "Zm8=");
  CHECK(base64_encode("foo") == "Zm9v");
  CHECK(base64_encode("foob") == "Zm9vYg==");
  CHECK(base64_encode("fooba") == "Zm9vYmE=");
  CHECK(base64_encode("foobar") == "Zm9vYmFy");
  CHECK(base64_encode(std::string("\x00\xff", 2)) == "AP8=");
}

TEST_CASE("encode_ppm emits a binary P6 stream") {
  RasterImage img(2, 1);
  img.at(0, 0) = {1, 2, 3};
  img.at(1, 0) = {250, 251, 252};
  const std::string expect = std::string("P6\n2 1\n255\n") +
                             std::string("\x01\x02\x03", 3) +
                             std::string("\xfa\xfb\xfc", 3);
  CHECK(encode_ppm(img) == expect);
}

namespace {

// In-process scoring stub bound to an ephemeral port.
struct StubServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;

  explicit StubServer(httplib::Server::Handler handler) {
    server.Post("/score", std::move(handler));
    port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~StubServer() {
    server.stop();
    thread.join();
  }

  RemoteConfig config() const {
    RemoteConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/score";
    cfg.initial_backoff = std::chrono::milliseconds(1);
    cfg.max_backoff = std::chrono::milliseconds(5);
    return cfg;
  }
};

RasterImage tiny_image() {
  RasterImage img(2, 2);
  img.at(0, 0) = {10, 20, 30};
  img.at(1, 1) = {200, 100, 50};
  return img;
}

}  // namespace

TEST_CASE("remote classifier posts base64 ppm and parses the score") {
  std::string seen_body;
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    res.set_content("{\"score\": 0.42}", "application/json");
  });

  RemoteClassifier classifier(stub.config());
  const GenderScore score = classifier.score(tiny_image());
  CHECK(score.s == doctest::Approx(0.42));
  CHECK(score.decision() == Gender::Female);
  CHECK(seen_body == base64_encode(encode_ppm(tiny_image())));
}

TEST_CASE("no_face reply raises NoFaceError") {
  StubServer stub([](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"error\": \"no_face\"}", "application/json");
  });
  RemoteClassifier classifier(stub.config());
  CHECK_THROWS_AS(classifier.score(tiny_image()), NoFaceError);
}

TEST_CASE("protocol violations raise MalformedReplyError") {
  SUBCASE("score outside the unit interval") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
      res.set_content("{\"score\": 1.3}", "application/json");
    });
    CHECK_THROWS_AS(RemoteClassifier(stub.config()).score(tiny_image()), MalformedReplyError);
  }
  SUBCASE("non-JSON body") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
      res.set_content("not json at all", "text/plain");
    });
    CHECK_THROWS_AS(RemoteClassifier(stub.config()).score(tiny_image()), MalformedReplyError);
  }
  SUBCASE("missing score field") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
      res.set_content("{\"confidence\": 0.9}", "application/json");
    });
    CHECK_THROWS_AS(RemoteClassifier(stub.config()).score(tiny_image()), MalformedReplyError);
  }
  SUBCASE("unexpected status fails fast") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
      res.status = 404;
      res.set_content("gone", "text/plain");
    });
    CHECK_THROWS_AS(RemoteClassifier(stub.config()).score(tiny_image()), MalformedReplyError);
  }
}

TEST_CASE("5xx replies are retried until the server recovers") {
  std::atomic<int> calls{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    if (calls.fetch_add(1) < 2) {
      res.status = 503;
      res.set_content("busy", "text/plain");
    } else {
      res.set_content("{\"score\": 0.75}", "application/json");
    }
  });

  RemoteClassifier classifier(stub.config());
  CHECK(classifier.score(tiny_image()).s == doctest::Approx(0.75));
  CHECK(calls.load() == 3);
}

TEST_CASE("persistent 5xx exhausts the attempt budget") {
  std::atomic<int> calls{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    calls.fetch_add(1);
    res.status = 500;
    res.set_content("broken", "text/plain");
  });

  RemoteConfig cfg = stub.config();
  cfg.max_attempts = 3;
  RemoteClassifier classifier(cfg);
  CHECK_THROWS_AS(classifier.score(tiny_image()), TransportError);
  CHECK(calls.load() == 3);
}

TEST_CASE("unreachable endpoints raise TransportError") {
  RemoteConfig cfg;
  cfg.endpoint = "http://127.0.0.1:1/score";  // reserved port, nothing listens
  cfg.max_attempts = 2;
  cfg.initial_backoff = std::chrono::milliseconds(1);
  RemoteClassifier classifier(cfg);
  CHECK_THROWS_AS(classifier.score(tiny_image()), TransportError);
}

TEST_CASE("remote config is validated") {
  RemoteConfig cfg;
  cfg.endpoint = "127.0.0.1/score";  // no scheme
  CHECK_THROWS_AS(RemoteClassifier{cfg}, std::invalid_argument);
  cfg.endpoint = "http://127.0.0.1/score";
  cfg.max_attempts = 0;
  CHECK_THROWS_AS(RemoteClassifier{cfg}, std::invalid_argument);
}
