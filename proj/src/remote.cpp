#include "faceaudit/remote.hpp"

#include <httplib.h>
#include <json.hpp>

#include <mutex>
#include <condition_variable>
#include <sstream>
#include <thread>

namespace faceaudit {

namespace {

// Counting gate bounding concurrent score() calls.
class InFlightGate {
 public:
  explicit InFlightGate(int cap) : available_(cap) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return available_ > 0; });
    --available_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      ++available_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int available_;
};

struct GateGuard {
  InFlightGate& gate;
  explicit GateGuard(InFlightGate& g) : gate(g) { gate.acquire(); }
  ~GateGuard() { gate.release(); }
};

// Splits "http://host:port/path" into base and path.
struct ParsedEndpoint {
  std::string base;  // scheme://host:port
  std::string path;  // /path or "/"
};

ParsedEndpoint parse_endpoint(const std::string& endpoint) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos)
    throw std::invalid_argument("endpoint must start with http://");
  const auto path_start = endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {endpoint, "/"};
  return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

}  // namespace

std::string base64_encode(const std::string& bytes) {
  static constexpr char alphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                       (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                       static_cast<unsigned char>(bytes[i + 2]);
    out.push_back(alphabet[(v >> 18) & 63]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out.push_back(alphabet[(v >> 6) & 63]);
    out.push_back(alphabet[v & 63]);
  }
  const std::size_t rem = bytes.size() - i;
  if (rem == 1) {
    const unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
    out.push_back(alphabet[(v >> 18) & 63]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out += "==";
  } else if (rem == 2) {
    const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                       (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out.push_back(alphabet[(v >> 18) & 63]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out.push_back(alphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::string encode_ppm(const RasterImage& img) {
  std::ostringstream out;
  out << "P6\n" << img.width() << " " << img.height() << "\n255\n";
  for (const Rgb& p : img.pixels()) {
    out.put(static_cast<char>(p.r));
    out.put(static_cast<char>(p.g));
    out.put(static_cast<char>(p.b));
  }
  return out.str();
}

struct RemoteClassifier::Impl {
  RemoteConfig config;
  ParsedEndpoint endpoint;
  mutable InFlightGate gate;

  explicit Impl(RemoteConfig cfg)
      : config(std::move(cfg)), endpoint(parse_endpoint(config.endpoint)),
        gate(config.max_in_flight) {}
};

RemoteClassifier::RemoteClassifier(RemoteConfig config) {
  if (config.max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
  if (config.max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
  impl_ = std::make_unique<Impl>(std::move(config));
}

RemoteClassifier::~RemoteClassifier() = default;

const RemoteConfig& RemoteClassifier::config() const { return impl_->config; }

GenderScore RemoteClassifier::score(const RasterImage& img) const {
  GateGuard guard(impl_->gate);
  const std::string body = base64_encode(encode_ppm(img));

  auto backoff = impl_->config.initial_backoff;
  std::string last_failure = "no attempt made";
  for (int attempt = 0; attempt < impl_->config.max_attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff = std::min(std::chrono::milliseconds(static_cast<long>(
                             backoff.count() * impl_->config.backoff_factor)),
                         impl_->config.max_backoff);
    }

    httplib::Client client(impl_->endpoint.base);
    client.set_connection_timeout(impl_->config.timeout);
    client.set_read_timeout(impl_->config.timeout);
    httplib::Result res = client.Post(impl_->endpoint.path, body, "text/plain");

    if (!res) {
      last_failure = "connection failed: " + httplib::to_string(res.error());
      continue;  // transient
    }
    if (res->status >= 500) {
      last_failure = "server error " + std::to_string(res->status);
      continue;  // transient
    }
    if (res->status != 200)
      throw MalformedReplyError("unexpected HTTP status " + std::to_string(res->status));

    nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) throw MalformedReplyError("reply is not valid JSON");
    if (reply.contains("error")) {
      if (reply["error"] == "no_face") throw NoFaceError();
      throw MalformedReplyError("unknown error reply: " + reply["error"].dump());
    }
    if (!reply.contains("score") || !reply["score"].is_number())
      throw MalformedReplyError("reply carries no numeric score");
    const double s = reply["score"].get<double>();
    if (s < 0.0 || s > 1.0)
      throw MalformedReplyError("score outside [0,1]: " + std::to_string(s));
    return GenderScore{s};
  }
  throw TransportError(last_failure);
}

}  // namespace faceaudit
