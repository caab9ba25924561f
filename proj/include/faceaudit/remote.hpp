#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "faceaudit/classifier.hpp"

namespace faceaudit {

/// Name of the environment variable the CLI reads the endpoint from.
inline constexpr const char* kEndpointEnvVar = "FACEAUDIT_ENDPOINT";

struct RemoteConfig {
  std::string endpoint;  // e.g. "http://127.0.0.1:8080/score"
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{100};
  double backoff_factor = 2.0;
  std::chrono::milliseconds max_backoff{2000};
  int max_in_flight = 4;
  std::chrono::seconds timeout{10};
};

/// Black-box scoring client. POSTs the base64-encoded PPM bytes of the
/// image and expects a JSON reply, either {"score": s} with s in [0,1]
/// or {"error": "no_face"}. Connection failures and 5xx replies are
/// retried with exponential backoff; anything else fails fast.
class RemoteClassifier : public Classifier {
 public:
  explicit RemoteClassifier(RemoteConfig config);
  ~RemoteClassifier() override;

  /// Throws NoFaceError, TransportError, or MalformedReplyError.
  GenderScore score(const RasterImage& img) const override;

  const RemoteConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Base64 of arbitrary bytes (standard alphabet, '=' padding).
std::string base64_encode(const std::string& bytes);

/// Serializes an image as binary PPM (P6) in memory.
std::string encode_ppm(const RasterImage& img);

}  // namespace faceaudit
