#pragma once

#include "faceaudit/gender.hpp"
#include "faceaudit/image.hpp"
#include "faceaudit/model.hpp"

namespace faceaudit {

/// Raised when a backend reports that no face was found in the image.
struct NoFaceError : std::runtime_error {
  NoFaceError() : std::runtime_error("no face detected") {}
};
/// Connection-level failure after retries were exhausted.
struct TransportError : std::runtime_error {
  explicit TransportError(const std::string& msg) : std::runtime_error(msg) {}
};
/// Reply that parses but violates the protocol (bad JSON, score outside [0,1]).
struct MalformedReplyError : std::runtime_error {
  explicit MalformedReplyError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Anything that maps an image to a male-probability score.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual GenderScore score(const RasterImage& img) const = 0;
};

/// Built-in differentiable classifier: preprocess + CompactNet forward.
class NetClassifier : public Classifier {
 public:
  explicit NetClassifier(CompactNet net)
      : net_(std::move(net)),
        prep_{net_.arch().input_side, net_.arch().input_channels} {}

  GenderScore score(const RasterImage& img) const override {
    return net_.score(prep_.run(img));
  }

  const CompactNet& net() const { return net_; }
  const Preprocessor& preprocessor() const { return prep_; }

 private:
  CompactNet net_;
  Preprocessor prep_;
};

}  // namespace faceaudit
