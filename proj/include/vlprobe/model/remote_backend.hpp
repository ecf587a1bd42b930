#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "vlprobe/model/backend.hpp"

namespace vlprobe::model {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  // "host:port" or ":port". Throws UsageError.
  static Endpoint parse(std::string_view text);
  std::string str() const { return host + ":" + std::to_string(port); }
};

// One blocking TCP connection carrying newline-delimited JSON. Request ids
// start at 1 and increase by one per request.
class WireConnection {
 public:
  WireConnection(const Endpoint& endpoint, std::chrono::milliseconds timeout);
  ~WireConnection();
  WireConnection(const WireConnection&) = delete;
  WireConnection& operator=(const WireConnection&) = delete;

  // Sends `request` (the id is filled in) and returns the matching response.
  // Error responses, id mismatches and transport failures raise BackendError
  // carrying the request/response transcript.
  nlohmann::json call(nlohmann::json request);

 private:
  std::string read_line();

  int fd_ = -1;
  std::uint64_t next_id_ = 1;
  std::string buffer_;
  std::string peer_;
};

// Client for an out-of-process model server. Connections are pooled, so
// parallel workers each get their own socket.
class RemoteBackend final : public ModelBackend {
 public:
  explicit RemoteBackend(Endpoint endpoint, std::size_t topk = 50,
                         std::chrono::milliseconds timeout = std::chrono::seconds(60));
  ~RemoteBackend() override;

  std::string name() const override { return name_; }
  Capabilities capabilities() const override { return caps_; }
  std::size_t feature_dim() const override { return feature_dim_; }

  // The distribution covers the reserved tokens plus the returned words;
  // probability mass the server did not return is parked on [PAD], which
  // never ranks.
  PredictionDistribution predict_masked(const VisualInput& image, const MaskedCaption& masked) const override;
  // Sends an empty ROI list.
  PredictionDistribution predict_text_only(const MaskedCaption& masked) const override;
  double itm_probability(const VisualInput& image, const Caption& caption) const override;
  AttentionTrace attention_trace(const VisualInput& image, const std::vector<std::string>& words,
                                 std::size_t target_word, RelevancyTarget target) const override;

 private:
  nlohmann::json call(nlohmann::json request) const;
  PredictionDistribution mlm(const std::vector<RoiFeature>* rois, const MaskedCaption& masked) const;

  Endpoint endpoint_;
  std::size_t topk_;
  std::chrono::milliseconds timeout_;
  std::string name_;
  Capabilities caps_;
  std::size_t feature_dim_ = 0;
  mutable std::mutex pool_mutex_;
  mutable std::vector<std::unique_ptr<WireConnection>> idle_;
};

}  // namespace vlprobe::model
