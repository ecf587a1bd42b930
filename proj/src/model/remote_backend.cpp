#include "vlprobe/model/remote_backend.hpp"

#include <netdb.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <unordered_set>


#include "vlprobe/error.hpp"

namespace vlprobe::model {

using nlohmann::json;

namespace {

[[noreturn]] void wire_fail(const std::string& peer, const std::string& what, const std::string& request,
                            const std::string& response = {}) {
  std::string msg = "remote " + peer + ": " + what + "\n  > " + request;
  if (!response.empty()) msg += "\n  < " + response;
  fail(ErrorKind::BackendError, msg);
}

json roi_json(const RoiFeature& roi) {
  json feature = json::array();
  for (float f : roi.feature) feature.push_back(static_cast<double>(f));
  return {{"bbox", {roi.bbox.x1, roi.bbox.y1, roi.bbox.x2, roi.bbox.y2}},
          {"feature", std::move(feature)},
          {"label", roi.label},
          {"score", roi.score}};
}

json rois_json(const std::vector<RoiFeature>* rois) {
  json out = json::array();
  if (rois)
    for (const auto& r : *rois) out.push_back(roi_json(r));
  return out;
}

Tensor<double> matrix_from(const json& rows, std::size_t n) {
  if (!rows.is_array() || rows.size() != n) fail(ErrorKind::BackendError, "attn: matrix has wrong row count");
  Tensor<double> t(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = rows[i];
    if (!row.is_array() || row.size() != n) fail(ErrorKind::BackendError, "attn: matrix has wrong column count");
    for (std::size_t j = 0; j < n; ++j) t(i, j) = row[j].get<double>();
  }
  return t;
}

}  // namespace

Endpoint Endpoint::parse(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos) fail(ErrorKind::UsageError, "endpoint must be host:port, got '" + std::string(text) + "'");
  Endpoint e;
  if (colon > 0) e.host = std::string(text.substr(0, colon));
  const auto port = text.substr(colon + 1);
  unsigned value = 0;
  auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
  if (ec != std::errc() || ptr != port.data() + port.size() || value == 0 || value > 65535)
    fail(ErrorKind::UsageError, "bad port in endpoint '" + std::string(text) + "'");
  e.port = static_cast<std::uint16_t>(value);
  return e;
}

WireConnection::WireConnection(const Endpoint& endpoint, std::chrono::milliseconds timeout) : peer_(endpoint.str()) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(endpoint.port);
  if (int rc = ::getaddrinfo(endpoint.host.c_str(), port.c_str(), &hints, &res); rc != 0)
    fail(ErrorKind::BackendError, "remote " + peer_ + ": cannot resolve host: " + ::gai_strerror(rc));
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
  int last_errno = 0;
  for (auto* ai = res; ai; ai = ai->ai_next) {
    int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) {
      last_errno = errno;
      continue;
    }
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      fd_ = fd;
      break;
    }
    last_errno = errno;
    ::close(fd);
  }
  if (fd_ < 0) fail(ErrorKind::BackendError, "remote " + peer_ + ": connect failed: " + std::strerror(last_errno));
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

WireConnection::~WireConnection() {
  if (fd_ >= 0) ::close(fd_);
}

std::string WireConnection::read_line() {
  for (;;) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    char chunk[4096];
    ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n == 0) throw std::runtime_error("connection closed by peer");
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(errno == EAGAIN || errno == EWOULDBLOCK ? "timed out waiting for response"
                                                                       : std::strerror(errno));
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

json WireConnection::call(json request) {
  const std::uint64_t id = next_id_++;
  request["id"] = id;
  const std::string line = request.dump();
  const std::string wire = line + "\n";
  std::size_t sent = 0;
  while (sent < wire.size()) {
    ssize_t n = ::send(fd_, wire.data() + sent, wire.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      wire_fail(peer_, std::string("send failed: ") + std::strerror(errno), line);
    }
    sent += static_cast<std::size_t>(n);
  }
  std::string reply;
  try {
    reply = read_line();
  } catch (const std::runtime_error& e) {
    wire_fail(peer_, e.what(), line);
  }
  json response;
  try {
    response = json::parse(reply);
  } catch (const json::exception&) {
    wire_fail(peer_, "response is not valid JSON", line, reply);
  }
  if (!response.is_object()) wire_fail(peer_, "response is not an object", line, reply);
  if (!response.contains("id") || !response["id"].is_number_unsigned() || response["id"].get<std::uint64_t>() != id)
    wire_fail(peer_, "response id does not match request id " + std::to_string(id), line, reply);
  if (auto it = response.find("error"); it != response.end() && !it->is_null()) {
    const auto code = it->value("code", -1);
    const auto message = it->value("message", std::string("unspecified"));
    wire_fail(peer_, "server error " + std::to_string(code) + ": " + message, line, reply);
  }
  return response;
}

RemoteBackend::RemoteBackend(Endpoint endpoint, std::size_t topk, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), topk_(topk), timeout_(timeout) {
  if (topk_ == 0) fail(ErrorKind::UsageError, "remote backend: topk must be positive");
  const auto info = call({{"op", "info"}});
  try {
    name_ = "remote:" + info.at("model").get<std::string>();
    for (const auto& c : info.at("capabilities")) {
      const auto cap = c.get<std::string>();
      if (cap == "mlm") caps_.mlm = true;
      else if (cap == "itm") caps_.itm = true;
      else if (cap == "attn") caps_.attention_introspection = true;
    }
    feature_dim_ = info.value("feature_dim", std::size_t{0});
  } catch (const json::exception& e) {
    fail(ErrorKind::BackendError, "remote " + endpoint_.str() + ": malformed info response: " + e.what());
  }
}

RemoteBackend::~RemoteBackend() = default;

json RemoteBackend::call(json request) const {
  std::unique_ptr<WireConnection> conn;
  {
    std::lock_guard lock(pool_mutex_);
    if (!idle_.empty()) {
      conn = std::move(idle_.back());
      idle_.pop_back();
    }
  }
  if (!conn) conn = std::make_unique<WireConnection>(endpoint_, timeout_);
  // A connection that failed mid-call is dropped rather than returned.
  json response = conn->call(std::move(request));
  std::lock_guard lock(pool_mutex_);
  idle_.push_back(std::move(conn));
  return response;
}

PredictionDistribution RemoteBackend::mlm(const std::vector<RoiFeature>* rois, const MaskedCaption& masked) const {
  const auto response = call({{"op", "mlm"},
                              {"text", masked.words()},
                              {"mask_index", masked.mask_index()},
                              {"rois", rois_json(rois)},
                              {"options", {{"topk", topk_}}}});
  std::vector<std::string> words;
  std::vector<double> probs;
  try {
    double prev = INFINITY;
    std::unordered_set<std::string> seen;
    for (const auto& entry : response.at("topk")) {
      auto token = entry.at("token").get<std::string>();
      const double p = entry.at("prob").get<double>();
      if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::BackendError, "mlm: probability outside [0,1]");
      if (p > prev) fail(ErrorKind::BackendError, "mlm: probabilities are not descending");
      if (!seen.insert(token).second) fail(ErrorKind::BackendError, "mlm: duplicate token '" + token + "'");
      prev = p;
      words.push_back(std::move(token));
      probs.push_back(p);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::BackendError, "remote " + endpoint_.str() + ": malformed mlm response: " + e.what());
  }

  // Returned words that collide with a reserved token are folded into it.
  Vocabulary reserved;
  std::vector<std::string> extra;
  std::vector<double> full(Vocabulary::kNumReserved, 0.0);
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (reserved.contains(words[i])) {
      full[reserved.id(words[i])] += probs[i];
    } else {
      extra.push_back(words[i]);
      full.push_back(probs[i]);
    }
  }
  double sum = 0.0;
  for (double p : full) sum += p;
  if (sum > 1.0 + PredictionDistribution::kSumTolerance)
    fail(ErrorKind::BackendError, "mlm: returned probabilities sum to " + std::to_string(sum));
  full[Vocabulary::kPad] += std::max(0.0, 1.0 - sum);
  std::shared_ptr<const Vocabulary> vocab;
  try {
    vocab = std::make_shared<const Vocabulary>(extra);
  } catch (const Error& e) {
    fail(ErrorKind::BackendError, std::string("mlm: bad token list: ") + e.what());
  }
  return PredictionDistribution(std::move(vocab), std::move(full));
}

PredictionDistribution RemoteBackend::predict_masked(const VisualInput& image, const MaskedCaption& masked) const {
  return mlm(&image.rois, masked);
}

PredictionDistribution RemoteBackend::predict_text_only(const MaskedCaption& masked) const {
  return mlm(nullptr, masked);
}

double RemoteBackend::itm_probability(const VisualInput& image, const Caption& caption) const {
  const auto response = call({{"op", "itm"}, {"text", caption.words}, {"rois", rois_json(&image.rois)}});
  double p = 0.0;
  try {
    p = response.at("match_prob").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorKind::BackendError, "remote " + endpoint_.str() + ": malformed itm response: " + e.what());
  }
  if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::BackendError, "itm: match_prob outside [0,1]");
  return p;
}

AttentionTrace RemoteBackend::attention_trace(const VisualInput& image, const std::vector<std::string>& words,
                                              std::size_t target_word, RelevancyTarget target) const {
  if (!caps_.attention_introspection) return ModelBackend::attention_trace(image, words, target_word, target);
  const auto response = call({{"op", "attn"},
                              {"text", words},
                              {"target", target == RelevancyTarget::ItmMatch ? "itm" : "mlm"},
                              {"target_index", target_word},
                              {"rois", rois_json(&image.rois)}});
  AttentionTrace trace;
  try {
    trace.n_text = response.at("n_text").get<std::size_t>();
    trace.n_rois = image.rois.size();
    trace.seq_len = trace.n_text + trace.n_rois;
    trace.target_position = response.at("target_position").get<std::size_t>();
    const auto& attn = response.at("attention");
    const auto& grad = response.at("gradients");
    trace.n_layers = attn.size();
    trace.n_heads = trace.n_layers ? attn.at(0).size() : 0;
    if (grad.size() != trace.n_layers) fail(ErrorKind::BackendError, "attn: gradient layer count mismatch");
    for (std::size_t l = 0; l < trace.n_layers; ++l) {
      if (attn[l].size() != trace.n_heads || grad[l].size() != trace.n_heads)
        fail(ErrorKind::BackendError, "attn: head count mismatch");
      for (std::size_t h = 0; h < trace.n_heads; ++h) {
        trace.attention.push_back(matrix_from(attn[l][h], trace.seq_len));
        trace.gradients.push_back(matrix_from(grad[l][h], trace.seq_len));
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::BackendError, "remote " + endpoint_.str() + ": malformed attn response: " + e.what());
  }
  if (trace.target_position >= trace.seq_len) fail(ErrorKind::BackendError, "attn: target position out of range");
  return trace;
}

}  // namespace vlprobe::model
