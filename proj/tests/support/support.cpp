#include "support.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "vlprobe/error.hpp"
#include "vlprobe/model/transformer.hpp"

namespace vlprobe::testkit {

using model::ModelConfig;
using model::Params;
using model::Tensor;

namespace {

struct GradCase {
  model::ModelInput input;
  std::vector<std::size_t> positions;
  std::vector<std::size_t> targets;
};

double loss_of(const Params<double>& p, const GradCase& c, Tensor<double>* d_mlm, std::vector<double>* d_itm,
               model::ForwardResult<double>* keep) {
  model::ForwardOptions opt;
  opt.mlm_positions = c.positions;
  opt.itm = true;
  auto fwd = model::forward(p, c.input, opt);
  double loss = 0.0;
  Tensor<double> g(fwd.mlm_logits.rows, fwd.mlm_logits.cols);
  for (std::size_t i = 0; i < c.positions.size(); ++i)
    loss += model::cross_entropy<double>({fwd.mlm_logits.row(i), fwd.mlm_logits.cols}, c.targets[i],
                                         {g.row(i), g.cols}, 1.0);
  std::vector<double> gi(2);
  loss += model::cross_entropy<double>(fwd.itm_logits, 1, gi, 1.0);
  if (d_mlm) *d_mlm = std::move(g);
  if (d_itm) *d_itm = std::move(gi);
  if (keep) *keep = std::move(fwd);
  return loss;
}

}  // namespace

std::vector<TensorGradError> gradient_check(std::size_t d_model, std::size_t n_layers, std::size_t n_heads,
                                            std::uint64_t seed, double h) {
  ModelConfig cfg;
  cfg.vocab_size = 12;
  cfg.d_model = d_model;
  cfg.n_heads = n_heads;
  cfg.n_layers = n_layers;
  cfg.d_v = 6;
  cfg.max_len = 10;
  auto params = Params<double>::init(cfg, seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> noise(0.0, 0.1);
  // Move gains and biases off their initial 1/0 values so every path is exercised.
  params.for_each([&](const std::string&, Tensor<double>& t) {
    for (auto& v : t.data) v += noise(rng);
  });

  GradCase c;
  std::vector<TokenId> words = {7, Vocabulary::kMask, 9, 5, Vocabulary::kMask};
  c.input = model::encode(words, random_image(rng, 3, cfg.d_v));
  c.positions = {model::ModelInput::word_position(1), model::ModelInput::word_position(4)};
  c.targets = {6, 10};

  model::ForwardResult<double> fwd;
  Tensor<double> d_mlm;
  std::vector<double> d_itm;
  loss_of(params, c, &d_mlm, &d_itm, &fwd);
  auto grads = Params<double>::zeros(cfg);
  model::backward(params, c.input, fwd, d_mlm, std::span<const double>(d_itm), grads);

  std::vector<Tensor<double>*> p_tensors;
  std::vector<std::string> names;
  params.for_each([&](const std::string& n, Tensor<double>& t) {
    names.push_back(n);
    p_tensors.push_back(&t);
  });
  std::vector<const Tensor<double>*> g_tensors;
  grads.for_each([&](const std::string&, const Tensor<double>& t) { g_tensors.push_back(&t); });

  std::vector<TensorGradError> out;
  for (std::size_t ti = 0; ti < p_tensors.size(); ++ti) {
    auto& t = *p_tensors[ti];
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t.data[i];
      t.data[i] = saved + h;
      const double up = loss_of(params, c, nullptr, nullptr, nullptr);
      t.data[i] = saved - h;
      const double down = loss_of(params, c, nullptr, nullptr, nullptr);
      t.data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = g_tensors[ti]->data[i];
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    out.push_back({names[ti], std::sqrt(diff2) / scale, std::sqrt(a2)});
  }
  return out;
}

std::vector<double> brute_force_accuracy(const std::vector<ProbeSample>& dataset, const model::ModelBackend& backend,
                                         const std::vector<probing::Condition>& conditions, std::size_t k,
                                         const lexicon::Lexicon& lexicon) {
  const auto& lem = lexicon.lemmatizer;
  std::vector<std::size_t> hits(conditions.size(), 0), evaluated(conditions.size(), 0);
  for (const auto& s : dataset) {
    if (s.pair_label != PairLabel::Positive) continue;
    // Target: gold index, else first known verb after position 0.
    std::size_t target = s.caption.words.size();
    if (s.target_index && *s.target_index < s.caption.words.size()) {
      target = *s.target_index;
    } else {
      for (std::size_t i = 1; i < s.caption.words.size(); ++i)
        if (lem.is_known_verb(lem.lemmatize(s.caption.words[i]))) {
          target = i;
          break;
        }
    }
    if (target == s.caption.words.size()) continue;
    Caption masked_base = s.caption;
    const MaskedCaption masked(masked_base, target);
    const std::string gold = lem.lemmatize(s.caption.words[target]);

    for (std::size_t c = 0; c < conditions.size(); ++c) {
      VisualInput image = s.image;
      auto zero = [](RoiFeature& r) {
        for (auto& f : r.feature) f = 0.0f;
      };
      std::optional<model::PredictionDistribution> dist;
      switch (conditions[c]) {
        case probing::Condition::Guided:
          dist.emplace(backend.predict_masked(image, masked));
          break;
        case probing::Condition::SubjectAblation: {
          std::size_t best = 0;
          double best_sim = -1.0;
          const std::string subj = lem.lemmatize(s.subject_word);
          for (std::size_t i = 0; i < image.rois.size(); ++i) {
            const double sim = lexicon.graph.similarity(subj, lem.lemmatize(image.rois[i].label));
            if (sim > best_sim || (sim == best_sim && image.rois[i].score > image.rois[best].score)) {
              best = i;
              best_sim = sim;
            }
          }
          const BBox sb = image.rois[best].bbox;
          for (auto& r : image.rois) {
            const double w = std::min(r.bbox.x2, sb.x2) - std::max(r.bbox.x1, sb.x1);
            const double hgt = std::min(r.bbox.y2, sb.y2) - std::max(r.bbox.y1, sb.y1);
            if (w > 0 && hgt > 0) zero(r);
          }
          dist.emplace(backend.predict_masked(image, masked));
          break;
        }
        case probing::Condition::WholeImage:
          for (auto& r : image.rois) zero(r);
          dist.emplace(backend.predict_masked(image, masked));
          break;
        case probing::Condition::TextOnly:
          dist.emplace(backend.predict_text_only(masked));
          break;
      }
      const auto& probs = dist->probs();
      std::vector<TokenId> order(probs.size());
      std::iota(order.begin(), order.end(), TokenId{0});
      std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return probs[a] > probs[b]; });
      std::size_t taken = 0;
      bool hit = false;
      for (TokenId id : order) {
        if (id == Vocabulary::kPad || id == Vocabulary::kCls || id == Vocabulary::kSep || id == Vocabulary::kMask)
          continue;
        if (taken++ == k) break;
        if (lem.lemmatize(dist->vocab().token(id)) == gold) {
          hit = true;
          break;
        }
      }
      ++evaluated[c];
      hits[c] += hit;
    }
  }
  std::vector<double> acc(conditions.size());
  for (std::size_t c = 0; c < conditions.size(); ++c)
    acc[c] = evaluated[c] ? static_cast<double>(hits[c]) / static_cast<double>(evaluated[c]) : 0.0;
  return acc;
}

BBox random_grid_box(std::mt19937_64& rng, int grid) {
  std::uniform_int_distribution<int> pick(0, grid);
  int x1, x2, y1, y2;
  do {
    x1 = pick(rng);
    x2 = pick(rng);
  } while (x1 == x2);
  do {
    y1 = pick(rng);
    y2 = pick(rng);
  } while (y1 == y2);
  const double g = grid;
  return {std::min(x1, x2) / g, std::min(y1, y2) / g, std::max(x1, x2) / g, std::max(y1, y2) / g};
}

bool overlap_oracle(const BBox& a, const BBox& b) {
  const bool x_disjoint = a.x2 <= b.x1 || b.x2 <= a.x1;
  const bool y_disjoint = a.y2 <= b.y1 || b.y2 <= a.y1;
  return !x_disjoint && !y_disjoint;
}

lexicon::SynsetGraph toy_graph() {
  std::istringstream in(
      "entity.n.01\tentity\t-\n"
      "animal.n.01\tanimal\tentity.n.01\n"
      "dog.n.01\tdog\tanimal.n.01\n"
      "cat.n.01\tcat\tanimal.n.01\n"
      "person.n.01\tperson,woman\tentity.n.01\n");
  return lexicon::SynsetGraph::parse(in);
}

VisualInput random_image(std::mt19937_64& rng, std::size_t n_rois, std::size_t d_v) {
  std::normal_distribution<float> f(0.0f, 1.0f);
  VisualInput img;
  img.image_id = "random";
  for (std::size_t i = 0; i < n_rois; ++i) {
    RoiFeature r;
    r.bbox = random_grid_box(rng);
    for (std::size_t j = 0; j < d_v; ++j) r.feature.push_back(f(rng));
    r.label = "roi" + std::to_string(i);
    r.score = 0.5;
    img.rois.push_back(std::move(r));
  }
  return img;
}

model::PredictionDistribution ConstantItmBackend::predict_masked(const VisualInput&, const MaskedCaption&) const {
  fail(ErrorKind::CapabilityError, "constant-itm has no MLM head");
}

StubServer::StubServer(Handler handler) : handler_(std::move(handler)) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 8) != 0)
    throw std::runtime_error("stub server: bind/listen failed");
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  thread_ = std::jthread([this] { serve(); });
}

StubServer::~StubServer() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
  ::close(listen_fd_);
}

std::vector<std::string> StubServer::received() const {
  std::lock_guard lock(mutex_);
  return received_;
}

void StubServer::serve() {
  std::vector<std::jthread> connections;
  while (!stop_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    connections.emplace_back([this, fd] { handle(fd); });
  }
}

void StubServer::handle(int fd) {
  timeval tv{0, 50000};
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  std::string buf;
  char chunk[4096];
  bool open = true;
  while (open && !stop_) {
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR)) continue;
    if (n <= 0) break;
    buf.append(chunk, static_cast<std::size_t>(n));
    for (auto nl = buf.find('\n'); nl != std::string::npos; nl = buf.find('\n')) {
      std::string line = buf.substr(0, nl);
      buf.erase(0, nl + 1);
      {
        std::lock_guard lock(mutex_);
        received_.push_back(line);
      }
      auto reply = handler_(line);
      if (!reply) {
        open = false;
        break;
      }
      *reply += '\n';
      ::send(fd, reply->data(), reply->size(), MSG_NOSIGNAL);
    }
  }
  ::close(fd);
}

}  // namespace vlprobe::testkit
