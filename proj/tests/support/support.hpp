#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <optional>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "vlprobe/core/dataset.hpp"
#include "vlprobe/lexicon/lexicon.hpp"
#include "vlprobe/model/backend.hpp"
#include "vlprobe/model/params.hpp"
#include "vlprobe/probing/guided.hpp"

namespace vlprobe::testkit {

// --- gradient oracle -------------------------------------------------------

struct TensorGradError {
  std::string name;
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double analytic_norm = 0.0;
};

// Compares backward() against central differences (step `h`) for every
// parameter tensor of a double-precision model with the given shape, on a
// loss mixing MLM cross-entropy at two positions and ITM cross-entropy.
std::vector<TensorGradError> gradient_check(std::size_t d_model, std::size_t n_layers, std::size_t n_heads,
                                            std::uint64_t seed, double h = 1e-4);

// --- brute-force probe oracle ----------------------------------------------

// Direct re-implementation of guided masking: no pipeline pieces besides the
// backend and the lexicon tables. Returns accuracy per condition in the same
// order as `conditions`.
std::vector<double> brute_force_accuracy(const std::vector<ProbeSample>& dataset, const model::ModelBackend& backend,
                                         const std::vector<probing::Condition>& conditions, std::size_t k,
                                         const lexicon::Lexicon& lexicon);

// --- geometry --------------------------------------------------------------

// Box with corners on a coarse grid, so shared edges and corners are common.
BBox random_grid_box(std::mt19937_64& rng, int grid = 10);
// Independent positive-area overlap oracle.
bool overlap_oracle(const BBox& a, const BBox& b);

// --- fixtures ---------------------------------------------------------------

// Five-node graph: entity -> animal -> {dog, cat}, entity -> person (woman).
lexicon::SynsetGraph toy_graph();
VisualInput random_image(std::mt19937_64& rng, std::size_t n_rois, std::size_t d_v);

// Backend answering ITM with a fixed probability.
class ConstantItmBackend final : public model::ModelBackend {
 public:
  explicit ConstantItmBackend(double p) : p_(p) {}
  std::string name() const override { return "constant-itm"; }
  model::Capabilities capabilities() const override { return {false, true, false}; }
  model::PredictionDistribution predict_masked(const VisualInput&, const MaskedCaption&) const override;
  double itm_probability(const VisualInput&, const Caption&) const override { return p_; }

 private:
  double p_;
};

// Single-threaded loopback server: every received line is passed to
// `handler` and the returned string (without newline) is sent back. A
// handler returning std::nullopt closes the connection.
class StubServer {
 public:
  using Handler = std::function<std::optional<std::string>(const std::string&)>;
  explicit StubServer(Handler handler);
  ~StubServer();
  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;

  std::uint16_t port() const { return port_; }
  std::vector<std::string> received() const;

 private:
  void serve();
  void handle(int fd);

  Handler handler_;
  int listen_fd_ = -1;
  std::atomic<bool> stop_{false};
  std::uint16_t port_ = 0;
  mutable std::mutex mutex_;
  std::vector<std::string> received_;
  std::jthread thread_;
};

}  // namespace vlprobe::testkit
