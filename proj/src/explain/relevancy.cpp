#include "vlprobe/explain/relevancy.hpp"

#include <algorithm>

#include "vlprobe/error.hpp"

namespace vlprobe::explain {

using model::Tensor;

Tensor<double> rollout(const model::AttentionTrace& trace) {
  const std::size_t s = trace.seq_len;
  const std::size_t expected = trace.n_layers * trace.n_heads;
  if (trace.attention.size() != expected || trace.gradients.size() != expected)
    fail(ErrorKind::ShapeError, "rollout: trace does not hold layers x heads matrices");
  for (std::size_t i = 0; i < expected; ++i)
    if (trace.attention[i].rows != s || trace.attention[i].cols != s || !trace.attention[i].same_shape(trace.gradients[i]))
      fail(ErrorKind::ShapeError, "rollout: attention matrix is not seq_len x seq_len");

  Tensor<double> r(s, s);
  for (std::size_t i = 0; i < s; ++i) r(i, i) = 1.0;
  Tensor<double> a_bar(s, s);
  const double inv_heads = trace.n_heads ? 1.0 / static_cast<double>(trace.n_heads) : 0.0;
  for (std::size_t l = 0; l < trace.n_layers; ++l) {
    a_bar.zero();
    for (std::size_t h = 0; h < trace.n_heads; ++h) {
      const auto& a = trace.attention[l * trace.n_heads + h];
      const auto& g = trace.gradients[l * trace.n_heads + h];
      for (std::size_t i = 0; i < a.size(); ++i) a_bar.data[i] += std::max(a.data[i] * g.data[i], 0.0);
    }
    for (auto& v : a_bar.data) v *= inv_heads;
    Tensor<double> update(s, s);
    model::matmul_acc(a_bar.data.data(), r.data.data(), update.data.data(), s, s, s);
    for (std::size_t i = 0; i < r.size(); ++i) r.data[i] += update.data[i];
  }
  return r;
}

RelevancyMap relevancy_from_trace(const model::AttentionTrace& trace, model::RelevancyTarget target,
                                  std::vector<std::string> text_tokens) {
  if (trace.n_text + trace.n_rois != trace.seq_len || trace.target_position >= trace.seq_len)
    fail(ErrorKind::ShapeError, "relevancy: inconsistent trace layout");
  if (!text_tokens.empty() && text_tokens.size() != trace.n_text)
    fail(ErrorKind::ShapeError, "relevancy: token list does not match the text segment");
  const auto r = rollout(trace);
  RelevancyMap map;
  map.target = target;
  map.target_position = trace.target_position;
  map.text_tokens = std::move(text_tokens);
  const double* row = r.row(trace.target_position);
  map.text_scores.assign(row, row + trace.n_text);
  map.roi_scores.assign(row + trace.n_text, row + trace.seq_len);
  return map;
}

RelevancyMap relevancy(const model::ModelBackend& backend, const VisualInput& image,
                       const std::vector<std::string>& words, std::size_t target_word, model::RelevancyTarget target) {
  if (!backend.capabilities().attention_introspection)
    fail(ErrorKind::CapabilityError, "backend " + backend.name() + " does not expose attention");
  const auto trace = backend.attention_trace(image, words, target_word, target);
  std::vector<std::string> tokens;
  tokens.reserve(words.size() + 2);
  tokens.push_back("[CLS]");
  tokens.insert(tokens.end(), words.begin(), words.end());
  tokens.push_back("[SEP]");
  if (tokens.size() != trace.n_text) tokens.clear();
  return relevancy_from_trace(trace, target, std::move(tokens));
}

}  // namespace vlprobe::explain
