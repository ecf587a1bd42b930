#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "vlprobe/model/backend.hpp"
#include "vlprobe/model/params.hpp"

namespace vlprobe::model {

// The in-process toy transformer behind the ModelBackend contract.
class ToyBackend final : public ModelBackend {
 public:
  ToyBackend(Params<float> params, std::shared_ptr<const Vocabulary> vocab, std::string label = "toy");

  static std::shared_ptr<ToyBackend> from_checkpoint(const std::filesystem::path& path);

  std::string name() const override { return label_; }
  Capabilities capabilities() const override { return {true, true, true}; }
  std::size_t feature_dim() const override { return params_.config.d_v; }

  PredictionDistribution predict_masked(const VisualInput& image, const MaskedCaption& masked) const override;
  double itm_probability(const VisualInput& image, const Caption& caption) const override;
  // MaskedToken explains the logit of the most probable ranked token at the
  // target word; ItmMatch explains the "match" logit read from [CLS].
  AttentionTrace attention_trace(const VisualInput& image, const std::vector<std::string>& words,
                                 std::size_t target_word, RelevancyTarget target) const override;

  const Params<float>& params() const { return params_; }
  const std::shared_ptr<const Vocabulary>& vocab() const { return vocab_; }

 private:
  std::vector<TokenId> ids_for(const std::vector<std::string>& words) const;

  Params<float> params_;
  std::shared_ptr<const Vocabulary> vocab_;
  std::string label_;
};

}  // namespace vlprobe::model
