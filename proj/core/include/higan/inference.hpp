#pragma once

#include <optional>
#include <vector>

#include "higan/dataset.hpp"
#include "higan/image.hpp"
#include "higan/imaging.hpp"
#include "higan/metrics.hpp"
#include "higan/models.hpp"

namespace higan::inference {

/// Raw generator outputs mapped back to [0, 1], at input resolution.
/// A disabled regularizer echoes its (unmasked) input plane.
struct Prediction {
  ImageTensor rgb;
  ImageTensor depth;
  ImageTensor edge;
  ImageTensor label;

  metrics::RgbdPrediction rgbd() const { return {rgb, depth}; }
};

/// Runs the model in eval mode without gradients. Inputs whose sides are not
/// multiples of 4 are replicate-padded (padding counts as known pixels) and
/// the outputs cropped back. The module's training flag is restored afterwards.
std::vector<Prediction> predict(models::HiGanModel& model, const data::Batch& batch);
Prediction predict(models::HiGanModel& model, const data::SampleBundle& sample);

/// What a user hands to the inpaint command.
struct InpaintInputs {
  ImageTensor rgb;
  ImageTensor depth;
  Mask mask;
  std::optional<ImageTensor> edge;
  std::optional<LabelMap> label;
};

struct PreparedInputs {
  data::SampleBundle bundle;
  bool edge_derived = false;
  bool label_defaulted = false;
};

/// Fills the optional planes: edges from Canny on the RGB luma, labels from an
/// all-zero class map. Throws InvalidArgument on size or channel mismatch.
PreparedInputs prepare(InpaintInputs inputs, CannyThresholds canny, int num_classes);

}  // namespace higan::inference
