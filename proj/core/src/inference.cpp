#include "higan/inference.hpp"

#include <fmt/format.h>
#include <torch/torch.h>

#include "higan/error.hpp"

namespace higan::inference {

namespace {

namespace F = torch::nn::functional;

ImageTensor to_image(const torch::Tensor& plane) {
  // plane: C x H x W in model space
  auto unit = ((torch::nan_to_num(plane, 0.0) + 1.0) * 0.5).clamp(0.0, 1.0).to(torch::kFloat32).contiguous();
  std::vector<float> values(unit.data_ptr<float>(), unit.data_ptr<float>() + unit.numel());
  return ImageTensor::from_data(static_cast<int>(unit.size(1)), static_cast<int>(unit.size(2)),
                                static_cast<int>(unit.size(0)), std::move(values));
}

torch::Tensor pad_to(const torch::Tensor& t, std::int64_t pad_bottom, std::int64_t pad_right, bool zeros) {
  if (pad_bottom == 0 && pad_right == 0) return t;
  if (zeros) return F::pad(t, F::PadFuncOptions({0, pad_right, 0, pad_bottom}).mode(torch::kConstant).value(0));
  return F::pad(t, F::PadFuncOptions({0, pad_right, 0, pad_bottom}).mode(torch::kReplicate));
}

class ModeGuard {
 public:
  explicit ModeGuard(models::HiGanModel& model) : model_(model), was_training_(model->is_training()) {
    model_->eval();
  }
  ~ModeGuard() { model_->train(was_training_); }
  ModeGuard(const ModeGuard&) = delete;
  ModeGuard& operator=(const ModeGuard&) = delete;

 private:
  models::HiGanModel& model_;
  bool was_training_;
};

}  // namespace

std::vector<Prediction> predict(models::HiGanModel& model, const data::Batch& batch) {
  ModeGuard mode(model);
  torch::NoGradGuard no_grad;
  const auto dtype = model->parameters().front().scalar_type();
  auto t = models::to_tensors(batch, dtype);
  const std::int64_t h = t.rgb.size(2);
  const std::int64_t w = t.rgb.size(3);
  const std::int64_t pb = (4 - h % 4) % 4;
  const std::int64_t pr = (4 - w % 4) % 4;
  for (auto* plane : {&t.rgb, &t.depth, &t.edge, &t.label, &t.masked_rgb, &t.masked_depth, &t.masked_edge,
                      &t.masked_label}) {
    *plane = pad_to(*plane, pb, pr, false);
  }
  t.mask = pad_to(t.mask, pb, pr, true);

  const auto out = model->forward(t);
  const auto crop = [&](const torch::Tensor& x) { return x.index({"...", torch::indexing::Slice(0, h),
                                                                  torch::indexing::Slice(0, w)}); };
  std::vector<Prediction> predictions;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto k = static_cast<std::int64_t>(i);
    Prediction p;
    p.rgb = to_image(crop(out.combined.rgb)[k]);
    p.depth = to_image(crop(out.combined.depth)[k]);
    p.edge = model->config().edge_enabled ? to_image(crop(out.edge.reconstruction)[k]) : batch.samples[i].edge;
    p.label = model->config().label_enabled ? to_image(crop(out.label.reconstruction)[k]) : batch.samples[i].label;
    predictions.push_back(std::move(p));
  }
  return predictions;
}

Prediction predict(models::HiGanModel& model, const data::SampleBundle& sample) {
  data::Batch batch;
  batch.indices = {0};
  batch.samples = {sample};
  return std::move(predict(model, batch).front());
}

PreparedInputs prepare(InpaintInputs inputs, CannyThresholds canny, int num_classes) {
  const int h = inputs.rgb.height();
  const int w = inputs.rgb.width();
  const auto check = [&](int ph, int pw, const char* what) {
    if (ph != h || pw != w) {
      throw InvalidArgument(fmt::format("{} is {}x{} but the RGB image is {}x{}", what, pw, ph, w, h));
    }
  };
  if (inputs.rgb.channels() != 3) throw InvalidArgument("RGB input must have 3 channels");
  if (inputs.depth.channels() != 1) throw InvalidArgument("depth input must have 1 channel");
  check(inputs.depth.height(), inputs.depth.width(), "depth");
  check(inputs.mask.height(), inputs.mask.width(), "mask");

  PreparedInputs out;
  ImageTensor edge;
  if (inputs.edge) {
    if (inputs.edge->channels() != 1) throw InvalidArgument("edge input must have 1 channel");
    check(inputs.edge->height(), inputs.edge->width(), "edge map");
    edge = std::move(*inputs.edge);
  } else {
    edge = canny_edges(to_grayscale(inputs.rgb), canny);
    out.edge_derived = true;
  }
  LabelMap label(h, w, num_classes, 0);
  if (inputs.label) {
    check(inputs.label->height(), inputs.label->width(), "label map");
    label = std::move(*inputs.label);
  } else {
    out.label_defaulted = true;
  }
  out.bundle = data::SampleBundle::assemble(std::move(inputs.rgb), std::move(inputs.depth), std::move(edge),
                                            encode_label(label), std::move(inputs.mask));
  return out;
}

}  // namespace higan::inference
