#include <fstream>

#include <fmt/format.h>
#include <torch/serialize.h>

#include "higan/error.hpp"
#include "higan/training.hpp"

namespace higan::training {

namespace fs = std::filesystem;
using Kind = CheckpointError::Kind;

namespace {

torch::serialize::InputArchive open_archive(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw CheckpointError(Kind::Io, fmt::format("no checkpoint at '{}'", path.string()));
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw CheckpointError(Kind::Corrupt,
                          fmt::format("'{}' is not a readable checkpoint: {}", path.string(), e.what_without_backtrace()));
  }
  return archive;
}

TrainConfig read_header(torch::serialize::InputArchive& archive, const fs::path& path) {
  c10::IValue version;
  if (!archive.try_read("schema_version", version) || !version.isInt()) {
    throw CheckpointError(Kind::Corrupt, fmt::format("'{}' has no schema version", path.string()));
  }
  if (version.toInt() != kCheckpointSchemaVersion) {
    throw CheckpointError(Kind::Version, fmt::format("'{}' has schema version {}, this build reads version {}",
                                                     path.string(), version.toInt(), kCheckpointSchemaVersion));
  }
  c10::IValue text;
  if (!archive.try_read("config", text) || !text.isString()) {
    throw CheckpointError(Kind::Corrupt, fmt::format("'{}' has no config snapshot", path.string()));
  }
  try {
    return from_text(text.toStringRef());
  } catch (const InvalidArgument& e) {
    throw CheckpointError(Kind::Corrupt, fmt::format("'{}' carries an invalid config: {}", path.string(), e.what()));
  }
}

}  // namespace

void Trainer::save_checkpoint(const fs::path& path) const {
  torch::serialize::OutputArchive archive;
  archive.write("schema_version", c10::IValue(kCheckpointSchemaVersion));
  archive.write("config", c10::IValue(to_text(config_)));
  archive.write("iteration", c10::IValue(iteration_));

  torch::serialize::OutputArchive running;
  for (const auto& [name, value] : running_) running.write(name, c10::IValue(value));
  archive.write("running", running);

  torch::serialize::OutputArchive model;
  model_->save(model);
  archive.write("model", model);

  for (const auto& s : slots_) {
    if (!s.adam) continue;
    torch::serialize::OutputArchive optim;
    s.adam->save(optim);
    archive.write(fmt::format("optim_{}", to_string(s.id)), optim);
  }

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  try {
    archive.save_to(tmp.string());
    fs::rename(tmp, path);
  } catch (const std::exception& e) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw CheckpointError(Kind::Io, fmt::format("cannot write checkpoint '{}': {}", path.string(), e.what()));
  }
}

std::unique_ptr<Trainer> Trainer::load_checkpoint(const fs::path& path) {
  auto archive = open_archive(path);
  auto config = read_header(archive, path);
  try {
    auto trainer = std::make_unique<Trainer>(std::move(config));

    c10::IValue iteration;
    if (!archive.try_read("iteration", iteration) || !iteration.isInt()) {
      throw CheckpointError(Kind::Corrupt, fmt::format("'{}' has no iteration counter", path.string()));
    }
    torch::serialize::InputArchive model;
    archive.read("model", model);
    trainer->model_->load(model);

    for (auto& s : trainer->slots_) {
      if (!s.adam) continue;
      torch::serialize::InputArchive optim;
      archive.read(fmt::format("optim_{}", to_string(s.id)), optim);
      s.adam->load(optim);
    }

    std::map<std::string, double> running;
    torch::serialize::InputArchive running_archive;
    if (archive.try_read("running", running_archive)) {
      for (const auto& key : running_archive.keys()) {
        c10::IValue v;
        running_archive.read(key, v);
        running[key] = v.toDouble();
      }
    }
    trainer->iteration_ = iteration.toInt();
    trainer->running_ = std::move(running);
    return trainer;
  } catch (const CheckpointError&) {
    throw;
  } catch (const c10::Error& e) {
    throw CheckpointError(Kind::Corrupt,
                          fmt::format("checkpoint '{}' is damaged: {}", path.string(), e.what_without_backtrace()));
  } catch (const InvalidArgument& e) {
    throw CheckpointError(Kind::Corrupt, fmt::format("checkpoint '{}' is inconsistent: {}", path.string(), e.what()));
  }
}

TrainConfig checkpoint_config(const fs::path& path) {
  auto archive = open_archive(path);
  return read_header(archive, path);
}

}  // namespace higan::training
