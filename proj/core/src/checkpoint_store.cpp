#include "meatlab/checkpoint.hpp"

#include "meatlab/checkpoint_io.hpp"
#include "meatlab/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <mutex>

namespace meat {

bool CheckpointStore::contains(int epoch) const {
    const auto e = epochs();
    return std::binary_search(e.begin(), e.end(), epoch);
}

std::vector<int> CheckpointStore::epochs_between(int lo, int hi) const {
    std::vector<int> out;
    for (int e : epochs())
        if (e >= lo && e <= hi) out.push_back(e);
    return out;
}

// ---------------------------------------------------------------------------

void MemoryCheckpointStore::append(const Checkpoint& ckpt) {
    std::unique_lock lock(mutex_);
    if (!items_.empty() && ckpt.epoch <= items_.rbegin()->first) {
        throw UsageError("checkpoint store: epoch " + std::to_string(ckpt.epoch) + " does not follow " +
                         std::to_string(items_.rbegin()->first));
    }
    items_.emplace(ckpt.epoch, ckpt);
}

Checkpoint MemoryCheckpointStore::load(int epoch) const {
    std::shared_lock lock(mutex_);
    const auto it = items_.find(epoch);
    if (it == items_.end()) throw ArgumentError("checkpoint store: no checkpoint for epoch " + std::to_string(epoch));
    return it->second;
}

std::vector<int> MemoryCheckpointStore::epochs() const {
    std::shared_lock lock(mutex_);
    std::vector<int> out;
    out.reserve(items_.size());
    for (const auto& [e, _] : items_) out.push_back(e);
    return out;
}

// ---------------------------------------------------------------------------

DiskCheckpointStore::DiskCheckpointStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create checkpoint directory " + dir_.string() + ": " + ec.message());
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
        const std::string name = entry.path().filename().string();
        int epoch = 0;
        char tail[8] = {};
        if (std::sscanf(name.c_str(), "epoch_%d.%5s", &epoch, tail) == 2 && std::string(tail) == "ckpt" &&
            name == path_for(epoch).filename().string()) {
            epochs_.push_back(epoch);
        }
    }
    std::sort(epochs_.begin(), epochs_.end());
}

std::filesystem::path DiskCheckpointStore::path_for(int epoch) const {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%04d.ckpt", epoch);
    return dir_ / name;
}

void DiskCheckpointStore::append(const Checkpoint& ckpt) {
    std::unique_lock lock(mutex_);
    if (!epochs_.empty() && ckpt.epoch <= epochs_.back()) {
        throw UsageError("checkpoint store: epoch " + std::to_string(ckpt.epoch) + " does not follow " +
                         std::to_string(epochs_.back()));
    }
    save_checkpoint(ckpt, path_for(ckpt.epoch));
    epochs_.push_back(ckpt.epoch);
}

Checkpoint DiskCheckpointStore::load(int epoch) const {
    {
        std::shared_lock lock(mutex_);
        if (!std::binary_search(epochs_.begin(), epochs_.end(), epoch)) {
            throw ArgumentError("checkpoint store: no checkpoint for epoch " + std::to_string(epoch) + " in " +
                                dir_.string());
        }
    }
    return load_checkpoint(path_for(epoch));
}

std::vector<int> DiskCheckpointStore::epochs() const {
    std::shared_lock lock(mutex_);
    return epochs_;
}

} // namespace meat
