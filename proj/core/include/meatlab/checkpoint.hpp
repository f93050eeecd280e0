#pragma once

#include "meatlab/model.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <vector>

namespace meat {

struct Checkpoint {
    int epoch = 0;
    NamedParams params;
    BnStats bn;

    bool operator==(const Checkpoint&) const = default;
};

bool bit_equal(const Checkpoint& a, const Checkpoint& b);

/// Epoch-keyed checkpoint history. Appends must carry strictly increasing
/// epochs; reads return bit-exact copies of what was appended. One writer,
/// any number of concurrent readers.
class CheckpointStore {
public:
    virtual ~CheckpointStore() = default;

    virtual void append(const Checkpoint& ckpt) = 0;
    virtual Checkpoint load(int epoch) const = 0;
    virtual std::vector<int> epochs() const = 0;

    bool contains(int epoch) const;
    /// Epochs e with lo <= e <= hi, ascending.
    std::vector<int> epochs_between(int lo, int hi) const;
};

class MemoryCheckpointStore final : public CheckpointStore {
public:
    void append(const Checkpoint& ckpt) override;
    Checkpoint load(int epoch) const override;
    std::vector<int> epochs() const override;

private:
    mutable std::shared_mutex mutex_;
    std::map<int, Checkpoint> items_;
};

/// One file per checkpoint, `epoch_NNNN.ckpt`, in the checkpoint file format.
/// Opening an existing directory indexes the files already present.
class DiskCheckpointStore final : public CheckpointStore {
public:
    explicit DiskCheckpointStore(std::filesystem::path dir);

    void append(const Checkpoint& ckpt) override;
    Checkpoint load(int epoch) const override;
    std::vector<int> epochs() const override;

    const std::filesystem::path& directory() const noexcept { return dir_; }
    std::filesystem::path path_for(int epoch) const;

private:
    std::filesystem::path dir_;
    mutable std::shared_mutex mutex_;
    std::vector<int> epochs_;
};

} // namespace meat
