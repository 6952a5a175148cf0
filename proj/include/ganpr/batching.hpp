#pragma once

#include <cstdint>
#include <vector>

#include "ganpr/common.hpp"
#include "ganpr/rng.hpp"

namespace ganpr {

// Epoch-wise seeded shuffling over record indices. The permutation for an
// epoch is a pure function of (seed, domain_tag, epoch), so any position in
// the stream can be reconstructed from a (epoch, offset) cursor alone.
class BatchIterator {
public:
    BatchIterator(size_t record_count, int batch_size, uint64_t seed, uint64_t domain_tag = 0)
        : count_(record_count), batch_(batch_size), seed_(seed), tag_(domain_tag) {
        check(record_count > 0, "batch_iterator: empty record set");
        check(batch_size > 0, "batch_iterator: batch size must be positive");
        check(static_cast<size_t>(batch_size) <= record_count,
              "batch_iterator: batch size ", batch_size, " exceeds record count ", record_count);
        load_epoch();
    }

    struct Cursor {
        int64_t epoch = 0;
        int64_t offset = 0;
    };

    Cursor cursor() const { return {epoch_, offset_}; }

    void restore(const Cursor& c) {
        epoch_ = c.epoch;
        offset_ = c.offset;
        load_epoch();
    }

    // next chunk of up to batch_size indices; the final chunk of an epoch may
    // be short so that every record appears exactly once per epoch
    std::vector<size_t> next() {
        if (offset_ >= static_cast<int64_t>(count_)) {
            epoch_++;
            offset_ = 0;
            load_epoch();
        }
        const int64_t end = std::min<int64_t>(offset_ + batch_, static_cast<int64_t>(count_));
        std::vector<size_t> out(perm_.begin() + offset_, perm_.begin() + end);
        offset_ = end;
        return out;
    }

    // next chunk of exactly batch_size indices, advancing to the next epoch
    // when fewer remain (training skips short tails to keep batchnorm valid)
    std::vector<size_t> next_full() {
        if (offset_ + batch_ > static_cast<int64_t>(count_)) {
            epoch_++;
            offset_ = 0;
            load_epoch();
        }
        return next();
    }

private:
    void load_epoch() {
        perm_.resize(count_);
        for (size_t i = 0; i < count_; ++i) perm_[i] = i;
        Rng rng = Rng::stream(seed_, tag_, static_cast<uint64_t>(epoch_));
        for (size_t i = count_; i > 1; --i) {
            const size_t j = static_cast<size_t>(rng.below(i));
            std::swap(perm_[i - 1], perm_[j]);
        }
    }

    size_t count_;
    int64_t batch_;
    uint64_t seed_;
    uint64_t tag_;
    int64_t epoch_ = 0;
    int64_t offset_ = 0;
    std::vector<size_t> perm_;
};

}  // namespace ganpr
