#include <algorithm>
#include <numeric>

#include "mdl/data.hpp"
#include "mdl/errors.hpp"

namespace mdl::data {

DomainStream::DomainStream(std::size_t size, std::size_t batch, std::uint64_t seed)
    : size_(size), batch_(batch), rng_(seed), order_(size) {
    if (size == 0) throw DataError("balanced batches: empty domain");
    if (batch == 0 || batch > size)
        throw DataError("balanced batches: batch size " + std::to_string(batch) + " must lie in [1, " +
                        std::to_string(size) + "]");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rng_.shuffle(order_);
}

std::vector<std::size_t> DomainStream::next() {
    std::vector<std::size_t> out;
    out.reserve(batch_);
    while (out.size() < batch_) {
        if (pos_ == size_) {
            rng_.shuffle(order_);
            pos_ = 0;
        }
        out.push_back(order_[pos_++]);
    }
    return out;
}

std::size_t steps_per_epoch(std::span<const std::size_t> sizes, std::span<const std::size_t> batch) {
    if (sizes.size() != batch.size()) throw DataError("balanced batches: one batch size per domain required");
    std::size_t steps = 0;
    for (std::size_t t = 0; t < sizes.size(); ++t) {
        if (batch[t] == 0) throw DataError("balanced batches: batch sizes must be positive");
        steps = std::max(steps, (sizes[t] + batch[t] - 1) / batch[t]);
    }
    return steps;
}

BalancedBatches::BalancedBatches(std::vector<std::size_t> sizes, std::vector<std::size_t> batch, std::uint64_t seed) {
    if (sizes.empty()) throw DataError("balanced batches: no domains");
    steps_per_epoch_ = data::steps_per_epoch(sizes, batch);
    for (std::size_t t = 0; t < sizes.size(); ++t) streams_.emplace_back(sizes[t], batch[t], derive_seed(seed, {t}));
}

std::vector<std::vector<std::size_t>> BalancedBatches::next() {
    std::vector<std::vector<std::size_t>> out;
    out.reserve(streams_.size());
    for (auto& s : streams_) out.push_back(s.next());
    return out;
}

}  // namespace mdl::data
