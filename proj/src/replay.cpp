#include "demorl/replay.hpp"

#include <fstream>

#include "demorl/rng.hpp"

namespace demorl {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t state_dim,
                           std::size_t action_dim)
    : capacity_(capacity), state_dim_(state_dim), action_dim_(action_dim) {
    require(capacity_ >= 1, "ReplayBuffer: capacity must be >= 1");
    storage_.reserve(std::min<std::size_t>(capacity_, 4096));
}

void ReplayBuffer::push(const Transition& t) {
    require(t.x.size() == state_dim_ && t.x_next.size() == state_dim_ &&
                t.u.size() == action_dim_,
            "ReplayBuffer: transition shape does not match buffer spec");
    if (size_ < capacity_) {
        storage_.push_back(t);
        ++size_;
    } else {
        storage_[head_] = t;
    }
    head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
    require(i < size_, "ReplayBuffer: index out of range");
    if (size_ < capacity_) return storage_[i];
    return storage_[(head_ + i) % capacity_];
}

std::vector<Transition> ReplayBuffer::sample_uniform(std::size_t n,
                                                     std::uint64_t seed) const {
    if (empty()) throw std::runtime_error("ReplayBuffer: sample from empty buffer");
    Rng rng = make_rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
    std::vector<Transition> batch;
    batch.reserve(n);
    for (std::size_t i = 0; i < n; ++i) batch.push_back(at(pick(rng)));
    return batch;
}

std::vector<Transition> sample_union(const ReplayBuffer& a, const ReplayBuffer& b,
                                     std::size_t n, double ratio, std::uint64_t seed) {
    require(ratio >= 0.0 && ratio <= 1.0, "sample_union: ratio must be in [0,1]");
    if (a.empty() && b.empty())
        throw std::runtime_error("sample_union: both buffers empty");
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::vector<Transition> batch;
    batch.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const ReplayBuffer* src = coin(rng) < ratio ? &a : &b;
        if (src->empty()) src = (src == &a) ? &b : &a;
        std::uniform_int_distribution<std::size_t> pick(0, src->size() - 1);
        batch.push_back(src->at(pick(rng)));
    }
    return batch;
}

namespace {

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("replay load: truncated stream");
    return v;
}

void write_vec(std::ostream& out, const VecD& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              std::streamsize(v.size() * sizeof(double)));
}

void read_vec(std::istream& in, VecD& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            std::streamsize(v.size() * sizeof(double)));
    if (!in) throw std::runtime_error("replay load: truncated transition");
}

constexpr char kMagic[4] = {'D', 'R', 'P', 'B'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void ReplayBuffer::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("replay save: cannot open " + path);
    out.write(kMagic, 4);
    write_pod(out, kVersion);
    write_pod(out, std::uint64_t(capacity_));
    write_pod(out, std::uint64_t(state_dim_));
    write_pod(out, std::uint64_t(action_dim_));
    write_pod(out, std::uint64_t(size_));
    for (std::size_t i = 0; i < size_; ++i) {
        const Transition& t = at(i);
        write_vec(out, t.x);
        write_vec(out, t.u);
        write_pod(out, t.r);
        write_vec(out, t.x_next);
        write_pod(out, std::uint8_t(t.done ? 1 : 0));
    }
    if (!out) throw std::runtime_error("replay save: write failed");
}

ReplayBuffer ReplayBuffer::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("replay load: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != std::string(kMagic, 4))
        throw std::runtime_error("replay load: bad magic");
    if (read_pod<std::uint32_t>(in) != kVersion)
        throw std::runtime_error("replay load: unsupported version");
    const auto capacity = std::size_t(read_pod<std::uint64_t>(in));
    const auto state_dim = std::size_t(read_pod<std::uint64_t>(in));
    const auto action_dim = std::size_t(read_pod<std::uint64_t>(in));
    const auto count = std::size_t(read_pod<std::uint64_t>(in));
    ReplayBuffer buf(capacity, state_dim, action_dim);
    for (std::size_t i = 0; i < count; ++i) {
        Transition t;
        t.x.resize(state_dim);
        t.u.resize(action_dim);
        t.x_next.resize(state_dim);
        read_vec(in, t.x);
        read_vec(in, t.u);
        t.r = read_pod<double>(in);
        read_vec(in, t.x_next);
        t.done = read_pod<std::uint8_t>(in) != 0;
        buf.push(t);
    }
    return buf;
}

}  // namespace demorl
