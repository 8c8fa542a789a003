#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace weldsign {

/// Dense float32 tensor, rank 1..4. Activations use H×W×C with the channel
/// index fastest-varying (channels-last); conv kernels use K×K×(Cin/g)×Cout.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), 0.0f) {}

    Tensor(std::vector<int> shape, std::vector<float> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<int64_t>(data_.size()) != checked_size(shape_)) {
            throw std::invalid_argument("tensor: data length " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_string(shape_));
        }
    }

    static Tensor full(std::vector<int> shape, float value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    // Rank-3 activation accessors.
    int height() const { return dim3_check(), shape_[0]; }
    int width() const { return dim3_check(), shape_[1]; }
    int channels() const { return dim3_check(), shape_[2]; }

    float at(int h, int w, int c) const { return data_[index(h, w, c)]; }
    float& at(int h, int w, int c) { return data_[index(h, w, c)]; }

    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }

    std::span<const float> data() const { return data_; }
    std::span<float> data() { return data_; }
    const float* raw() const { return data_.data(); }
    float* raw() { return data_.data(); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    std::string shape_str() const { return shape_string(shape_); }

    static std::string shape_string(const std::vector<int>& s) {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
        os << "]";
        return os.str();
    }

private:
    int64_t index(int h, int w, int c) const {
        return (static_cast<int64_t>(h) * shape_[1] + w) * shape_[2] + c;
    }
    void dim3_check() const {
        if (shape_.size() != 3) {
            throw std::invalid_argument("tensor: expected rank-3 activation, got " + shape_str());
        }
    }
    static int64_t checked_size(const std::vector<int>& shape) {
        if (shape.empty() || shape.size() > 4) {
            throw std::invalid_argument("tensor: rank must be 1..4, got " + shape_string(shape));
        }
        int64_t n = 1;
        for (int d : shape) {
            if (d < 1) throw std::invalid_argument("tensor: dims must be >= 1, got " + shape_string(shape));
            n *= d;
        }
        return n;
    }

    std::vector<int> shape_;
    std::vector<float> data_;
};

inline Tensor elementwise_add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("elementwise_add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor out(a.shape());
    const float* pa = a.raw();
    const float* pb = b.raw();
    float* po = out.raw();
    for (int64_t i = 0; i < a.size(); ++i) po[i] = pa[i] + pb[i];
    return out;
}

/// Concatenate rank-3 tensors along the channel axis. All parts must share
/// spatial dims; part i occupies the channel slice after parts 0..i-1.
inline Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_channels: empty part list");
    const int h = parts[0].height();
    const int w = parts[0].width();
    int total_c = 0;
    for (const Tensor& p : parts) {
        if (p.height() != h || p.width() != w) {
            throw std::invalid_argument("concat_channels: spatial mismatch " + parts[0].shape_str() +
                                        " vs " + p.shape_str());
        }
        total_c += p.channels();
    }
    Tensor out({h, w, total_c});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float* dst = out.raw() + (static_cast<int64_t>(y) * w + x) * total_c;
            for (const Tensor& p : parts) {
                const int c = p.channels();
                const float* src = p.raw() + (static_cast<int64_t>(y) * w + x) * c;
                std::copy(src, src + c, dst);
                dst += c;
            }
        }
    }
    return out;
}

/// Extract channels [c_begin, c_end) as a fresh tensor.
inline Tensor channel_slice(const Tensor& t, int c_begin, int c_end) {
    const int h = t.height(), w = t.width(), c = t.channels();
    if (c_begin < 0 || c_end > c || c_begin >= c_end) {
        throw std::invalid_argument("channel_slice: invalid range [" + std::to_string(c_begin) + "," +
                                    std::to_string(c_end) + ") for " + t.shape_str());
    }
    const int cs = c_end - c_begin;
    Tensor out({h, w, cs});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float* src = t.raw() + ((static_cast<int64_t>(y) * w + x) * c + c_begin);
            float* dst = out.raw() + (static_cast<int64_t>(y) * w + x) * cs;
            std::copy(src, src + cs, dst);
        }
    }
    return out;
}

}  // namespace weldsign
