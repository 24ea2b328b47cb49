#ifndef ANYMODAL_QUANT_HPP
#define ANYMODAL_QUANT_HPP

// Symmetric per-output-channel round-to-nearest weight quantization.
// Step for channel c is max|W[:,c]| / (2^bits - 1); signed codes are stored
// in int16 so the 8-bit grid keeps a half-step bound of max|W[:,c]| / 510.

#include "anymodal/autograd.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace anymodal {

struct QuantizedTensor {
    int bits = 8;
    Eigen::Index rows = 0, cols = 0;
    std::vector<double> scales;        // one per output channel (column)
    std::vector<std::int16_t> codes;   // column-major, rows*cols

    Mat dequantize() const {
        Mat out(rows, cols);
        for (Eigen::Index c = 0; c < cols; ++c)
            for (Eigen::Index r = 0; r < rows; ++r)
                out(r, c) = scales[static_cast<size_t>(c)] *
                            codes[static_cast<size_t>(c * rows + r)];
        return out;
    }
};

inline QuantizedTensor quantize(const Mat& w, int bits) {
    if (bits != 4 && bits != 8) throw std::invalid_argument("quantize: bits must be 4 or 8");
    const double levels = std::pow(2.0, bits) - 1.0;
    QuantizedTensor q;
    q.bits = bits;
    q.rows = w.rows();
    q.cols = w.cols();
    q.scales.resize(static_cast<size_t>(w.cols()));
    q.codes.resize(static_cast<size_t>(w.rows() * w.cols()));
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
        double maxabs = w.col(c).cwiseAbs().maxCoeff();
        double step = maxabs > 0.0 ? maxabs / levels : 1.0; // scales strictly positive
        q.scales[static_cast<size_t>(c)] = step;
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            double code = std::nearbyint(w(r, c) / step);
            q.codes[static_cast<size_t>(c * w.rows() + r)] = static_cast<std::int16_t>(code);
        }
    }
    return q;
}

} // namespace anymodal

#endif
