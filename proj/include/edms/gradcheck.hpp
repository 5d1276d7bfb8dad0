#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace edms {

enum class OpId {
    Conv2d,
    Conv2dTranspose,
    InstanceNorm,
    Relu,
    TanhAct,
    BilinearResize,
    ClampUnit,
    L1Loss,
    SoftmaxXent,
};

const char* op_name(OpId op);
std::vector<OpId> all_checked_ops();

struct GradCheckReport {
    OpId op = OpId::Conv2d;
    int trials = 0;
    double max_rel_err = 0.0;
    bool pass = false;
    std::string detail;
};

// Randomized central finite differences in a float64 shadow evaluation
// against the float32 analytic backward. Small tensors (dims <= 6), step
// 1e-4. Failures are reported, not thrown.
GradCheckReport gradient_check(OpId op, int trials, double tolerance, uint64_t seed = 1234);

}  // namespace edms
