#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace dnx {

/// Adam over a fixed list of flat parameter tensors.
///
/// decoupled = false adds weight_decay * param to the gradient (classic L2);
/// decoupled = true shrinks the parameter directly (AdamW).
class Adam {
 public:
    struct Options {
        double learning_rate = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-8;
        double weight_decay = 0.0;
        bool decoupled = false;
    };

    explicit Adam(Options opt) : opt_(opt) {}

    template <class Params, class Grads>
    void step(Params& params, const Grads& grads) {
        if (m_.empty()) {
            for (const auto& p : params) {
                m_.push_back(Eigen::VectorXd::Zero(p.size()));
                v_.push_back(Eigen::VectorXd::Zero(p.size()));
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(opt_.beta1, t_);
        const double bc2 = 1.0 - std::pow(opt_.beta2, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i];
            Eigen::VectorXd g = grads[i];
            if (opt_.weight_decay != 0.0) {
                if (opt_.decoupled)
                    p *= 1.0 - opt_.learning_rate * opt_.weight_decay;
                else
                    g += opt_.weight_decay * p;
            }
            m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * g;
            v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * g.cwiseAbs2();
            p.array() -= opt_.learning_rate * (m_[i].array() / bc1) /
                         ((v_[i].array() / bc2).sqrt() + opt_.epsilon);
        }
    }

    int steps() const { return t_; }

 private:
    Options opt_;
    int t_ = 0;
    std::vector<Eigen::VectorXd> m_;
    std::vector<Eigen::VectorXd> v_;
};

}  // namespace dnx
