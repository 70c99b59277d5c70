#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "patrack/tensor.hpp"

namespace patrack {

/// AdamW with decoupled weight decay. Parameters whose grad buffer is absent
/// are left untouched (weight decay included); a NaN gradient aborts with the
/// parameter name.
template <typename T>
class AdamW {
  public:
    struct Hyper {
        double lr = 4e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 1e-4;
    };

    AdamW(std::vector<std::pair<std::string, Tensor<T>>> params, Hyper hyper)
        : params_(std::move(params)), hyper_(hyper) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].second.data().size(), 0.0);
            v_[i].assign(params_[i].second.data().size(), 0.0);
        }
    }

    void set_lr(double lr) { hyper_.lr = lr; }
    double lr() const { return hyper_.lr; }
    int64_t step_count() const { return step_; }

    void zero_grad() {
        for (auto& [name, p] : params_) p.zero_grad();
    }

    void step() {
        ++step_;
        double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(step_));
        double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(step_));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& [name, p] = params_[i];
            if (!p.has_grad()) continue;
            const auto& g = p.grad();
            auto& data = p.data();
            for (size_t j = 0; j < data.size(); ++j) {
                double gj = static_cast<double>(g[j]);
                if (std::isnan(gj)) {
                    throw NumericError("NaN gradient in parameter '" + name + "' at index " + std::to_string(j));
                }
                m_[i][j] = hyper_.beta1 * m_[i][j] + (1.0 - hyper_.beta1) * gj;
                v_[i][j] = hyper_.beta2 * v_[i][j] + (1.0 - hyper_.beta2) * gj * gj;
                double mhat = m_[i][j] / bc1;
                double vhat = v_[i][j] / bc2;
                double upd = mhat / (std::sqrt(vhat) + hyper_.eps) + hyper_.weight_decay * static_cast<double>(data[j]);
                data[j] = static_cast<T>(static_cast<double>(data[j]) - hyper_.lr * upd);
            }
        }
    }

  private:
    std::vector<std::pair<std::string, Tensor<T>>> params_;
    std::vector<std::vector<double>> m_, v_;
    Hyper hyper_;
    int64_t step_ = 0;
};

}  // namespace patrack
