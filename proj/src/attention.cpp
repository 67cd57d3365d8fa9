#include "snnlm/attention.hpp"

#include <cstdlib>
#include <string>

namespace snnlm {

std::string to_string(SpikeSchedule schedule) {
    return schedule == SpikeSchedule::front_loaded ? "front_loaded" : "strided";
}

SpikeSchedule spike_schedule_from_string(const std::string& name) {
    if (name == "front_loaded") return SpikeSchedule::front_loaded;
    if (name == "strided") return SpikeSchedule::strided;
    throw ConfigError("unknown spike schedule '" + name + "'");
}

std::string to_string(Accumulation accumulation) {
    return accumulation == Accumulation::cumulative_outer ? "cumulative_outer" : "coincident";
}

Accumulation accumulation_from_string(const std::string& name) {
    if (name == "cumulative_outer") return Accumulation::cumulative_outer;
    if (name == "coincident") return Accumulation::coincident;
    throw ConfigError("unknown accumulation '" + name + "'");
}

int spike_step(int index, int magnitude, int steps, SpikeSchedule schedule) {
    if (schedule == SpikeSchedule::front_loaded) {
        return index;
    }
    // ceil(index * steps / magnitude) in integer arithmetic.
    return (index * steps + magnitude - 1) / magnitude;
}

std::vector<SpikeMatrix> spike_steps(const IntMatrix& counts, int steps, SpikeSchedule schedule) {
    std::vector<SpikeMatrix> out(static_cast<std::size_t>(steps), SpikeMatrix::Zero(counts.rows(), counts.cols()));
    for (Eigen::Index r = 0; r < counts.rows(); ++r) {
        for (Eigen::Index c = 0; c < counts.cols(); ++c) {
            const int count = counts(r, c);
            const int magnitude = std::abs(count);
            if (magnitude > steps) {
                throw PreconditionError("spike_steps: |count| exceeds the window length");
            }
            const std::int8_t sign = count > 0 ? 1 : -1;
            for (int i = 1; i <= magnitude; ++i) {
                out[static_cast<std::size_t>(spike_step(i, magnitude, steps, schedule) - 1)](r, c) = sign;
            }
        }
    }
    return out;
}

int coincidence_count(int a, int b, int steps, SpikeSchedule schedule) {
    IntMatrix qa(1, 1), kb(1, 1);
    qa(0, 0) = a;
    kb(0, 0) = b;
    const auto sq = spike_steps(qa, steps, schedule);
    const auto sk = spike_steps(kb, steps, schedule);
    int total = 0;
    for (int t = 0; t < steps; ++t) {
        total += sq[static_cast<std::size_t>(t)](0, 0) * sk[static_cast<std::size_t>(t)](0, 0);
    }
    return total;
}

AttentionScores snn_matmul_counts(const IntMatrix& q_counts, const IntMatrix& k_counts, int steps, double scale_q,
                                  double scale_k, const AttentionOptions& options) {
    if (q_counts.cols() != k_counts.cols()) {
        throw DimensionError("snn_matmul: Q has " + std::to_string(q_counts.cols()) + " columns, K has " +
                             std::to_string(k_counts.cols()));
    }
    if (steps < 1) {
        throw ArgumentError("snn_matmul: steps must be >= 1");
    }
    const Eigen::Index m = q_counts.rows();
    const Eigen::Index n = k_counts.rows();
    const Eigen::Index d = q_counts.cols();
    const auto sq = spike_steps(q_counts, steps, options.schedule);
    const auto sk = spike_steps(k_counts, steps, options.schedule);

    AttentionScores out;
    out.accumulated = IntMatrix::Zero(m, n);
    out.steps = steps;
    out.scale_q = scale_q;
    out.scale_k = scale_k;
    out.accumulation = options.accumulation;

    IntMatrix& acc = out.accumulated;
    IntMatrix cum_q = IntMatrix::Zero(m, d);
    IntMatrix cum_k = IntMatrix::Zero(n, d);
    for (int t = 0; t < steps; ++t) {
        const SpikeMatrix& q_t = sq[static_cast<std::size_t>(t)];
        const SpikeMatrix& k_t = sk[static_cast<std::size_t>(t)];
        if (options.accumulation == Accumulation::coincident) {
            for (Eigen::Index i = 0; i < m; ++i) {
                for (Eigen::Index c = 0; c < d; ++c) {
                    const int s = q_t(i, c);
                    if (s == 0) continue;
                    for (Eigen::Index j = 0; j < n; ++j) {
                        const int r = k_t(j, c);
                        if (r == s) {
                            acc(i, j) += 1;
                        } else if (r == -s) {
                            acc(i, j) -= 1;
                        }
                    }
                }
            }
            continue;
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index c = 0; c < d; ++c) cum_k(j, c) += k_t(j, c);
        }
        // S_Q(t) C_K(t)^T: each query spike adds or subtracts a key count column.
        for (Eigen::Index i = 0; i < m; ++i) {
            for (Eigen::Index c = 0; c < d; ++c) {
                const int s = q_t(i, c);
                if (s > 0) {
                    for (Eigen::Index j = 0; j < n; ++j) acc(i, j) += cum_k(j, c);
                } else if (s < 0) {
                    for (Eigen::Index j = 0; j < n; ++j) acc(i, j) -= cum_k(j, c);
                }
            }
        }
        // C_Q(t-1) S_K(t)^T: each key spike adds or subtracts an earlier query count column.
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index c = 0; c < d; ++c) {
                const int s = k_t(j, c);
                if (s > 0) {
                    for (Eigen::Index i = 0; i < m; ++i) acc(i, j) += cum_q(i, c);
                } else if (s < 0) {
                    for (Eigen::Index i = 0; i < m; ++i) acc(i, j) -= cum_q(i, c);
                }
            }
        }
        for (Eigen::Index i = 0; i < m; ++i) {
            for (Eigen::Index c = 0; c < d; ++c) cum_q(i, c) += q_t(i, c);
        }
    }
    return out;
}

AttentionScores snn_matmul(const Matrix& q, const Matrix& k, int steps, double scale_q, double scale_k,
                           const AttentionOptions& options) {
    if (!(scale_q > 0.0) || !(scale_k > 0.0)) {
        throw ArgumentError("snn_matmul: scales must be positive");
    }
    const MatrixD q_scaled = q.cast<double>() / scale_q;
    const MatrixD k_scaled = k.cast<double>() / scale_k;
    if ((q_scaled.size() > 0 && q_scaled.cwiseAbs().maxCoeff() > 1.0) ||
        (k_scaled.size() > 0 && k_scaled.cwiseAbs().maxCoeff() > 1.0)) {
        throw PreconditionError("snn_matmul: |Q / scale_q| and |K / scale_k| must be <= 1");
    }
    const SpikeTrain tq = encode_rate(q_scaled, steps);
    const SpikeTrain tk = encode_rate(k_scaled, steps);
    // encode_rate flattens column-major; fold the counts back into matrices.
    const IntMatrix q_counts = Eigen::Map<const Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>>(
        tq.accumulated.data(), q.rows(), q.cols());
    const IntMatrix k_counts = Eigen::Map<const Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>>(
        tk.accumulated.data(), k.rows(), k.cols());
    return snn_matmul_counts(q_counts, k_counts, steps, scale_q, scale_k, options);
}

Matrix decode_scores(const AttentionScores& scores) {
    const double t = static_cast<double>(scores.steps);
    const double denom = scores.accumulation == Accumulation::cumulative_outer ? t * t : t;
    const double factor = scores.scale_q * scores.scale_k / denom;
    return (scores.accumulated.cast<double>() * factor).cast<float>();
}

Matrix snn_softmax(const AttentionScores& scores, bool causal) {
    const IntMatrix& a = scores.accumulated;
    Matrix out = Matrix::Zero(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const Eigen::Index visible = causal ? std::min<Eigen::Index>(i + 1, a.cols()) : a.cols();
        if (visible == 0) continue;
        std::int64_t row_min = a(i, 0);
        for (Eigen::Index j = 1; j < visible; ++j) row_min = std::min<std::int64_t>(row_min, a(i, j));
        std::int64_t total = 0;
        for (Eigen::Index j = 0; j < visible; ++j) total += a(i, j) - row_min;
        if (total == 0) {
            for (Eigen::Index j = 0; j < visible; ++j) out(i, j) = static_cast<float>(1.0 / static_cast<double>(visible));
            continue;
        }
        for (Eigen::Index j = 0; j < visible; ++j) {
            out(i, j) = static_cast<float>(static_cast<double>(a(i, j) - row_min) / static_cast<double>(total));
        }
    }
    return out;
}

Matrix linear_normalize(const Matrix& scores, bool causal) {
    Matrix out = Matrix::Zero(scores.rows(), scores.cols());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const Eigen::Index visible = causal ? std::min<Eigen::Index>(i + 1, scores.cols()) : scores.cols();
        if (visible == 0) continue;
        const double row_min = scores.row(i).head(visible).minCoeff();
        double total = 0.0;
        for (Eigen::Index j = 0; j < visible; ++j) total += static_cast<double>(scores(i, j)) - row_min;
        for (Eigen::Index j = 0; j < visible; ++j) {
            out(i, j) = total > 0.0 ? static_cast<float>((static_cast<double>(scores(i, j)) - row_min) / total)
                                    : static_cast<float>(1.0 / static_cast<double>(visible));
        }
    }
    return out;
}

}  // namespace snnlm
