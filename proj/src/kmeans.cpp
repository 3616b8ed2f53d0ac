#include "dsisearch/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "dsisearch/rng.hpp"

namespace dsisearch {

namespace {

int64_t count_distinct_rows(const Eigen::MatrixXd& points) {
    std::set<std::vector<double>> rows;
    for (int64_t i = 0; i < points.rows(); ++i) {
        std::vector<double> row(points.row(i).begin(), points.row(i).end());
        rows.insert(std::move(row));
    }
    return static_cast<int64_t>(rows.size());
}

// Squared distances from every point to its nearest row of `centers[0..m)`.
void nearest_sq_dist(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centers, int64_t m,
                     Eigen::VectorXd& d2) {
    for (int64_t i = 0; i < points.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int64_t c = 0; c < m; ++c) {
            double d = (points.row(i) - centers.row(c)).squaredNorm();
            if (d < best) best = d;
        }
        d2[i] = best;
    }
}

Eigen::MatrixXd kmeans_pp_init(const Eigen::MatrixXd& points, int64_t k, Rng& rng) {
    const int64_t n = points.rows();
    Eigen::MatrixXd centers(k, points.cols());
    centers.row(0) = points.row(static_cast<int64_t>(rng.below(static_cast<uint64_t>(n))));
    Eigen::VectorXd d2(n);
    for (int64_t c = 1; c < k; ++c) {
        nearest_sq_dist(points, centers, c, d2);
        double total = d2.sum();
        if (total <= 0.0) {
            // all remaining points duplicate a chosen center; k was already
            // capped at the distinct count, so this cannot happen
            throw std::logic_error("k-means++ ran out of distinct points");
        }
        double target = rng.uniform() * total;
        double acc = 0.0;
        int64_t pick = -1;
        for (int64_t i = 0; i < n; ++i) {
            acc += d2[i];
            if (d2[i] > 0.0) {
                pick = i;
                if (acc >= target) break;
            }
        }
        centers.row(c) = points.row(pick);
    }
    return centers;
}

void assign_labels(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centers,
                   std::vector<int>& labels) {
    for (int64_t i = 0; i < points.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int best_c = 0;
        for (int64_t c = 0; c < centers.rows(); ++c) {
            double d = (points.row(i) - centers.row(c)).squaredNorm();
            if (d < best) {  // strict: ties keep the lowest index
                best = d;
                best_c = static_cast<int>(c);
            }
        }
        labels[static_cast<size_t>(i)] = best_c;
    }
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, uint64_t seed, int max_iters,
                    double tol) {
    const int64_t n = points.rows();
    if (n < 1) throw std::invalid_argument("kmeans needs at least one point");
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
    if (tol < 0.0) throw std::invalid_argument("tol must be >= 0");
    if (!points.allFinite()) throw std::invalid_argument("kmeans input has non-finite values");

    const int64_t k_eff = std::min<int64_t>(k, count_distinct_rows(points));
    Rng rng(mix_seed(seed, 0x6b6d65616e73ull));
    Eigen::MatrixXd centers = kmeans_pp_init(points, k_eff, rng);

    KMeansResult result;
    result.labels.assign(static_cast<size_t>(n), 0);
    std::vector<int64_t> counts(static_cast<size_t>(k_eff), 0);

    for (int it = 0; it < max_iters; ++it) {
        assign_labels(points, centers, result.labels);

        // re-seed empty clusters with the farthest points from their centers
        std::fill(counts.begin(), counts.end(), 0);
        for (int lbl : result.labels) counts[static_cast<size_t>(lbl)] += 1;
        for (int64_t c = 0; c < k_eff; ++c) {
            if (counts[static_cast<size_t>(c)] > 0) continue;
            double far_d = -1.0;
            int64_t far_i = -1;
            for (int64_t i = 0; i < n; ++i) {
                int owner = result.labels[static_cast<size_t>(i)];
                if (counts[static_cast<size_t>(owner)] < 2) continue;  // keep donors non-empty
                double d = (points.row(i) - centers.row(owner)).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far_i = i;
                }
            }
            if (far_i < 0) continue;  // nothing to donate (k_eff <= distinct rules this out)
            counts[static_cast<size_t>(result.labels[static_cast<size_t>(far_i)])] -= 1;
            result.labels[static_cast<size_t>(far_i)] = static_cast<int>(c);
            counts[static_cast<size_t>(c)] += 1;
            centers.row(c) = points.row(far_i);
        }

        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k_eff, points.cols());
        for (int64_t i = 0; i < n; ++i) {
            next.row(result.labels[static_cast<size_t>(i)]) += points.row(i);
        }
        double shift = 0.0;
        for (int64_t c = 0; c < k_eff; ++c) {
            next.row(c) /= static_cast<double>(counts[static_cast<size_t>(c)]);
            shift = std::max(shift, (next.row(c) - centers.row(c)).norm());
        }
        centers = next;
        result.iterations = it + 1;

        double sse = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            sse += (points.row(i) - centers.row(result.labels[static_cast<size_t>(i)])).squaredNorm();
        }
        result.sse_trace.push_back(sse);

        if (shift < tol) break;
    }

    // final labels must agree with the returned centroids
    assign_labels(points, centers, result.labels);

    // compact away any empty clusters, preserving centroid order
    std::fill(counts.begin(), counts.end(), 0);
    for (int lbl : result.labels) counts[static_cast<size_t>(lbl)] += 1;
    std::vector<int> remap(static_cast<size_t>(k_eff), -1);
    int64_t kept = 0;
    for (int64_t c = 0; c < k_eff; ++c) {
        if (counts[static_cast<size_t>(c)] > 0) remap[static_cast<size_t>(c)] = static_cast<int>(kept++);
    }
    result.centroids.resize(kept, points.cols());
    for (int64_t c = 0; c < k_eff; ++c) {
        if (remap[static_cast<size_t>(c)] >= 0) result.centroids.row(remap[static_cast<size_t>(c)]) = centers.row(c);
    }
    for (auto& lbl : result.labels) lbl = remap[static_cast<size_t>(lbl)];
    return result;
}

}  // namespace dsisearch
