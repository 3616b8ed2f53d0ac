#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace dsisearch {

struct KMeansResult {
    std::vector<int> labels;    // one per point, 0..n_clusters-1
    Eigen::MatrixXd centroids;  // n_clusters x D, all non-empty
    std::vector<double> sse_trace;  // within-cluster SSE after each Lloyd iteration
    int iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding. Point-to-centroid ties go to the
// lowest centroid index; an empty cluster is re-seeded with the point
// farthest from its assigned centroid. When the input has p < k distinct
// points only p clusters survive and labels are compacted to 0..p-1.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, uint64_t seed, int max_iters = 100,
                    double tol = 1e-6);

}  // namespace dsisearch
