#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "residuum/classifiers.hpp"
#include "residuum/container.hpp"
#include "residuum/error.hpp"
#include "validation.hpp"

namespace residuum {

namespace {

using Count = std::int64_t;

struct SplitCandidate {
    int feature = -1;
    float threshold = 0.0f;
    // Split quality is sum_k cL_k^2 / nL + sum_k cR_k^2 / nR (larger is purer), kept as the exact
    // fraction numerator / denominator so candidate comparisons are independent of class order.
    __int128 numerator = 0;
    __int128 denominator = 1;
};

bool better(const SplitCandidate& a, const SplitCandidate& b) {
    if (b.feature < 0) {
        return a.feature >= 0;
    }
    return a.numerator * b.denominator > b.numerator * a.denominator;
}

Count sum_squares(const std::vector<Count>& counts) {
    Count total = 0;
    for (const auto c : counts) {
        total += c * c;
    }
    return total;
}

// Smallest float t with low <= t < high, if one exists.
bool float_threshold(double low, double high, float& out) {
    float t = static_cast<float>(0.5 * (low + high));
    if (static_cast<double>(t) < low) {
        t = std::nextafter(t, std::numeric_limits<float>::infinity());
    }
    if (static_cast<double>(t) >= high) {
        t = std::nextafter(t, -std::numeric_limits<float>::infinity());
    }
    if (static_cast<double>(t) >= low && static_cast<double>(t) < high) {
        out = t;
        return true;
    }
    return false;
}

class TreeBuilder {
public:
    TreeBuilder(const Eigen::MatrixXd& x, std::span<const std::size_t> y, std::size_t n_classes,
                const ForestOptions& options, int features_per_split, std::uint64_t seed)
        : x_(x), y_(y), n_classes_(n_classes), options_(options), features_per_split_(features_per_split),
          rng_(seed) {}

    DecisionTree build() {
        const auto n = static_cast<std::size_t>(x_.rows());
        std::vector<std::size_t> sample(n);
        if (options_.bootstrap) {
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            for (auto& s : sample) {
                s = pick(rng_);
            }
        } else {
            std::iota(sample.begin(), sample.end(), std::size_t{0});
        }
        DecisionTree tree;
        grow(tree, std::move(sample), 0);
        return tree;
    }

private:
    std::vector<Count> class_counts(const std::vector<std::size_t>& sample) const {
        std::vector<Count> counts(n_classes_, 0);
        for (const auto i : sample) {
            ++counts[y_[i]];
        }
        return counts;
    }

    int grow(DecisionTree& tree, std::vector<std::size_t> sample, int depth) {
        const int index = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        const auto counts = class_counts(sample);
        const auto distinct = std::count_if(counts.begin(), counts.end(), [](Count c) { return c > 0; });

        const bool depth_ok = options_.max_depth <= 0 || depth < options_.max_depth;
        SplitCandidate split;
        if (depth_ok && distinct > 1 && static_cast<int>(sample.size()) >= options_.min_samples_split) {
            split = best_split(sample, counts);
        }
        if (split.feature < 0) {
            tree.nodes[static_cast<std::size_t>(index)].counts.assign(counts.begin(), counts.end());
            return index;
        }

        std::vector<std::size_t> left;
        std::vector<std::size_t> right;
        for (const auto i : sample) {
            (x_(static_cast<Eigen::Index>(i), split.feature) <= static_cast<double>(split.threshold) ? left : right)
                .push_back(i);
        }
        sample.clear();
        sample.shrink_to_fit();

        const int left_index = grow(tree, std::move(left), depth + 1);
        const int right_index = grow(tree, std::move(right), depth + 1);
        auto& node = tree.nodes[static_cast<std::size_t>(index)];
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.left = left_index;
        node.right = right_index;
        return index;
    }

    // Draws features in random order and evaluates them until `features_per_split` non-constant
    // ones have been seen (or all features are exhausted).
    SplitCandidate best_split(const std::vector<std::size_t>& sample, const std::vector<Count>& counts) {
        const auto d = static_cast<std::size_t>(x_.cols());
        std::vector<int> features(d);
        std::iota(features.begin(), features.end(), 0);

        SplitCandidate best;
        int evaluated = 0;
        std::vector<std::pair<double, std::size_t>> column(sample.size());
        for (std::size_t k = 0; k < d && evaluated < features_per_split_; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, d - 1);
            std::swap(features[k], features[pick(rng_)]);
            const int feature = features[k];

            for (std::size_t s = 0; s < sample.size(); ++s) {
                column[s] = {x_(static_cast<Eigen::Index>(sample[s]), feature), y_[sample[s]]};
            }
            std::sort(column.begin(), column.end());
            if (column.front().first == column.back().first) {
                continue;
            }
            ++evaluated;

            std::vector<Count> left(n_classes_, 0);
            std::vector<Count> right = counts;
            Count left_sq = 0;
            Count right_sq = sum_squares(counts);
            const auto total = static_cast<Count>(column.size());
            for (std::size_t s = 0; s + 1 < column.size(); ++s) {
                const auto label = column[s].second;
                left_sq += 2 * left[label] + 1;
                ++left[label];
                right_sq -= 2 * right[label] - 1;
                --right[label];
                if (column[s].first == column[s + 1].first) {
                    continue;
                }
                float threshold = 0.0f;
                if (!float_threshold(column[s].first, column[s + 1].first, threshold)) {
                    continue;
                }
                const auto n_left = static_cast<Count>(s + 1);
                const auto n_right = total - n_left;
                SplitCandidate candidate;
                candidate.feature = feature;
                candidate.threshold = threshold;
                candidate.numerator = static_cast<__int128>(left_sq) * n_right + static_cast<__int128>(right_sq) * n_left;
                candidate.denominator = static_cast<__int128>(n_left) * n_right;
                if (better(candidate, best)) {
                    best = candidate;
                }
            }
        }
        return best;
    }

    const Eigen::MatrixXd& x_;
    std::span<const std::size_t> y_;
    std::size_t n_classes_;
    const ForestOptions& options_;
    int features_per_split_;
    std::mt19937_64 rng_;
};

Eigen::VectorXd leaf_distribution(const TreeNode& leaf) {
    Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(leaf.counts.data(), static_cast<Eigen::Index>(leaf.counts.size()));
    const double total = p.sum();
    if (total > 0.0) {
        p /= total;
    }
    return p;
}

} // namespace

const TreeNode& DecisionTree::leaf_for(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    std::size_t index = 0;
    while (!nodes[index].is_leaf()) {
        const auto& node = nodes[index];
        index = static_cast<std::size_t>(x(node.feature) <= static_cast<double>(node.threshold) ? node.left : node.right);
    }
    return nodes[index];
}

ForestModel fit_forest(const Eigen::MatrixXd& x, std::span<const std::size_t> y, const LabelSet& classes,
                       const ForestOptions& options) {
    detail::validate_training_data(x, y, classes);
    if (options.n_trees < 1 || options.max_depth < 0 || options.features_per_split < 0 ||
        options.min_samples_split < 2) {
        throw UsageError("forest needs n_trees >= 1, max_depth >= 0, features_per_split >= 0, min_samples_split >= 2");
    }
    const auto d = static_cast<int>(x.cols());
    int per_split = options.features_per_split;
    if (per_split == 0) {
        per_split = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));
    }
    per_split = std::clamp(per_split, 1, d);

    ForestModel model;
    model.options = options;
    model.options.features_per_split = per_split;
    model.classes = classes;
    model.dims = x.cols();
    model.trees.reserve(static_cast<std::size_t>(options.n_trees));
    for (int t = 0; t < options.n_trees; ++t) {
        TreeBuilder builder(x, y, classes.size(), model.options, per_split,
                            derive_seed(options.seed, "tree-" + std::to_string(t)));
        model.trees.push_back(builder.build());
    }
    return model;
}

std::vector<Prediction> predict_forest(const ForestModel& model, const Eigen::MatrixXd& x) {
    if (x.rows() == 0) {
        return {};
    }
    if (x.cols() != model.dims) {
        throw DataError("feature dimension " + std::to_string(x.cols()) + " does not match forest dimension " +
                        std::to_string(model.dims));
    }
    if (model.trees.empty()) {
        throw DataError("forest has no trees");
    }
    const auto n_classes = static_cast<Eigen::Index>(model.classes.size());
    std::vector<Prediction> out;
    out.reserve(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        Eigen::VectorXd probs = Eigen::VectorXd::Zero(n_classes);
        for (const auto& tree : model.trees) {
            const Eigen::VectorXd leaf = leaf_distribution(tree.leaf_for(x.row(i)));
            if (model.options.vote == ForestVote::majority) {
                probs(static_cast<Eigen::Index>(argmax_lowest(leaf))) += 1.0;
            } else {
                probs += leaf;
            }
        }
        probs /= static_cast<double>(model.trees.size());
        Prediction p;
        p.label = argmax_lowest(probs);
        p.probs = std::move(probs);
        out.push_back(std::move(p));
    }
    return out;
}

namespace {

constexpr Eigen::Index kNodeFixedColumns = 5; // tree, feature, threshold, left, right

nlohmann::ordered_json forest_meta(const ForestModel& model) {
    nlohmann::ordered_json meta;
    meta["classes"] = model.classes.labels();
    meta["dims"] = model.dims;
    meta["n_trees"] = model.options.n_trees;
    meta["max_depth"] = model.options.max_depth;
    meta["features_per_split"] = model.options.features_per_split;
    meta["min_samples_split"] = model.options.min_samples_split;
    meta["bootstrap"] = model.options.bootstrap;
    meta["vote"] = model.options.vote == ForestVote::majority ? "majority" : "average";
    meta["seed"] = model.options.seed;
    meta["node_columns"] = {"tree", "feature", "threshold", "left", "right", "counts..."};
    return meta;
}

EmbeddingMatrix node_table(const ForestModel& model) {
    Eigen::Index rows = 0;
    for (const auto& tree : model.trees) {
        rows += static_cast<Eigen::Index>(tree.nodes.size());
    }
    const auto n_classes = static_cast<Eigen::Index>(model.classes.size());
    EmbeddingMatrix table = EmbeddingMatrix::Zero(rows, kNodeFixedColumns + n_classes);
    Eigen::Index r = 0;
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        for (const auto& node : model.trees[t].nodes) {
            table(r, 0) = static_cast<double>(t);
            table(r, 1) = node.feature;
            table(r, 2) = node.threshold;
            table(r, 3) = node.left;
            table(r, 4) = node.right;
            for (std::size_t c = 0; c < node.counts.size(); ++c) {
                table(r, kNodeFixedColumns + static_cast<Eigen::Index>(c)) = node.counts[c];
            }
            ++r;
        }
    }
    return table;
}

} // namespace

std::vector<std::uint8_t> encode_forest_model(const ForestModel& model) {
    return encode_container("forest_model", forest_meta(model), {{"nodes", node_table(model)}});
}

void write_forest_model(const ForestModel& model, const std::filesystem::path& path) {
    write_container(path, "forest_model", forest_meta(model), {{"nodes", node_table(model)}});
}

ForestModel read_forest_model(const std::filesystem::path& path) {
    const auto container = read_container(path);
    if (container.kind != "forest_model") {
        throw DataError(path.string() + " holds a '" + container.kind + "', not a forest model");
    }
    ForestModel model;
    try {
        const auto& meta = container.meta;
        model.classes = LabelSet(meta.at("classes").get<std::vector<std::string>>());
        model.dims = meta.at("dims").get<Eigen::Index>();
        model.options.n_trees = meta.at("n_trees").get<int>();
        model.options.max_depth = meta.at("max_depth").get<int>();
        model.options.features_per_split = meta.at("features_per_split").get<int>();
        model.options.min_samples_split = meta.at("min_samples_split").get<int>();
        model.options.bootstrap = meta.at("bootstrap").get<bool>();
        model.options.vote = meta.at("vote").get<std::string>() == "majority" ? ForestVote::majority : ForestVote::average;
        model.options.seed = meta.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": malformed forest header: " + e.what());
    }
    const auto& table = container.section("nodes");
    const auto n_classes = static_cast<Eigen::Index>(model.classes.size());
    if (table.cols() != kNodeFixedColumns + n_classes) {
        throw DataError(path.string() + ": node table width does not match the class count");
    }
    model.trees.resize(static_cast<std::size_t>(model.options.n_trees));
    for (Eigen::Index r = 0; r < table.rows(); ++r) {
        const auto t = static_cast<std::size_t>(table(r, 0));
        if (t >= model.trees.size()) {
            throw DataError(path.string() + ": node refers to tree " + std::to_string(t));
        }
        TreeNode node;
        node.feature = static_cast<int>(table(r, 1));
        node.threshold = static_cast<float>(table(r, 2));
        node.left = static_cast<int>(table(r, 3));
        node.right = static_cast<int>(table(r, 4));
        if (node.feature >= static_cast<int>(model.dims)) {
            throw DataError(path.string() + ": split feature out of range");
        }
        if (node.is_leaf()) {
            for (Eigen::Index c = 0; c < n_classes; ++c) {
                node.counts.push_back(table(r, kNodeFixedColumns + c));
            }
        }
        model.trees[t].nodes.push_back(std::move(node));
    }
    return model;
}

} // namespace residuum
