#include "residuum/projection.hpp"

#include <array>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <spdlog/spdlog.h>

#include "residuum/log.hpp"

namespace residuum {

std::string_view to_string(ProjectionMethod method) {
    return method == ProjectionMethod::pca ? "pca" : "tsne";
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
    const Eigen::VectorXd sq = x.rowwise().squaredNorm();
    Eigen::MatrixXd d = -2.0 * x * x.transpose();
    d.colwise() += sq;
    d.rowwise() += sq.transpose();
    d = d.cwiseMax(0.0);
    d.diagonal().setZero();
    return d;
}

namespace {

// Fills `column` with p(j | i) for precision beta and returns its entropy. Distances are shifted by
// their minimum over j != i, which cancels in the normalisation. Reads column i of the symmetric
// distance matrix.
double conditional_column(const Eigen::MatrixXd& sq_dist, Eigen::Index i, double beta,
                          Eigen::Ref<Eigen::VectorXd> column) {
    const Eigen::Index n = sq_dist.rows();
    double min_dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j != i) {
            min_dist = std::min(min_dist, sq_dist(j, i));
        }
    }
    double sum = 0.0;
    double weighted = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) {
            column(j) = 0.0;
            continue;
        }
        const double shifted = sq_dist(j, i) - min_dist;
        column(j) = std::exp(-beta * shifted);
        sum += column(j);
        weighted += shifted * column(j);
    }
    column /= sum;
    return std::log(sum) + beta * weighted / sum;
}

} // namespace

Bandwidths fit_bandwidths(const Eigen::MatrixXd& sq_dist, double perplexity, double tolerance) {
    const Eigen::Index n = sq_dist.rows();
    if (sq_dist.cols() != n || n < 2) {
        throw DataError("bandwidth search needs a square distance matrix with at least two points");
    }
    const double target = std::log(perplexity);
    Bandwidths out;
    out.beta.resize(n);
    out.entropy.resize(n);
    Eigen::MatrixXd columns = Eigen::MatrixXd::Zero(n, n);

    for (Eigen::Index i = 0; i < n; ++i) {
        double beta = 1.0;
        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        double entropy = 0.0;
        bool found = false;
        for (int iter = 0; iter < 200; ++iter) {
            entropy = conditional_column(sq_dist, i, beta, columns.col(i));
            const double diff = entropy - target;
            if (std::abs(diff) < tolerance) {
                found = true;
                break;
            }
            if (diff > 0.0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        if (!found) {
            log().warn("t-SNE: point {} reached entropy {} against target {}", i, entropy, target);
        }
        out.beta(i) = beta;
        out.entropy(i) = entropy;
    }
    out.conditional = columns.transpose();
    return out;
}

Eigen::MatrixXd joint_probabilities(const Eigen::MatrixXd& x, double perplexity) {
    const auto bandwidths = fit_bandwidths(squared_distances(x), perplexity);
    Eigen::MatrixXd p = bandwidths.conditional + bandwidths.conditional.transpose();
    p /= p.sum();
    return p;
}

namespace {

// Student-t numerators 1 / (1 + |y_i - y_j|^2) with a zero diagonal.
void student_numerators(const Points2D& y, Eigen::MatrixXd& num) {
    const Eigen::VectorXd sq = y.rowwise().squaredNorm();
    num.noalias() = -2.0 * y * y.transpose();
    num.colwise() += sq;
    num.rowwise() += sq.transpose();
    num = (1.0 + num.array().max(0.0)).inverse().matrix();
    num.diagonal().setZero();
}

// Exact t-SNE gradient in one pass over the pairs j > i. Attractive and repulsive terms are
// accumulated separately so the normalizer Z can be applied afterwards.
void tsne_gradient(const Eigen::MatrixXd& p, const Points2D& y, double exaggeration, Points2D& grad) {
    const Eigen::Index n = y.rows();
    Eigen::VectorXd attr_x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd attr_y = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd rep_x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd rep_y = Eigen::VectorXd::Zero(n);
    const double* yx = y.col(0).data();
    const double* yy = y.col(1).data();
    double z = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double* pi = p.col(i).data();
        const double xi = yx[i];
        const double yi = yy[i];
        double ax = 0.0;
        double ay = 0.0;
        double rx = 0.0;
        double ry = 0.0;
        double zi = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double dx = xi - yx[j];
            const double dy = yi - yy[j];
            const double q = 1.0 / (1.0 + dx * dx + dy * dy);
            const double a = exaggeration * pi[j] * q;
            const double r = q * q;
            zi += q;
            ax += a * dx;
            ay += a * dy;
            rx += r * dx;
            ry += r * dy;
            attr_x[j] -= a * dx;
            attr_y[j] -= a * dy;
            rep_x[j] -= r * dx;
            rep_y[j] -= r * dy;
        }
        attr_x[i] += ax;
        attr_y[i] += ay;
        rep_x[i] += rx;
        rep_y[i] += ry;
        z += 2.0 * zi;
    }
    grad.col(0) = 4.0 * (attr_x - rep_x / z);
    grad.col(1) = 4.0 * (attr_y - rep_y / z);
}

int sign(double v) {
    return (v > 0.0) - (v < 0.0);
}

} // namespace

double kl_divergence(const Eigen::MatrixXd& p, const Points2D& y) {
    Eigen::MatrixXd num(y.rows(), y.rows());
    student_numerators(y, num);
    const double z = num.sum();
    double kl = 0.0;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            if (i != j && p(i, j) > 0.0) {
                kl += p(i, j) * std::log(p(i, j) * z / num(i, j));
            }
        }
    }
    return kl;
}

Projection2D tsne2(const Eigen::MatrixXd& x, const TsneOptions& options) {
    const Eigen::Index n = x.rows();
    if (!(options.perplexity >= 2.0)) {
        throw UsageError("t-SNE perplexity must be at least 2");
    }
    if (static_cast<double>(n) < 3.0 * options.perplexity) {
        throw DataError("t-SNE perplexity " + std::to_string(options.perplexity) + " is infeasible for " +
                        std::to_string(n) + " points (need n >= 3 * perplexity)");
    }
    if (options.iterations < 0 || !(options.learning_rate > 0.0)) {
        throw UsageError("t-SNE needs iterations >= 0 and a positive learning rate");
    }
    if (!x.allFinite()) {
        throw DataError("t-SNE input contains non-finite values");
    }

    const Eigen::MatrixXd p = joint_probabilities(x, options.perplexity);

    Points2D y = pca2(x).points;
    const double col_std = std::sqrt((y.col(0).array() - y.col(0).mean()).square().sum() / static_cast<double>(n));
    y *= 1e-4 / col_std;

    Projection2D out;
    out.method = ProjectionMethod::tsne;
    out.perplexity = options.perplexity;
    out.iterations = options.iterations;
    out.seed = options.seed;
    out.kl_initial = kl_divergence(p, y);

    Points2D update = Points2D::Zero(n, 2);
    Points2D gains = Points2D::Ones(n, 2);
    Points2D grad(n, 2);
    double exaggeration = options.exaggeration;
    double momentum = options.initial_momentum;

    for (int iter = 0; iter < options.iterations; ++iter) {
        if (iter == options.exaggeration_iterations) {
            exaggeration = 1.0;
        }
        if (iter == options.momentum_switch_iteration) {
            momentum = options.final_momentum;
        }

        tsne_gradient(p, y, exaggeration, grad);

        for (Eigen::Index k = 0; k < grad.size(); ++k) {
            const bool same_sign = sign(grad(k)) == sign(update(k));
            gains(k) = same_sign ? std::max(gains(k) * 0.8, 0.01) : gains(k) + 0.2;
        }
        update = momentum * update - options.learning_rate * gains.cwiseProduct(grad);
        y += update;
        y.rowwise() -= y.colwise().mean();

        if (!y.allFinite()) {
            throw DataError("t-SNE produced non-finite coordinates at iteration " + std::to_string(iter));
        }
    }

    out.kl_final = kl_divergence(p, y);
    if (!std::isfinite(out.kl_final)) {
        throw DataError("t-SNE KL divergence is not finite after iteration " + std::to_string(options.iterations));
    }
    out.points = std::move(y);
    return out;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

namespace {

std::string csv_field(const std::string& value) {
    if (value.find_first_of(",\"\n") == std::string::npos) {
        return value;
    }
    std::string out = "\"";
    for (const char ch : value) {
        if (ch == '"') {
            out += '"';
        }
        out += ch;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                current += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                current += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else {
            current += ch;
        }
    }
    fields.push_back(std::move(current));
    return fields;
}

void check_rows(const Projection2D& projection, const Manifest& manifest) {
    if (static_cast<std::size_t>(projection.points.rows()) != manifest.size()) {
        throw DataError("projection has " + std::to_string(projection.points.rows()) + " rows but manifest has " +
                        std::to_string(manifest.size()));
    }
}

constexpr std::array<const char*, 12> kPalette{"#a6cee3", "#1f78b4", "#b2df8a", "#33a02c", "#fb9a99", "#e31a1c",
                                               "#fdbf6f", "#ff7f00", "#cab2d6", "#6a3d9a", "#ffff99", "#b15928"};

std::string xml_escape(const std::string& text) {
    std::string out;
    for (const char ch : text) {
        switch (ch) {
        case '&':
            out += "&amp;";
            break;
        case '<':
            out += "&lt;";
            break;
        case '>':
            out += "&gt;";
            break;
        case '"':
            out += "&quot;";
            break;
        default:
            out += ch;
        }
    }
    return out;
}

} // namespace

std::string projection_meta_line(const Projection2D& projection) {
    std::ostringstream out;
    out << std::setprecision(9) << "# method=" << to_string(projection.method);
    if (projection.method == ProjectionMethod::pca) {
        out << " explained_variance=" << projection.explained_variance(0) << ';' << projection.explained_variance(1);
    } else {
        out << " perplexity=" << projection.perplexity << " iterations=" << projection.iterations
            << " seed=" << projection.seed << " init=pca kl_initial=" << projection.kl_initial
            << " kl_final=" << projection.kl_final;
    }
    return out.str();
}

void export_projection(const Projection2D& projection, const Manifest& manifest, const std::filesystem::path& path,
                       bool with_meta) {
    check_rows(projection, manifest);
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    if (with_meta) {
        out << projection_meta_line(projection) << '\n';
    }
    out << "id,tone,corpus,x,y,method\n";
    out << std::setprecision(9);
    const auto method = to_string(projection.method);
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& entry = manifest.entries[i];
        const auto r = static_cast<Eigen::Index>(i);
        out << csv_field(entry.id) << ',' << csv_field(entry.tone) << ',' << to_string(entry.corpus) << ','
            << projection.points(r, 0) << ',' << projection.points(r, 1) << ',' << method << '\n';
    }
    if (!out) {
        throw DataError("write failed for " + path.string());
    }
}

std::vector<ProjectionRow> read_projection_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::vector<ProjectionRow> rows;
    std::string line;
    bool header_seen = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.front() == '#') {
            continue;
        }
        if (!header_seen) {
            if (line != "id,tone,corpus,x,y,method") {
                throw DataError(path.string() + ": unexpected projection header");
            }
            header_seen = true;
            continue;
        }
        const auto fields = split_csv_line(line);
        if (fields.size() != 6) {
            throw DataError(path.string() + ": line " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields");
        }
        ProjectionRow row{fields[0], fields[1], fields[2], 0.0, 0.0, fields[5]};
        try {
            row.x = std::stod(fields[3]);
            row.y = std::stod(fields[4]);
        } catch (const std::exception&) {
            throw DataError(path.string() + ": line " + std::to_string(line_no) + " has non-numeric coordinates");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void export_projection_svg(const Projection2D& projection, const Manifest& manifest,
                           const std::filesystem::path& path, const std::string& title) {
    check_rows(projection, manifest);
    constexpr int kWidth = 800;
    constexpr int kHeight = 600;
    constexpr double kLeft = 40.0;
    constexpr double kTop = 40.0;
    constexpr double kPlotWidth = 580.0;
    constexpr double kPlotHeight = 520.0;

    const Eigen::Vector2d lo = projection.points.colwise().minCoeff();
    const Eigen::Vector2d hi = projection.points.colwise().maxCoeff();
    const Eigen::Vector2d span = (hi - lo).cwiseMax(1e-12);

    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << std::fixed << std::setprecision(2);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << kLeft << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">" << xml_escape(title)
        << "</text>\n";
    out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kPlotWidth << "\" height=\"" << kPlotHeight
        << "\" fill=\"none\" stroke=\"#888\"/>\n";

    const Labels classes = manifest.class_indices();
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double px = kLeft + (projection.points(r, 0) - lo(0)) / span(0) * kPlotWidth;
        const double py = kTop + kPlotHeight - (projection.points(r, 1) - lo(1)) / span(1) * kPlotHeight;
        out << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"4\" fill=\""
            << kPalette[classes[i] % kPalette.size()] << "\" fill-opacity=\"0.8\"/>\n";
    }

    const double legend_x = kLeft + kPlotWidth + 20.0;
    for (std::size_t c = 0; c < manifest.label_set.size(); ++c) {
        const double ly = kTop + 10.0 + 20.0 * static_cast<double>(c);
        out << "<rect x=\"" << legend_x << "\" y=\"" << ly - 9.0 << "\" width=\"10\" height=\"10\" fill=\""
            << kPalette[c % kPalette.size()] << "\"/>\n";
        out << "<text x=\"" << legend_x + 16.0 << "\" y=\"" << ly << "\" font-family=\"sans-serif\" font-size=\"12\">"
            << xml_escape(manifest.label_set[c]) << "</text>\n";
    }
    out << "</svg>\n";
}

} // namespace residuum
