#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/features2d.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "bootleg/bootleg_score.hpp"
#include "bootleg/errors.hpp"
#include "bootleg/parallel.hpp"
#include "bootleg/sheet_config.hpp"
#include "bootleg/staff.hpp"

namespace bootleg {

/// Preprocessed page: ink-positive float image with pixels in [0,1],
/// interline-normalized so staff lines sit canonical_staff_spacing apart.
struct GrayImage {
    cv::Mat1f pixels;

    int width() const { return pixels.cols; }
    int height() const { return pixels.rows; }
};

struct NoteheadBlob {
    double center_x = 0;
    double center_y = 0;
    int bbox_w = 0;
    int bbox_h = 0;
};

/// Comb-filter responses indexed by (row, column block, spacing index).
struct StaffLineFeatures {
    int rows = 0;
    int col_blocks = 0;
    std::vector<double> spacings;
    std::vector<float> data;     // rows * col_blocks * spacings
    std::vector<float> row_mass; // per-row ink mass of the line-filtered image

    float at(int row, int block, int spacing_idx) const
    {
        return data[(static_cast<std::size_t>(row) * col_blocks + block) * spacings.size()
                    + spacing_idx];
    }

    float& at(int row, int block, int spacing_idx)
    {
        return data[(static_cast<std::size_t>(row) * col_blocks + block) * spacings.size()
                    + spacing_idx];
    }

    float total(int row, int spacing_idx) const
    {
        float sum = 0;
        for (int b = 0; b < col_blocks; ++b) {
            sum += at(row, b, spacing_idx);
        }
        return sum;
    }
};

/// Per-row pixel mass of the tall-line-filtered image.
struct BarlineFeatures {
    std::vector<float> row_sums;
};

/// One detected five-line staff with refined line rows (top to bottom).
struct Staff {
    double center_row = 0;
    double spacing = 0;
    std::array<double, 5> line_rows{};
};

struct PageStats {
    double estimated_spacing = 0; // before normalization
    double scale_factor = 1;
    int staves_found = 0;
    int systems = 0;
    int blobs_detected = 0;
    int blobs_discarded_far = 0; // farther than max_blob_staff_distance from every staff
    int positions_clamped = 0;   // interpolated beyond the hand's block
    int columns = 0;
};

// -------- step 1: preprocessing --------

inline cv::Mat decode_image(const std::filesystem::path& path)
{
    cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) {
        throw DecodeError("cannot decode image: " + path.string());
    }
    return raw;
}

namespace detail {

    inline int odd_kernel(double size)
    {
        const int k = std::max(3, static_cast<int>(std::lround(size)));
        return k | 1;
    }

    inline cv::Mat1f to_ink_image(const cv::Mat& raw)
    {
        cv::Mat gray;
        if (raw.channels() == 3) {
            cv::cvtColor(raw, gray, cv::COLOR_BGR2GRAY);
        } else if (raw.channels() == 4) {
            cv::cvtColor(raw, gray, cv::COLOR_BGRA2GRAY);
        } else {
            gray = raw;
        }
        cv::Mat1f out;
        // dark ink on light paper -> ink-positive; the subtraction stays a
        // separate exact step so pure white maps to exactly 0
        if (gray.depth() == CV_8U) {
            gray.convertTo(out, CV_32F);
            out = 255.0f - out;
            out *= 1.0f / 255.0f;
        } else if (gray.depth() == CV_16U) {
            gray.convertTo(out, CV_32F);
            out = 65535.0f - out;
            out *= 1.0f / 65535.0f;
        } else {
            gray.convertTo(out, CV_32F);
            out = 1.0f - out;
        }
        cv::min(out, 1.0f, out);
        cv::max(out, 0.0f, out);
        return out;
    }

    inline cv::Mat1f morph_open(const cv::Mat1f& src, int kernel_w, int kernel_h,
                                int shape = cv::MORPH_RECT)
    {
        const auto kernel = cv::getStructuringElement(shape, cv::Size(kernel_w, kernel_h));
        cv::Mat1f out;
        cv::morphologyEx(src, out, cv::MORPH_OPEN, kernel);
        return out;
    }

    inline std::vector<float> row_sums_of(const cv::Mat1f& img)
    {
        cv::Mat1f sums;
        cv::reduce(img, sums, 1, cv::REDUCE_SUM, CV_32F);
        std::vector<float> out(static_cast<std::size_t>(img.rows));
        for (int r = 0; r < img.rows; ++r) {
            out[static_cast<std::size_t>(r)] = sums(r, 0);
        }
        return out;
    }

    /// Centered comb-filter teeth row offsets for a given spacing.
    inline std::vector<int> comb_offsets(double spacing, int teeth)
    {
        std::vector<int> offsets(static_cast<std::size_t>(teeth));
        const double mid = (teeth - 1) / 2.0;
        for (int k = 0; k < teeth; ++k) {
            offsets[static_cast<std::size_t>(k)]
                = static_cast<int>(std::lround((k - mid) * spacing));
        }
        return offsets;
    }

    inline float comb_response(const std::vector<float>& mass, int row,
                               const std::vector<int>& offsets)
    {
        float sum = 0;
        for (const int off : offsets) {
            const int r = row + off;
            if (r >= 0 && r < static_cast<int>(mass.size())) {
                sum += mass[static_cast<std::size_t>(r)];
            }
        }
        return sum;
    }

    struct SpacingEstimate {
        double spacing;
        float response;
    };

    inline SpacingEstimate estimate_staff_spacing(const cv::Mat1f& ink,
                                                  const SheetHyperparams& params)
    {
        // isolate horizontal lines, then scan the comb bank over spacings
        const int kernel_w = std::max(3, static_cast<int>(std::lround(2 * params.max_staff_spacing)));
        const auto lines = morph_open(ink, kernel_w, 1);
        const auto mass = row_sums_of(lines);

        SpacingEstimate best{ params.min_staff_spacing, 0 };
        for (double s = params.min_staff_spacing; s <= params.max_staff_spacing + 1e-9;
             s += params.spacing_search_step) {
            const auto offsets = comb_offsets(s, params.comb_teeth);
            for (int r = 0; r < static_cast<int>(mass.size()); ++r) {
                const float resp = comb_response(mass, r, offsets);
                if (resp > best.response) {
                    best = { s, resp };
                }
            }
        }
        return best;
    }

} // namespace detail

/// Grayscale conversion, background removal by subtracting a heavily
/// blurred copy, and interline normalization driven by the comb-filter
/// bank's spacing estimate.
inline GrayImage preprocess(const cv::Mat& raw, const SheetHyperparams& params,
                            PageStats* stats = nullptr)
{
    if (raw.empty() || raw.rows < 1 || raw.cols < 1) {
        throw DecodeError("empty image");
    }
    cv::Mat1f ink = detail::to_ink_image(raw);

    const int blur_k = detail::odd_kernel(params.background_blur_factor * params.max_staff_spacing);
    cv::Mat1f background;
    cv::blur(ink, background, cv::Size(blur_k, blur_k));
    cv::Mat1f fg = ink - background;
    cv::max(fg, 0.0f, fg);
    cv::min(fg, 1.0f, fg);

    const auto estimate = detail::estimate_staff_spacing(fg, params);
    if (estimate.response < params.min_staff_response) {
        throw NoStaffError("no staff detected: best comb response "
                           + std::to_string(estimate.response) + " below floor "
                           + std::to_string(params.min_staff_response));
    }

    double scale = params.canonical_staff_spacing / estimate.spacing;
    scale = std::clamp(scale, params.min_rescale_factor, params.max_rescale_factor);

    cv::Mat1f scaled;
    if (std::abs(scale - 1.0) < 1e-9) {
        scaled = fg;
    } else {
        const cv::Size size(std::max(1, static_cast<int>(std::lround(fg.cols * scale))),
                            std::max(1, static_cast<int>(std::lround(fg.rows * scale))));
        cv::resize(fg, scaled, size, 0, 0, scale < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
        cv::max(scaled, 0.0f, scaled);
        cv::min(scaled, 1.0f, scaled);
    }

    if (stats) {
        stats->estimated_spacing = estimate.spacing;
        stats->scale_factor = scale;
    }
    return { scaled };
}

// -------- step 2: notehead detection --------

namespace detail {

    inline cv::Mat1b binarize(const cv::Mat1f& img, const SheetHyperparams& params)
    {
        cv::Mat1b img8;
        img.convertTo(img8, CV_8U, 255.0);
        cv::Mat1b binary;
        const double floor = params.binarize_fixed_threshold * 255.0;
        if (params.binarize_method == "fixed") {
            cv::threshold(img8, binary, floor, 255, cv::THRESH_BINARY);
        } else {
            // Otsu splits whatever histogram it gets, including pure noise
            // on empty pages; the fixed threshold acts as its lower bound
            const double otsu = cv::threshold(img8, binary, 0, 255,
                                              cv::THRESH_BINARY | cv::THRESH_OTSU);
            if (otsu < floor) {
                cv::threshold(img8, binary, floor, 255, cv::THRESH_BINARY);
            }
        }
        return binary;
    }

    inline double median_of(std::vector<double> v)
    {
        const auto mid = v.size() / 2;
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
        return v[mid];
    }

} // namespace detail

/// Circular morphological opening keeps filled noteheads and removes
/// staff lines, stems and barlines; a blob detector estimates the
/// notehead template; connected components of the binarized image within
/// the template's tolerance band become the detections. Hollow noteheads
/// do not survive the opening and are deliberately not detected.
inline std::vector<NoteheadBlob> detect_noteheads(const GrayImage& image,
                                                  const SheetHyperparams& params)
{
    const double s = params.canonical_staff_spacing;
    const int disk = detail::odd_kernel(params.notehead_opening_diameter_frac * s);
    const cv::Mat1f opened
        = detail::morph_open(image.pixels, disk, disk, cv::MORPH_ELLIPSE);

    cv::Mat1b opened8;
    opened.convertTo(opened8, CV_8U, 255.0);

    cv::SimpleBlobDetector::Params blob_params;
    blob_params.filterByColor = true;
    blob_params.blobColor = 255;
    blob_params.filterByArea = true;
    blob_params.minArea = static_cast<float>(params.blob_min_area_frac * s * s);
    blob_params.maxArea = static_cast<float>(params.blob_max_area_frac * s * s);
    blob_params.filterByCircularity = true;
    blob_params.minCircularity = static_cast<float>(params.blob_min_circularity);
    blob_params.filterByConvexity = false;
    blob_params.filterByInertia = false;
    blob_params.minDistBetweenBlobs = static_cast<float>(0.5 * s);
    std::vector<cv::KeyPoint> keypoints;
    cv::SimpleBlobDetector::create(blob_params)->detect(opened8, keypoints);

    const cv::Mat1b binary = detail::binarize(opened, params);
    cv::Mat labels, cc_stats, centroids;
    const int n_components
        = cv::connectedComponentsWithStats(binary, labels, cc_stats, centroids, 8, CV_32S);

    // template dims: median component size under the detector's keypoints
    double template_w = params.template_fallback_width_frac * s;
    double template_h = params.template_fallback_height_frac * s;
    if (static_cast<int>(keypoints.size()) >= params.min_template_blobs) {
        std::vector<double> widths, heights;
        for (const auto& kp : keypoints) {
            const int x = static_cast<int>(std::lround(kp.pt.x));
            const int y = static_cast<int>(std::lround(kp.pt.y));
            if (x < 0 || y < 0 || x >= labels.cols || y >= labels.rows) {
                continue;
            }
            const int label = labels.at<int>(y, x);
            if (label <= 0) {
                continue;
            }
            widths.push_back(cc_stats.at<int>(label, cv::CC_STAT_WIDTH));
            heights.push_back(cc_stats.at<int>(label, cv::CC_STAT_HEIGHT));
        }
        if (static_cast<int>(widths.size()) >= params.min_template_blobs) {
            template_w = detail::median_of(widths);
            template_h = detail::median_of(heights);
        }
    }

    std::vector<NoteheadBlob> blobs;
    for (int label = 1; label < n_components; ++label) {
        const int w = cc_stats.at<int>(label, cv::CC_STAT_WIDTH);
        const int h = cc_stats.at<int>(label, cv::CC_STAT_HEIGHT);
        if (w < params.template_tol_low * template_w
            || w > params.template_tol_high * template_w) {
            continue;
        }
        // a chord of stacked noteheads (interval of a third) fuses into one
        // component of k template heights; split it back into k blobs
        const int stack = std::max(1, static_cast<int>(std::lround(h / template_h)));
        if (stack > 3 || h < stack * params.template_tol_low * template_h
            || h > stack * params.template_tol_high * template_h) {
            continue;
        }
        const double cx = centroids.at<double>(label, 0);
        const int top = cc_stats.at<int>(label, cv::CC_STAT_TOP);
        if (stack == 1) {
            blobs.push_back({ cx, centroids.at<double>(label, 1), w, h });
        } else {
            const double part = static_cast<double>(h) / stack;
            for (int i = 0; i < stack; ++i) {
                blobs.push_back({ cx, top + (i + 0.5) * part, w,
                                  static_cast<int>(std::lround(part)) });
            }
        }
    }
    std::sort(blobs.begin(), blobs.end(), [](const NoteheadBlob& a, const NoteheadBlob& b) {
        if (a.center_y != b.center_y) {
            return a.center_y < b.center_y;
        }
        return a.center_x < b.center_x;
    });
    return blobs;
}

// -------- step 3: staff line features --------

/// Horizontal-line isolation followed by a bank of vertical comb filters
/// over the refine spacing range.
inline StaffLineFeatures compute_staffline_features(const GrayImage& image,
                                                    const SheetHyperparams& params)
{
    const double s = params.canonical_staff_spacing;
    const int kernel_w
        = std::max(3, static_cast<int>(std::lround(params.staffline_kernel_width_frac * s)));
    const cv::Mat1f lines
        = detail::morph_open(image.pixels, kernel_w, std::max(1, params.staffline_kernel_height));

    StaffLineFeatures features;
    features.rows = image.height();
    features.col_blocks = params.staffline_col_blocks;
    for (double sp = s - params.staff_spacing_delta; sp <= s + params.staff_spacing_delta + 1e-9;
         sp += params.staff_spacing_step) {
        if (sp > 0) {
            features.spacings.push_back(sp);
        }
    }

    // per-block row mass
    std::vector<std::vector<float>> block_mass;
    const int block_w = std::max(1, image.width() / features.col_blocks);
    for (int b = 0; b < features.col_blocks; ++b) {
        const int x0 = b * block_w;
        const int x1 = (b + 1 == features.col_blocks) ? image.width() : (b + 1) * block_w;
        block_mass.push_back(detail::row_sums_of(lines.colRange(x0, x1)));
    }
    features.row_mass = detail::row_sums_of(lines);

    features.data.assign(static_cast<std::size_t>(features.rows) * features.col_blocks
                             * features.spacings.size(),
                         0.0f);
    for (std::size_t si = 0; si < features.spacings.size(); ++si) {
        const auto offsets = detail::comb_offsets(features.spacings[si], params.comb_teeth);
        for (int b = 0; b < features.col_blocks; ++b) {
            for (int r = 0; r < features.rows; ++r) {
                features.at(r, b, static_cast<int>(si))
                    = detail::comb_response(block_mass[static_cast<std::size_t>(b)], r, offsets);
            }
        }
    }
    return features;
}

// -------- step 4: barline features --------

/// Tall-skinny-line isolation followed by per-row pixel sums; a large row
/// sum marks rows crossed by (multiple) barlines.
inline BarlineFeatures compute_barline_features(const GrayImage& image,
                                                const SheetHyperparams& params)
{
    const int kernel_h = std::max(
        3, static_cast<int>(std::lround(params.barline_kernel_height_frac
                                        * params.canonical_staff_spacing)));
    const cv::Mat1f bars = detail::morph_open(
        image.pixels, std::max(1, params.barline_kernel_width), kernel_h);
    return { detail::row_sums_of(bars) };
}

// -------- step 5: projection --------

namespace detail {

    inline Staff refine_staff(const StaffLineFeatures& features, int center_row,
                              double coarse_spacing, const SheetHyperparams& params);

    inline std::vector<Staff> locate_staves(const StaffLineFeatures& features,
                                            const SheetHyperparams& params)
    {
        std::vector<Staff> staves;
        if (features.rows == 0 || features.spacings.empty()) {
            return staves;
        }
        std::vector<bool> excluded(static_cast<std::size_t>(features.rows), false);
        float first_best = 0;

        while (static_cast<int>(staves.size()) < params.max_staves_per_page) {
            float best = 0;
            int best_row = -1;
            std::size_t best_si = 0;
            for (int r = 0; r < features.rows; ++r) {
                if (excluded[static_cast<std::size_t>(r)]) {
                    continue;
                }
                for (std::size_t si = 0; si < features.spacings.size(); ++si) {
                    const float resp = features.total(r, static_cast<int>(si));
                    if (resp > best) {
                        best = resp;
                        best_row = r;
                        best_si = si;
                    }
                }
            }
            if (best_row < 0 || best <= 1e-6f) {
                break;
            }
            if (staves.empty()) {
                first_best = best;
            } else if (best < params.staff_peak_rel_threshold * first_best
                       && static_cast<int>(staves.size()) >= params.min_staves_per_page) {
                break;
            }

            const double coarse_spacing = features.spacings[best_si];
            Staff staff = refine_staff(features, best_row, coarse_spacing, params);
            staves.push_back(staff);

            const int suppress = static_cast<int>(
                std::lround(params.staff_suppression_factor * coarse_spacing));
            for (int r = std::max(0, best_row - suppress);
                 r <= std::min(features.rows - 1, best_row + suppress); ++r) {
                excluded[static_cast<std::size_t>(r)] = true;
            }
        }

        std::sort(staves.begin(), staves.end(),
                  [](const Staff& a, const Staff& b) { return a.center_row < b.center_row; });
        return staves;
    }

    inline Staff refine_staff(const StaffLineFeatures& features, int center_row,
                              double coarse_spacing, const SheetHyperparams& params)
    {
        const auto& mass = features.row_mass;
        const int window = std::max(
            1, static_cast<int>(std::lround(params.line_refine_window_frac * coarse_spacing)));

        std::array<double, 5> rows{};
        std::array<double, 5> line_mass{};
        for (int k = -2; k <= 2; ++k) {
            const int predicted
                = center_row + static_cast<int>(std::lround(k * coarse_spacing));
            double total = 0, weighted = 0;
            for (int r = std::max(0, predicted - window);
                 r <= std::min(features.rows - 1, predicted + window); ++r) {
                total += mass[static_cast<std::size_t>(r)];
                weighted += mass[static_cast<std::size_t>(r)] * r;
            }
            rows[static_cast<std::size_t>(k + 2)] = total > 0 ? weighted / total : predicted;
            line_mass[static_cast<std::size_t>(k + 2)] = total;
        }
        const double strongest = *std::max_element(line_mass.begin(), line_mass.end());
        for (int k = -2; k <= 2; ++k) {
            if (line_mass[static_cast<std::size_t>(k + 2)]
                < params.min_line_mass_frac * strongest) {
                rows[static_cast<std::size_t>(k + 2)]
                    = center_row + static_cast<int>(std::lround(k * coarse_spacing));
            }
        }

        Staff staff;
        staff.line_rows = rows;
        staff.center_row = (rows[0] + rows[1] + rows[2] + rows[3] + rows[4]) / 5.0;
        // least-squares slope of row over line index
        staff.spacing = (2 * (rows[4] - rows[0]) + (rows[3] - rows[1])) / 10.0;
        if (staff.spacing <= 0) {
            staff.spacing = coarse_spacing;
        }
        return staff;
    }

    /// Continuous half-step position of an image row within a staff:
    /// +4 on the top line, 0 on the middle line, -4 on the bottom line,
    /// linear between detected lines and extrapolated beyond them.
    inline double interpolate_position(const Staff& staff, double y)
    {
        const auto& lr = staff.line_rows;
        if (y <= lr[0]) {
            const double local = std::max(1e-6, lr[1] - lr[0]);
            return 4 + 2 * (lr[0] - y) / local;
        }
        if (y >= lr[4]) {
            const double local = std::max(1e-6, lr[4] - lr[3]);
            return -4 - 2 * (y - lr[4]) / local;
        }
        for (int j = 0; j < 4; ++j) {
            if (y <= lr[static_cast<std::size_t>(j + 1)]) {
                const double local
                    = std::max(1e-6, lr[static_cast<std::size_t>(j + 1)] - lr[static_cast<std::size_t>(j)]);
                return (4 - 2 * j) - 2 * (y - lr[static_cast<std::size_t>(j)]) / local;
            }
        }
        return -4;
    }

    inline int round_half_steps(double h, bool ties_toward_center)
    {
        const double t = std::abs(h);
        const double floor_t = std::floor(t);
        double rounded;
        if (t - floor_t == 0.5) {
            rounded = ties_toward_center ? floor_t : floor_t + 1;
        } else {
            rounded = std::floor(t + 0.5);
        }
        return static_cast<int>(h < 0 ? -rounded : rounded);
    }

} // namespace detail

/// Locates staves, pairs them into grand-staff systems validated by
/// barline coverage, assigns each blob a rounded half-step position on its
/// nearest staff, maps upper staves to the right-hand block and lower
/// staves to the left-hand block, merges x-adjacent blobs into note-event
/// columns and mirrors the middle register into both hands.
inline BootlegScore project_page(const std::vector<NoteheadBlob>& blobs,
                                 const StaffLineFeatures& staff_feats,
                                 const BarlineFeatures& barline_feats,
                                 const SheetHyperparams& params, PageStats* stats = nullptr)
{
    const auto staves = detail::locate_staves(staff_feats, params);
    BootlegScore fragment(Variant::SheetDerived);
    if (stats) {
        stats->staves_found = static_cast<int>(staves.size());
        stats->blobs_detected = static_cast<int>(blobs.size());
    }
    if (staves.empty()) {
        return fragment;
    }

    if (staves.size() % 2 != 0) {
        std::string rows;
        for (const auto& staff : staves) {
            rows += (rows.empty() ? "" : ", ") + std::to_string(staff.center_row);
        }
        throw PairingError("odd staff count (" + std::to_string(staves.size())
                           + ") cannot form grand staves; staff center rows: " + rows);
    }

    // validate each consecutive pair through barline coverage
    for (std::size_t i = 0; i + 1 < staves.size(); i += 2) {
        const int r0 = static_cast<int>(std::lround(staves[i].center_row));
        const int r1 = static_cast<int>(std::lround(staves[i + 1].center_row));
        int covered = 0, span = 0;
        for (int r = r0; r <= r1 && r < static_cast<int>(barline_feats.row_sums.size()); ++r) {
            if (r < 0) {
                continue;
            }
            ++span;
            if (barline_feats.row_sums[static_cast<std::size_t>(r)]
                >= params.barline_row_mass_floor) {
                ++covered;
            }
        }
        if (span == 0
            || static_cast<double>(covered) / span < params.barline_coverage_threshold) {
            throw PairingError("staves at rows " + std::to_string(staves[i].center_row) + " and "
                               + std::to_string(staves[i + 1].center_row)
                               + " are not spanned by barlines; cannot pair");
        }
    }

    struct PlacedBlob {
        double x;
        int position;
        std::size_t system;
    };
    std::vector<PlacedBlob> placed;
    placed.reserve(blobs.size());

    for (const auto& blob : blobs) {
        std::size_t nearest = 0;
        double best_dist = std::numeric_limits<double>::max();
        for (std::size_t i = 0; i < staves.size(); ++i) {
            const double dist = std::abs(blob.center_y - staves[i].center_row);
            if (dist < best_dist) {
                best_dist = dist;
                nearest = i;
            }
        }
        const auto& staff = staves[nearest];
        if (best_dist > params.max_blob_staff_distance_frac * staff.spacing) {
            if (stats) {
                ++stats->blobs_discarded_far;
            }
            continue;
        }

        const double h = detail::interpolate_position(staff, blob.center_y);
        const int half_steps = detail::round_half_steps(h, params.round_ties_toward_center);

        const bool upper = nearest % 2 == 0;
        int position;
        if (upper) {
            // treble staff: middle line is B4
            position = (kTrebleMiddleLineDiatonic + 5) + half_steps;
            const int clamped = std::clamp(position, kLeftHandPositions, kNumStaffPositions - 1);
            if (clamped != position && stats) {
                ++stats->positions_clamped;
            }
            position = clamped;
        } else {
            // bass staff: middle line is D3
            position = (kBassMiddleLineDiatonic - kLhLowDiatonic) + half_steps;
            const int clamped = std::clamp(position, 0, kLeftHandPositions - 1);
            if (clamped != position && stats) {
                ++stats->positions_clamped;
            }
            position = clamped;
        }
        placed.push_back({ blob.center_x, position, nearest / 2 });
    }

    const double merge_width
        = params.column_merge_width_frac * params.canonical_staff_spacing;
    const std::size_t n_systems = staves.size() / 2;
    for (std::size_t sys = 0; sys < n_systems; ++sys) {
        std::vector<PlacedBlob> system_blobs;
        for (const auto& b : placed) {
            if (b.system == sys) {
                system_blobs.push_back(b);
            }
        }
        std::sort(system_blobs.begin(), system_blobs.end(),
                  [](const PlacedBlob& a, const PlacedBlob& b) {
                      if (a.x != b.x) {
                          return a.x < b.x;
                      }
                      return a.position < b.position;
                  });

        std::uint64_t column = 0;
        double column_start_x = 0;
        auto flush = [&] {
            if (column != 0) {
                fragment.append(Fingerprint(mirror_middle_register(column)));
            }
            column = 0;
        };
        for (const auto& b : system_blobs) {
            if (column != 0 && b.x - column_start_x > merge_width) {
                flush();
            }
            if (column == 0) {
                column_start_x = b.x;
            }
            column |= std::uint64_t{1} << b.position;
        }
        flush();
    }

    if (stats) {
        stats->systems = static_cast<int>(n_systems);
        stats->columns = static_cast<int>(fragment.width());
    }
    return fragment;
}

/// All five steps on one decoded page image.
inline BootlegScore process_page(const cv::Mat& raw, const SheetHyperparams& params,
                                 PageStats* stats = nullptr,
                                 std::vector<NoteheadBlob>* blobs_out = nullptr,
                                 GrayImage* preprocessed_out = nullptr)
{
    const GrayImage image = preprocess(raw, params, stats);
    const auto blobs = detect_noteheads(image, params);
    const auto staff_feats = compute_staffline_features(image, params);
    const auto barline_feats = compute_barline_features(image, params);
    auto fragment = project_page(blobs, staff_feats, barline_feats, params, stats);
    if (blobs_out) {
        *blobs_out = blobs;
    }
    if (preprocessed_out) {
        *preprocessed_out = image;
    }
    return fragment;
}

inline cv::Mat3b render_overlay(const GrayImage& image, const std::vector<NoteheadBlob>& blobs,
                                const SheetHyperparams& params);

struct PageOutcome {
    std::filesystem::path path;
    std::size_t width = 0;
    std::string error; // empty on success
    PageStats stats;
};

struct PieceExtraction {
    BootlegScore score{ Variant::SheetDerived };
    std::vector<PageOutcome> pages;
};

/// Concatenates per-page fragments in reading order. Pages failing staff
/// detection or pairing contribute width 0 and are reported; undecodable
/// images abort the piece. All pages failing is an error. Page processing
/// parallelizes over `jobs` threads with a deterministic ordered reduce;
/// when overlay_dir is set, a debug overlay image is written per page.
inline PieceExtraction extract_piece(const std::vector<std::filesystem::path>& pages,
                                     const SheetHyperparams& params, int jobs = 1,
                                     const std::optional<std::filesystem::path>& overlay_dir = {})
{
    struct PageResult {
        PageOutcome outcome;
        BootlegScore fragment{ Variant::SheetDerived };
        std::string fatal; // DecodeError message, rethrown after the join
    };
    std::vector<PageResult> results(pages.size());

    detail::parallel_for(pages.size(), jobs, [&](std::size_t i) {
        auto& result = results[i];
        result.outcome.path = pages[i];
        try {
            const cv::Mat raw = decode_image(pages[i]);
            std::vector<NoteheadBlob> blobs;
            GrayImage preprocessed;
            result.fragment
                = process_page(raw, params, &result.outcome.stats, &blobs, &preprocessed);
            result.outcome.width = result.fragment.width();
            if (overlay_dir) {
                const auto overlay = render_overlay(preprocessed, blobs, params);
                cv::imwrite((*overlay_dir / (pages[i].stem().string() + "_overlay.png")).string(),
                            overlay);
            }
        } catch (const NoStaffError& e) {
            result.outcome.error = e.what();
        } catch (const PairingError& e) {
            result.outcome.error = e.what();
        } catch (const DecodeError& e) {
            result.fatal = e.what();
        }
    });

    PieceExtraction piece;
    std::size_t failed = 0;
    for (auto& result : results) {
        if (!result.fatal.empty()) {
            throw DecodeError(result.fatal);
        }
        if (!result.outcome.error.empty()) {
            ++failed;
        }
        piece.score.append(result.fragment);
        piece.pages.push_back(std::move(result.outcome));
    }
    if (!pages.empty() && failed == pages.size()) {
        throw EmptyPieceError("all " + std::to_string(pages.size())
                              + " pages failed feature extraction");
    }
    return piece;
}

/// Debug overlay: detected staff lines in blue, notehead blobs in red.
inline cv::Mat3b render_overlay(const GrayImage& image, const std::vector<NoteheadBlob>& blobs,
                                const SheetHyperparams& params)
{
    cv::Mat1b gray;
    cv::Mat1f inverted = 1.0f - image.pixels;
    inverted.convertTo(gray, CV_8U, 255.0);
    cv::Mat3b overlay;
    cv::cvtColor(gray, overlay, cv::COLOR_GRAY2BGR);

    const auto staff_feats = compute_staffline_features(image, params);
    for (const auto& staff : detail::locate_staves(staff_feats, params)) {
        for (const auto row : staff.line_rows) {
            const int r = static_cast<int>(std::lround(row));
            if (r >= 0 && r < overlay.rows) {
                cv::line(overlay, { 0, r }, { overlay.cols - 1, r }, { 255, 128, 0 }, 1);
            }
        }
    }
    const int radius = std::max(
        2, static_cast<int>(std::lround(params.overlay_blob_radius_frac
                                        * params.canonical_staff_spacing)));
    for (const auto& blob : blobs) {
        cv::circle(overlay,
                   { static_cast<int>(std::lround(blob.center_x)),
                     static_cast<int>(std::lround(blob.center_y)) },
                   radius, { 0, 0, 255 }, 1);
    }
    return overlay;
}

} // namespace bootleg
