#pragma once

// Synthetic sheet-music page renderer with exact ground truth: staves,
// grand-staff barlines, stems and filled (or hollow) noteheads at known
// half-step positions. Geometry mirrors common engraving proportions so
// the pipeline sees realistic structure sizes.

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "bootleg/rng.hpp"
#include "bootleg/staff.hpp"

namespace fixtures {

struct RenderSpec {
    double spacing = 12;       // interline spacing in rendered pixels
    int n_systems = 3;
    int events_per_system = 10;
    int page_width = 1100;
    int line_thickness = 1;    // scans run ~0.1x the interline spacing
    int stem_thickness = 2;
    double notehead_w_frac = 1.2; // * spacing
    double notehead_h_frac = 0.75;
    bool hollow = false;          // render hollow noteheads instead of filled
    bool stems = true;
    int max_abs_half_steps = 7;   // |position| range around each staff's middle line
};

struct RenderedNote {
    int system;
    int staff;      // 0 = upper (treble), 1 = lower (bass)
    int half_steps; // +4 top line .. -4 bottom line, beyond for ledger
    double x;
    double y;
};

struct RenderedPage {
    cv::Mat image; // 8U grayscale, white background
    std::vector<RenderedNote> notes;
    std::vector<std::uint64_t> expected_columns; // mirrored 62-bit masks, reading order
    double upper_staff_center(int system) const { return first_center + system * system_step; }
    double lower_staff_center(int system) const
    {
        return upper_staff_center(system) + staff_gap;
    }
    double first_center = 0;
    double system_step = 0;
    double staff_gap = 0;
};

/// 62-axis bit of a (staff, half_steps) placement, before mirroring.
inline std::uint64_t placement_bit(int staff, int half_steps)
{
    const int position = staff == 0
        ? bootleg::kTrebleMiddleLineDiatonic + 5 + half_steps
        : bootleg::kBassMiddleLineDiatonic - bootleg::kLhLowDiatonic + half_steps;
    return std::uint64_t{ 1 } << position;
}

inline RenderedPage render_page(const RenderSpec& spec, bootleg::Rng& rng)
{
    const double s = spec.spacing;
    RenderedPage page;
    page.first_center = 8 * s;
    page.staff_gap = 10 * s;
    page.system_step = 24 * s;

    const int height = static_cast<int>(
        std::lround(page.first_center + (spec.n_systems - 1) * page.system_step + page.staff_gap
                    + 8 * s));
    page.image = cv::Mat(height, spec.page_width, CV_8UC1, cv::Scalar(255));

    const int margin_x = static_cast<int>(std::lround(3 * s));
    const int line_x0 = margin_x;
    const int line_x1 = spec.page_width - margin_x;

    auto draw_staff = [&](double center) {
        for (int k = -2; k <= 2; ++k) {
            const int y = static_cast<int>(std::lround(center + k * s));
            cv::line(page.image, { line_x0, y }, { line_x1, y }, cv::Scalar(0),
                     spec.line_thickness);
        }
    };

    for (int sys = 0; sys < spec.n_systems; ++sys) {
        const double upper = page.upper_staff_center(sys);
        const double lower = page.lower_staff_center(sys);
        draw_staff(upper);
        draw_staff(lower);
        const int bar_y0 = static_cast<int>(std::lround(upper - 2 * s));
        const int bar_y1 = static_cast<int>(std::lround(lower + 2 * s));
        for (const int x : { line_x0, (line_x0 + line_x1) / 2, line_x1 }) {
            cv::line(page.image, { x, bar_y0 }, { x, bar_y1 }, cv::Scalar(0), 2);
        }
    }

    // events: columns of noteheads at shared x positions
    const double x_start = margin_x + 3 * s;
    const double x_end = spec.page_width - margin_x - 2 * s;
    const double dx = (x_end - x_start) / std::max(1, spec.events_per_system);
    const cv::Size axes(static_cast<int>(std::lround(spec.notehead_w_frac * s / 2)),
                        static_cast<int>(std::lround(spec.notehead_h_frac * s / 2)));

    for (int sys = 0; sys < spec.n_systems; ++sys) {
        for (int e = 0; e < spec.events_per_system; ++e) {
            const double x = x_start + e * dx + static_cast<double>(rng.below(5));

            // choose hands: 0 upper only, 1 lower only, 2 both
            const auto hands = rng.below(3);
            std::vector<std::pair<int, int>> notes; // (staff, half_steps)
            auto add_notes = [&](int staff) {
                const int n_notes = 1 + static_cast<int>(rng.below(2));
                int prev = 1000;
                for (int i = 0; i < n_notes; ++i) {
                    int h = static_cast<int>(rng.range(-spec.max_abs_half_steps,
                                                       spec.max_abs_half_steps));
                    if (std::abs(h - prev) < 2) { // avoid touching noteheads
                        h = prev - 2;
                        if (h < -spec.max_abs_half_steps) {
                            h = prev + 2;
                        }
                    }
                    notes.emplace_back(staff, h);
                    prev = h;
                }
            };
            if (hands == 0 || hands == 2) {
                add_notes(0);
            }
            if (hands == 1 || hands == 2) {
                add_notes(1);
            }

            std::uint64_t column = 0;
            for (const auto& [staff, h] : notes) {
                const double center = staff == 0 ? page.upper_staff_center(sys)
                                                 : page.lower_staff_center(sys);
                const double y = center - h * s / 2.0;
                cv::ellipse(page.image, cv::Point2d(x, y), axes, 0, 0, 360, cv::Scalar(0),
                            spec.hollow ? 2 : cv::FILLED);
                if (spec.stems && !spec.hollow) {
                    const int stem_x = static_cast<int>(std::lround(x + axes.width - 1));
                    cv::line(page.image, { stem_x, static_cast<int>(std::lround(y)) },
                             { stem_x, static_cast<int>(std::lround(y - 3 * s)) }, cv::Scalar(0),
                             spec.stem_thickness);
                }
                page.notes.push_back({ sys, staff, h, x, y });
                column |= placement_bit(staff, h);
            }
            if (!spec.hollow) {
                page.expected_columns.push_back(bootleg::mirror_middle_register(column));
            }
        }
    }
    return page;
}

} // namespace fixtures
