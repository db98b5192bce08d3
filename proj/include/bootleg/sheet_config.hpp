#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "bootleg/config.hpp"
#include "bootleg/errors.hpp"
#include "bootleg/io_util.hpp"

namespace bootleg {

/// All tunable settings of the sheet-image pipeline. No trainable weights
/// anywhere; these scalars are the whole parameter space. Lengths ending
/// in _frac are multiples of canonical_staff_spacing unless noted.
struct SheetHyperparams {
    // preprocessing
    double canonical_staff_spacing = 10.0; // interline spacing after normalization (px)
    double min_staff_spacing = 5.0;        // comb search lower bound before normalization (px)
    double max_staff_spacing = 30.0;       // comb search upper bound before normalization (px)
    double spacing_search_step = 0.5;      // comb bank step (px)
    int comb_teeth = 5;                    // one tooth per staff line
    double background_blur_factor = 4.0;   // box-blur side = factor * max_staff_spacing
    double min_staff_response = 50.0;      // comb-response floor before declaring no staff
    double min_rescale_factor = 0.2;
    double max_rescale_factor = 4.0;

    // staff line features and localization (after normalization)
    double staffline_kernel_width_frac = 2.0; // horizontal opening kernel width
    int staffline_kernel_height = 1;          // px
    double staff_spacing_delta = 2.0;         // refine search range: canonical +/- delta (px)
    double staff_spacing_step = 0.25;         // refine search step (px)
    int staffline_col_blocks = 1;             // column blocks in the feature tensor
    double staff_peak_rel_threshold = 0.35;   // accept peaks >= rel * strongest peak
    double staff_suppression_factor = 4.0;    // suppress +/- factor*spacing rows per accepted staff
    int min_staves_per_page = 2;
    int max_staves_per_page = 12;
    double line_refine_window_frac = 0.3;     // centroid half-window around each predicted line
    double min_line_mass_frac = 0.05;         // refined line must carry >= frac * strongest line

    // notehead detection
    double notehead_opening_diameter_frac = 0.55; // circular opening kernel diameter
    double blob_min_area_frac = 0.3;              // blob detector min area, * spacing^2
    double blob_max_area_frac = 4.0;              // blob detector max area, * spacing^2
    double blob_min_circularity = 0.5;
    double template_tol_low = 0.7;   // accept components within [low, high] * template dims
    double template_tol_high = 1.3;
    int min_template_blobs = 3;      // detector blobs needed to estimate the template
    double template_fallback_width_frac = 1.15; // template when the detector finds too few
    double template_fallback_height_frac = 0.9;
    std::string binarize_method = "otsu"; // otsu | fixed
    double binarize_fixed_threshold = 0.3;

    // barline features
    double barline_kernel_height_frac = 5.0; // vertical opening kernel height
    int barline_kernel_width = 1;            // px
    double barline_coverage_threshold = 0.8; // row coverage required to accept a staff pairing
    double barline_row_mass_floor = 1.0;     // a row counts as covered at >= this ink mass

    // projection onto the 62-position axis
    double max_blob_staff_distance_frac = 8.0; // discard blobs farther from every staff center
    double column_merge_width_frac = 1.0;      // x-width merged into one note-event column
    bool round_ties_toward_center = true;      // half-position ties round toward the staff middle

    // debug overlays
    double overlay_blob_radius_frac = 0.6;
};

namespace detail {

    struct ParamDoc {
        const char* key;
        const char* comment;
    };

    // clang-format off
    inline constexpr ParamDoc kParamDocs[] = {
        { "canonical_staff_spacing", "interline spacing after normalization (px)" },
        { "min_staff_spacing", "comb search lower bound before normalization (px)" },
        { "max_staff_spacing", "comb search upper bound before normalization (px)" },
        { "spacing_search_step", "comb bank step (px)" },
        { "comb_teeth", "comb filter teeth, one per staff line" },
        { "background_blur_factor", "box-blur side = factor * max_staff_spacing" },
        { "min_staff_response", "comb-response floor before declaring no staff" },
        { "min_rescale_factor", "lower clamp on the normalization scale" },
        { "max_rescale_factor", "upper clamp on the normalization scale" },
        { "staffline_kernel_width_frac", "horizontal opening kernel width, * spacing" },
        { "staffline_kernel_height", "horizontal opening kernel height (px)" },
        { "staff_spacing_delta", "staff spacing refine range, canonical +/- delta (px)" },
        { "staff_spacing_step", "staff spacing refine step (px)" },
        { "staffline_col_blocks", "column blocks in the staff-line feature tensor" },
        { "staff_peak_rel_threshold", "accept staff peaks >= rel * strongest peak" },
        { "staff_suppression_factor", "suppress +/- factor*spacing rows per accepted staff" },
        { "min_staves_per_page", "minimum staves expected on a page" },
        { "max_staves_per_page", "maximum staves expected on a page" },
        { "line_refine_window_frac", "centroid half-window around each predicted line, * spacing" },
        { "min_line_mass_frac", "refined line must carry >= frac * strongest line mass" },
        { "notehead_opening_diameter_frac", "circular opening kernel diameter, * spacing" },
        { "blob_min_area_frac", "blob detector min area, * spacing^2" },
        { "blob_max_area_frac", "blob detector max area, * spacing^2" },
        { "blob_min_circularity", "blob detector circularity floor" },
        { "template_tol_low", "accept components >= low * template dims" },
        { "template_tol_high", "accept components <= high * template dims" },
        { "min_template_blobs", "detector blobs needed to estimate the notehead template" },
        { "template_fallback_width_frac", "template width when the detector finds too few, * spacing" },
        { "template_fallback_height_frac", "template height when the detector finds too few, * spacing" },
        { "binarize_method", "otsu | fixed" },
        { "binarize_fixed_threshold", "threshold in [0,1]; also the lower bound on otsu" },
        { "barline_kernel_height_frac", "vertical opening kernel height, * spacing" },
        { "barline_kernel_width", "vertical opening kernel width (px)" },
        { "barline_coverage_threshold", "row coverage required to accept a staff pairing" },
        { "barline_row_mass_floor", "a row counts as covered at >= this ink mass" },
        { "max_blob_staff_distance_frac", "discard blobs farther than this from every staff, * spacing" },
        { "column_merge_width_frac", "x-width merged into one note-event column, * spacing" },
        { "round_ties_toward_center", "half-position ties round toward the staff middle" },
        { "overlay_blob_radius_frac", "overlay circle radius, * spacing" },
    };
    // clang-format on

} // namespace detail

inline void validate_hyperparams(const SheetHyperparams& p)
{
    auto require = [](bool ok, const std::string& what) {
        if (!ok) {
            throw ConfigError("invalid sheet hyperparameters: " + what);
        }
    };
    require(p.canonical_staff_spacing > 0, "canonical_staff_spacing must be > 0");
    require(p.min_staff_spacing < p.max_staff_spacing,
            "min_staff_spacing must be < max_staff_spacing");
    require(p.min_staff_spacing > 0, "min_staff_spacing must be > 0");
    require(p.spacing_search_step > 0 && p.staff_spacing_step > 0, "search steps must be > 0");
    require(p.comb_teeth >= 3, "comb_teeth must be >= 3");
    require(p.min_rescale_factor < p.max_rescale_factor,
            "min_rescale_factor must be < max_rescale_factor");
    require(p.blob_min_area_frac < p.blob_max_area_frac,
            "blob_min_area_frac must be < blob_max_area_frac");
    require(p.template_tol_low < p.template_tol_high,
            "template_tol_low must be < template_tol_high");
    require(p.min_staves_per_page >= 1
                && p.min_staves_per_page <= p.max_staves_per_page,
            "staves-per-page bounds must satisfy 1 <= min <= max");
    require(p.staffline_col_blocks >= 1, "staffline_col_blocks must be >= 1");
    require(p.binarize_method == "otsu" || p.binarize_method == "fixed",
            "binarize_method must be otsu or fixed");
    require(p.barline_coverage_threshold > 0 && p.barline_coverage_threshold <= 1,
            "barline_coverage_threshold must be in (0, 1]");
}

/// Strict loader: every key must be present (the error names the missing
/// key and its documented default) and unknown keys are rejected.
inline SheetHyperparams load_hyperparams(const std::filesystem::path& path)
{
    const auto kv = KeyValueFile::parse_file(path);
    const SheetHyperparams d;
    SheetHyperparams p;

    p.canonical_staff_spacing = kv.get_double("canonical_staff_spacing", d.canonical_staff_spacing);
    p.min_staff_spacing = kv.get_double("min_staff_spacing", d.min_staff_spacing);
    p.max_staff_spacing = kv.get_double("max_staff_spacing", d.max_staff_spacing);
    p.spacing_search_step = kv.get_double("spacing_search_step", d.spacing_search_step);
    p.comb_teeth = static_cast<int>(kv.get_int("comb_teeth", d.comb_teeth));
    p.background_blur_factor = kv.get_double("background_blur_factor", d.background_blur_factor);
    p.min_staff_response = kv.get_double("min_staff_response", d.min_staff_response);
    p.min_rescale_factor = kv.get_double("min_rescale_factor", d.min_rescale_factor);
    p.max_rescale_factor = kv.get_double("max_rescale_factor", d.max_rescale_factor);
    p.staffline_kernel_width_frac
        = kv.get_double("staffline_kernel_width_frac", d.staffline_kernel_width_frac);
    p.staffline_kernel_height
        = static_cast<int>(kv.get_int("staffline_kernel_height", d.staffline_kernel_height));
    p.staff_spacing_delta = kv.get_double("staff_spacing_delta", d.staff_spacing_delta);
    p.staff_spacing_step = kv.get_double("staff_spacing_step", d.staff_spacing_step);
    p.staffline_col_blocks
        = static_cast<int>(kv.get_int("staffline_col_blocks", d.staffline_col_blocks));
    p.staff_peak_rel_threshold
        = kv.get_double("staff_peak_rel_threshold", d.staff_peak_rel_threshold);
    p.staff_suppression_factor
        = kv.get_double("staff_suppression_factor", d.staff_suppression_factor);
    p.min_staves_per_page
        = static_cast<int>(kv.get_int("min_staves_per_page", d.min_staves_per_page));
    p.max_staves_per_page
        = static_cast<int>(kv.get_int("max_staves_per_page", d.max_staves_per_page));
    p.line_refine_window_frac
        = kv.get_double("line_refine_window_frac", d.line_refine_window_frac);
    p.min_line_mass_frac = kv.get_double("min_line_mass_frac", d.min_line_mass_frac);
    p.notehead_opening_diameter_frac
        = kv.get_double("notehead_opening_diameter_frac", d.notehead_opening_diameter_frac);
    p.blob_min_area_frac = kv.get_double("blob_min_area_frac", d.blob_min_area_frac);
    p.blob_max_area_frac = kv.get_double("blob_max_area_frac", d.blob_max_area_frac);
    p.blob_min_circularity = kv.get_double("blob_min_circularity", d.blob_min_circularity);
    p.template_tol_low = kv.get_double("template_tol_low", d.template_tol_low);
    p.template_tol_high = kv.get_double("template_tol_high", d.template_tol_high);
    p.min_template_blobs
        = static_cast<int>(kv.get_int("min_template_blobs", d.min_template_blobs));
    p.template_fallback_width_frac
        = kv.get_double("template_fallback_width_frac", d.template_fallback_width_frac);
    p.template_fallback_height_frac
        = kv.get_double("template_fallback_height_frac", d.template_fallback_height_frac);
    p.binarize_method = kv.get("binarize_method", d.binarize_method);
    p.binarize_fixed_threshold
        = kv.get_double("binarize_fixed_threshold", d.binarize_fixed_threshold);
    p.barline_kernel_height_frac
        = kv.get_double("barline_kernel_height_frac", d.barline_kernel_height_frac);
    p.barline_kernel_width
        = static_cast<int>(kv.get_int("barline_kernel_width", d.barline_kernel_width));
    p.barline_coverage_threshold
        = kv.get_double("barline_coverage_threshold", d.barline_coverage_threshold);
    p.barline_row_mass_floor
        = kv.get_double("barline_row_mass_floor", d.barline_row_mass_floor);
    p.max_blob_staff_distance_frac
        = kv.get_double("max_blob_staff_distance_frac", d.max_blob_staff_distance_frac);
    p.column_merge_width_frac
        = kv.get_double("column_merge_width_frac", d.column_merge_width_frac);
    p.round_ties_toward_center
        = kv.get_bool("round_ties_toward_center", d.round_ties_toward_center);
    p.overlay_blob_radius_frac
        = kv.get_double("overlay_blob_radius_frac", d.overlay_blob_radius_frac);

    std::vector<std::string> known;
    for (const auto& doc : detail::kParamDocs) {
        known.emplace_back(doc.key);
    }
    const auto unknown = kv.unknown_keys(known);
    if (!unknown.empty()) {
        throw ConfigError("unknown sheet config key `" + unknown.front() + "` in "
                          + path.string());
    }
    validate_hyperparams(p);
    return p;
}

/// The default configuration as a documented key/value file.
inline std::string default_hyperparams_text()
{
    const SheetHyperparams d;
    std::ostringstream out;
    out << "# Sheet-image pipeline settings. All keys are required.\n"
        << "# Lengths with the _frac suffix are multiples of canonical_staff_spacing.\n\n";
    auto num = [&out](const char* key, double v, const char* comment) {
        out << key << " = " << KeyValueFile::format_double(v) << "  # " << comment << "\n";
    };
    auto integer = [&out](const char* key, int v, const char* comment) {
        out << key << " = " << v << "  # " << comment << "\n";
    };
    auto text = [&out](const char* key, const std::string& v, const char* comment) {
        out << key << " = " << v << "  # " << comment << "\n";
    };
    num("canonical_staff_spacing", d.canonical_staff_spacing, detail::kParamDocs[0].comment);
    num("min_staff_spacing", d.min_staff_spacing, detail::kParamDocs[1].comment);
    num("max_staff_spacing", d.max_staff_spacing, detail::kParamDocs[2].comment);
    num("spacing_search_step", d.spacing_search_step, detail::kParamDocs[3].comment);
    integer("comb_teeth", d.comb_teeth, detail::kParamDocs[4].comment);
    num("background_blur_factor", d.background_blur_factor, detail::kParamDocs[5].comment);
    num("min_staff_response", d.min_staff_response, detail::kParamDocs[6].comment);
    num("min_rescale_factor", d.min_rescale_factor, detail::kParamDocs[7].comment);
    num("max_rescale_factor", d.max_rescale_factor, detail::kParamDocs[8].comment);
    num("staffline_kernel_width_frac", d.staffline_kernel_width_frac,
        detail::kParamDocs[9].comment);
    integer("staffline_kernel_height", d.staffline_kernel_height, detail::kParamDocs[10].comment);
    num("staff_spacing_delta", d.staff_spacing_delta, detail::kParamDocs[11].comment);
    num("staff_spacing_step", d.staff_spacing_step, detail::kParamDocs[12].comment);
    integer("staffline_col_blocks", d.staffline_col_blocks, detail::kParamDocs[13].comment);
    num("staff_peak_rel_threshold", d.staff_peak_rel_threshold, detail::kParamDocs[14].comment);
    num("staff_suppression_factor", d.staff_suppression_factor, detail::kParamDocs[15].comment);
    integer("min_staves_per_page", d.min_staves_per_page, detail::kParamDocs[16].comment);
    integer("max_staves_per_page", d.max_staves_per_page, detail::kParamDocs[17].comment);
    num("line_refine_window_frac", d.line_refine_window_frac, detail::kParamDocs[18].comment);
    num("min_line_mass_frac", d.min_line_mass_frac, detail::kParamDocs[19].comment);
    num("notehead_opening_diameter_frac", d.notehead_opening_diameter_frac,
        detail::kParamDocs[20].comment);
    num("blob_min_area_frac", d.blob_min_area_frac, detail::kParamDocs[21].comment);
    num("blob_max_area_frac", d.blob_max_area_frac, detail::kParamDocs[22].comment);
    num("blob_min_circularity", d.blob_min_circularity, detail::kParamDocs[23].comment);
    num("template_tol_low", d.template_tol_low, detail::kParamDocs[24].comment);
    num("template_tol_high", d.template_tol_high, detail::kParamDocs[25].comment);
    integer("min_template_blobs", d.min_template_blobs, detail::kParamDocs[26].comment);
    num("template_fallback_width_frac", d.template_fallback_width_frac,
        detail::kParamDocs[27].comment);
    num("template_fallback_height_frac", d.template_fallback_height_frac,
        detail::kParamDocs[28].comment);
    text("binarize_method", d.binarize_method, detail::kParamDocs[29].comment);
    num("binarize_fixed_threshold", d.binarize_fixed_threshold, detail::kParamDocs[30].comment);
    num("barline_kernel_height_frac", d.barline_kernel_height_frac,
        detail::kParamDocs[31].comment);
    integer("barline_kernel_width", d.barline_kernel_width, detail::kParamDocs[32].comment);
    num("barline_coverage_threshold", d.barline_coverage_threshold,
        detail::kParamDocs[33].comment);
    num("barline_row_mass_floor", d.barline_row_mass_floor, detail::kParamDocs[34].comment);
    num("max_blob_staff_distance_frac", d.max_blob_staff_distance_frac,
        detail::kParamDocs[35].comment);
    num("column_merge_width_frac", d.column_merge_width_frac, detail::kParamDocs[36].comment);
    text("round_ties_toward_center", d.round_ties_toward_center ? "true" : "false",
         detail::kParamDocs[37].comment);
    num("overlay_blob_radius_frac", d.overlay_blob_radius_frac, detail::kParamDocs[38].comment);
    return out.str();
}

inline void write_default_hyperparams(const std::filesystem::path& path)
{
    atomic_write_text(path, default_hyperparams_text());
}

} // namespace bootleg
