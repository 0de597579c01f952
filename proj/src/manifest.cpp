#include "paseg/manifest.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "paseg/imageio.hpp"

namespace paseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<SampleRecord> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingFileError("cannot open manifest " + path);
    const fs::path base = fs::path(path).parent_path();

    std::vector<SampleRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto tag = [&](const std::string& msg) {
            return path + ":" + std::to_string(line_no) + ": " + msg;
        };
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(tag(e.what()));
        }
        if (!obj.is_object()) throw ParseError(tag("expected a JSON object"));
        if (!obj.contains("id") || !obj["id"].is_string())
            throw ParseError(tag("missing string field 'id'"));
        if (!obj.contains("image") || !obj["image"].is_string())
            throw ParseError(tag("missing string field 'image'"));
        if (!obj.contains("points") || !obj["points"].is_array() || obj["points"].size() != 4)
            throw ParseError(tag("'points' must be an array of exactly 4 [x,y] pairs"));

        std::vector<Point> pts;
        for (const auto& p : obj["points"]) {
            if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
                throw ParseError(tag("each point must be a numeric [x,y] pair"));
            pts.push_back(Point{p[0].get<double>(), p[1].get<double>()});
        }

        const fs::path image_path = base / obj["image"].get<std::string>();
        if (!fs::exists(image_path))
            throw MissingFileError(tag("image not found: " + image_path.string()));
        ImageGrid image = image_from_gray(read_gray8(image_path.string()));

        FourPointAnnotation ann = canonicalize_points(pts);
        if (!ann.in_bounds(image.width(), image.height()))
            throw OutOfBoundsError(tag("annotation outside the image bounds"));

        std::optional<BinaryMask> gt;
        if (obj.contains("mask")) {
            if (!obj["mask"].is_string()) throw ParseError(tag("'mask' must be a path string"));
            const fs::path mask_path = base / obj["mask"].get<std::string>();
            if (!fs::exists(mask_path))
                throw MissingFileError(tag("mask not found: " + mask_path.string()));
            BinaryMask m = mask_from_gray(read_gray8(mask_path.string()));
            if (m.width() != image.width() || m.height() != image.height())
                throw DimensionMismatchError(tag("mask dimensions differ from the image"));
            gt = std::move(m);
        }

        std::optional<double> spacing;
        if (obj.contains("spacing_mm")) {
            if (!obj["spacing_mm"].is_number())
                throw ParseError(tag("'spacing_mm' must be numeric"));
            spacing = obj["spacing_mm"].get<double>();
        }

        records.push_back(SampleRecord{obj["id"].get<std::string>(), std::move(image),
                                       std::move(ann), std::move(gt), spacing});
    }
    return records;
}

std::string write_dataset(const std::string& dir, const std::vector<SampleRecord>& records,
                          bool as_png) {
    const std::string ext = as_png ? ".png" : ".pgm";
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");

    const std::string manifest_path = (fs::path(dir) / "manifest.jsonl").string();
    std::ofstream out(manifest_path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest " + manifest_path);

    for (const SampleRecord& rec : records) {
        const std::string image_rel = "images/" + rec.id + ext;
        write_gray8((fs::path(dir) / image_rel).string(), gray_from_image(rec.image));

        json obj;
        obj["id"] = rec.id;
        obj["image"] = image_rel;
        json pts = json::array();
        for (const Point& p : rec.annotation.points()) pts.push_back({p.x, p.y});
        obj["points"] = pts;
        if (rec.gt_mask) {
            const std::string mask_rel = "masks/" + rec.id + ext;
            write_gray8((fs::path(dir) / mask_rel).string(), gray_from_mask(*rec.gt_mask));
            obj["mask"] = mask_rel;
        }
        if (rec.spacing_mm) obj["spacing_mm"] = *rec.spacing_mm;
        out << obj.dump() << "\n";
    }
    if (!out) throw IoError("write failure on manifest " + manifest_path);
    return manifest_path;
}

}  // namespace paseg
