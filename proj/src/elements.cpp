#include "cavlab/elements.hpp"

#include <algorithm>
#include <cmath>

#include "cavlab/errors.hpp"

namespace cavlab {

const char* to_string(Colour c) {
    switch (c) {
        case Colour::Red: return "red";
        case Colour::Green: return "green";
        case Colour::Blue: return "blue";
        case Colour::Yellow: return "yellow";
        case Colour::Cyan: return "cyan";
        case Colour::Magenta: return "magenta";
    }
    return "?";
}

const char* to_string(Shape s) {
    switch (s) {
        case Shape::Square: return "square";
        case Shape::Circle: return "circle";
        case Shape::Triangle: return "triangle";
        case Shape::Plus: return "plus";
        case Shape::Cross: return "cross";
    }
    return "?";
}

const char* to_string(Texture t) {
    switch (t) {
        case Texture::Solid: return "solid";
        case Texture::Spots: return "spotted";
        case Texture::Stripes: return "striped";
    }
    return "?";
}

const char* to_string(Region r) {
    switch (r) {
        case Region::None: return "none";
        case Region::Left: return "left";
        case Region::Right: return "right";
        case Region::Top: return "top";
        case Region::Bottom: return "bottom";
    }
    return "?";
}

const char* to_string(CombinationRule r) {
    switch (r) {
        case CombinationRule::Unrestricted: return "unrestricted";
        case CombinationRule::OnlyTrianglesRed: return "only-triangles-red";
        case CombinationRule::RedIffTriangle: return "red-iff-triangle";
    }
    return "?";
}

const char* to_string(SpatialAxis a) {
    return a == SpatialAxis::LeftRight ? "left-right" : "top-bottom";
}

template <typename E>
static std::optional<E> parse_enum(const std::string& s, std::initializer_list<E> all) {
    for (E e : all)
        if (s == to_string(e)) return e;
    return std::nullopt;
}

std::optional<Colour> parse_colour(const std::string& s) {
    return parse_enum(s, {Colour::Red, Colour::Green, Colour::Blue, Colour::Yellow, Colour::Cyan,
                          Colour::Magenta});
}
std::optional<Shape> parse_shape(const std::string& s) {
    return parse_enum(s, {Shape::Square, Shape::Circle, Shape::Triangle, Shape::Plus, Shape::Cross});
}
std::optional<Texture> parse_texture(const std::string& s) {
    return parse_enum(s, {Texture::Solid, Texture::Spots, Texture::Stripes});
}
std::optional<Region> parse_region(const std::string& s) {
    return parse_enum(s, {Region::None, Region::Left, Region::Right, Region::Top, Region::Bottom});
}
std::optional<CombinationRule> parse_rule(const std::string& s) {
    return parse_enum(s, {CombinationRule::Unrestricted, CombinationRule::OnlyTrianglesRed,
                          CombinationRule::RedIffTriangle});
}

std::optional<SpatialAxis> parse_axis(const std::string& s) {
    return parse_enum(s, {SpatialAxis::LeftRight, SpatialAxis::TopBottom});
}

DatasetConfig DatasetConfig::simple() {
    DatasetConfig cfg;
    cfg.palette = {Colour::Red, Colour::Green, Colour::Blue};
    cfg.shapes = {Shape::Square, Shape::Circle, Shape::Triangle, Shape::Plus};
    cfg.textures = {Texture::Solid, Texture::Spots, Texture::Stripes};
    return cfg;
}

DatasetConfig DatasetConfig::standard() {
    DatasetConfig cfg;
    cfg.palette = {Colour::Red,    Colour::Green, Colour::Blue,
                   Colour::Yellow, Colour::Cyan,  Colour::Magenta};
    cfg.shapes = {Shape::Square, Shape::Circle, Shape::Triangle, Shape::Plus, Shape::Cross};
    cfg.textures = {Texture::Solid, Texture::Spots, Texture::Stripes};
    return cfg;
}

void DatasetConfig::scale_to_side(int side) {
    double f = double(side) / double(image_side);
    min_size = std::max(3, int(std::lround(min_size * f)));
    max_size = std::max(min_size, int(std::lround(max_size * f)));
    image_side = side;
}

std::optional<Concept> Concept::parse(const std::string& name) {
    if (auto c = parse_colour(name)) return Concept::colour(*c);
    if (auto s = parse_shape(name)) return Concept::shape(*s);
    if (auto t = parse_texture(name)) return Concept::texture(*t);
    return std::nullopt;
}

std::string Concept::name() const {
    switch (kind) {
        case Kind::Colour: return to_string(Colour(value));
        case Kind::Shape: return to_string(Shape(value));
        case Kind::Texture: return to_string(Texture(value));
    }
    return "?";
}

bool Concept::matches(const ElementSpec& e) const {
    switch (kind) {
        case Kind::Colour: return int(e.colour) == value;
        case Kind::Shape: return int(e.shape) == value;
        case Kind::Texture: return int(e.texture) == value;
    }
    return false;
}

bool pair_allowed(CombinationRule rule, Colour c, Shape s) {
    switch (rule) {
        case CombinationRule::Unrestricted: return true;
        case CombinationRule::OnlyTrianglesRed:
            return c != Colour::Red || s == Shape::Triangle;
        case CombinationRule::RedIffTriangle:
            return (c == Colour::Red) == (s == Shape::Triangle);
    }
    return true;
}

bool element_in_region(const ElementSpec& e, Region r, int image_side) {
    int half = image_side / 2;
    switch (r) {
        case Region::None: return true;
        case Region::Left: return e.x + e.size <= half;
        case Region::Right: return e.x >= image_side - half;
        case Region::Top: return e.y + e.size <= half;
        case Region::Bottom: return e.y >= image_side - half;
    }
    return true;
}

std::string ClassDef::name() const {
    std::string n;
    auto add = [&n](const std::string& part) {
        if (!n.empty()) n += ' ';
        n += part;
    };
    if (texture) add(to_string(*texture));
    if (colour) add(to_string(*colour));
    if (shape) add(to_string(*shape));
    if (region != Region::None) add(to_string(region));
    return n;
}

bool ClassDef::matches_element(const ElementSpec& e, int image_side) const {
    if (colour && e.colour != *colour) return false;
    if (shape && e.shape != *shape) return false;
    if (texture && e.texture != *texture) return false;
    return element_in_region(e, region, image_side);
}

// a class is listed only if some allowed element can realize it
static bool satisfiable(const DatasetConfig& cfg, const std::optional<Colour>& c,
                        const std::optional<Shape>& s) {
    for (Colour cc : cfg.palette) {
        if (c && cc != *c) continue;
        for (Shape ss : cfg.shapes) {
            if (s && ss != *s) continue;
            if (pair_allowed(cfg.rule, cc, ss)) return true;
        }
    }
    return false;
}

ClassTable ClassTable::build(const DatasetConfig& cfg) {
    ClassTable t;
    auto push = [&](std::optional<Colour> c, std::optional<Shape> s, std::optional<Texture> x) {
        if (!satisfiable(cfg, c, s)) return;
        ClassDef def;
        def.colour = c;
        def.shape = s;
        def.texture = x;
        t.classes.push_back(def);
    };
    for (Colour c : cfg.palette)
        for (Shape s : cfg.shapes) push(c, s, std::nullopt);
    for (Colour c : cfg.palette)
        for (Texture x : cfg.textures) push(c, std::nullopt, x);
    for (Shape s : cfg.shapes)
        for (Texture x : cfg.textures) push(std::nullopt, s, x);
    for (Colour c : cfg.palette)
        for (Shape s : cfg.shapes)
            for (Texture x : cfg.textures) push(c, s, x);

    if (cfg.spatial_classes) {
        auto axis_regions = [](SpatialAxis a) {
            return a == SpatialAxis::LeftRight ? std::pair{Region::Left, Region::Right}
                                               : std::pair{Region::Top, Region::Bottom};
        };
        size_t base = t.classes.size();
        for (size_t i = 0; i < base; ++i) {
            ClassDef def = t.classes[i];
            if (!def.shape) continue;
            SpatialAxis axis;
            if (*def.shape == Shape::Square) axis = cfg.square_axis;
            else if (*def.shape == Shape::Triangle) axis = cfg.triangle_axis;
            else continue;
            auto [a, b] = axis_regions(axis);
            def.region = a;
            t.classes.push_back(def);
            def.region = b;
            t.classes.push_back(def);
        }
    }
    return t;
}

int ClassTable::index_of(const std::string& name) const {
    for (size_t i = 0; i < classes.size(); ++i)
        if (classes[i].name() == name) return int(i);
    return -1;
}

std::vector<std::string> ClassTable::names() const {
    std::vector<std::string> out;
    out.reserve(classes.size());
    for (const auto& c : classes) out.push_back(c.name());
    return out;
}

int texture_period(Texture t, int size) {
    switch (t) {
        case Texture::Solid: return 1;
        case Texture::Spots: return std::max(2, int(std::lround(size / 4.0)));
        case Texture::Stripes: return std::max(2, int(std::lround(size / 5.0)));
    }
    return 1;
}

static bool overlaps(const ElementSpec& a, const ElementSpec& b) {
    return a.x < b.x + b.size && b.x < a.x + a.size && a.y < b.y + b.size && b.y < a.y + a.size;
}

SceneSpec sample_scene(const DatasetConfig& cfg, Rng& rng, const std::optional<Concept>& forced,
                       Region location, long image_index) {
    const int side = cfg.image_side;
    // a bad early placement can leave no room for later elements, so failed
    // scenes are redrawn from scratch
    for (int scene_attempt = 0; scene_attempt < 100; ++scene_attempt) {
        SceneSpec scene;
        bool scene_ok = true;
        for (int n = 0; n < cfg.elements_per_image && scene_ok; ++n) {
            ElementSpec e;
            // colour and shape jointly, uniform over pairs the rule allows
            int guard = 0;
            do {
                if (++guard > 10000)
                    throw ConfigError("no (colour, shape) pair satisfies the combination rule" +
                                      (forced ? " with the forced concept '" + forced->name() + "'"
                                              : std::string()));
                e.colour =
                    forced && forced->kind == Concept::Kind::Colour
                        ? Colour(forced->value)
                        : cfg.palette[size_t(rng.uniform_int(0, int64_t(cfg.palette.size()) - 1))];
                e.shape =
                    forced && forced->kind == Concept::Kind::Shape
                        ? Shape(forced->value)
                        : cfg.shapes[size_t(rng.uniform_int(0, int64_t(cfg.shapes.size()) - 1))];
            } while (!pair_allowed(cfg.rule, e.colour, e.shape));
            e.texture =
                forced && forced->kind == Concept::Kind::Texture
                    ? Texture(forced->value)
                    : cfg.textures[size_t(rng.uniform_int(0, int64_t(cfg.textures.size()) - 1))];
            e.brightness = int(rng.uniform_int(cfg.min_brightness, cfg.max_brightness));
            e.size = int(rng.uniform_int(cfg.min_size, cfg.max_size));
            int period = texture_period(e.texture, e.size);
            e.texture_shift = int(rng.uniform_int(0, period - 1));

            int x_lo = 0, x_hi = side - e.size, y_lo = 0, y_hi = side - e.size;
            int half = side / 2;
            switch (location) {
                case Region::None: break;
                case Region::Left: x_hi = half - e.size; break;
                case Region::Right: x_lo = side - half; break;
                case Region::Top: y_hi = half - e.size; break;
                case Region::Bottom: y_lo = side - half; break;
            }
            if (x_hi < x_lo || y_hi < y_lo)
                throw ConfigError("element of size " + std::to_string(e.size) +
                                  " cannot fit region '" + to_string(location) + "'");

            bool placed = false;
            for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
                e.x = int(rng.uniform_int(x_lo, x_hi));
                e.y = int(rng.uniform_int(y_lo, y_hi));
                placed = std::none_of(scene.elements.begin(), scene.elements.end(),
                                      [&](const ElementSpec& o) { return overlaps(e, o); });
            }
            if (placed)
                scene.elements.push_back(e);
            else
                scene_ok = false;
        }
        if (scene_ok) return scene;
    }
    throw NumericError("could not place the elements of image " + std::to_string(image_index) +
                       " after 100 scene redraws");
}

SceneSpec dataset_scene(const DatasetConfig& cfg, long index) {
    Rng rng = Rng::stream(cfg.seed, "scene", uint64_t(index));
    return sample_scene(cfg, rng, std::nullopt, Region::None, index);
}

static bool shape_mask(Shape shape, double u, double v, double s) {
    double c = s / 2.0;
    switch (shape) {
        case Shape::Square: return true;
        case Shape::Circle: return (u - c) * (u - c) + (v - c) * (v - c) <= c * c;
        case Shape::Triangle: return std::abs(u - c) <= v / 2.0; // apex at top centre
        case Shape::Plus: return std::abs(u - c) <= s / 6.0 || std::abs(v - c) <= s / 6.0;
        case Shape::Cross: return std::abs(u - v) <= s / 6.0 || std::abs(u + v - s) <= s / 6.0;
    }
    return false;
}

static bool texture_mask(const ElementSpec& e, int iu, int iv) {
    switch (e.texture) {
        case Texture::Solid: return true;
        case Texture::Spots: {
            int p = texture_period(Texture::Spots, e.size);
            double r = e.size / 10.0;
            double cu = (iu + e.texture_shift) % p + 0.5 - p / 2.0;
            double cv = (iv + e.texture_shift) % p + 0.5 - p / 2.0;
            return cu * cu + cv * cv <= r * r;
        }
        case Texture::Stripes: {
            int p = texture_period(Texture::Stripes, e.size);
            return 2 * ((iu + iv + e.texture_shift) % p) < p; // 45 degree stripes
        }
    }
    return true;
}

static void colour_rgb(Colour c, int rgb[3]) {
    switch (c) {
        case Colour::Red: rgb[0] = 1; rgb[1] = 0; rgb[2] = 0; break;
        case Colour::Green: rgb[0] = 0; rgb[1] = 1; rgb[2] = 0; break;
        case Colour::Blue: rgb[0] = 0; rgb[1] = 0; rgb[2] = 1; break;
        case Colour::Yellow: rgb[0] = 1; rgb[1] = 1; rgb[2] = 0; break;
        case Colour::Cyan: rgb[0] = 0; rgb[1] = 1; rgb[2] = 1; break;
        case Colour::Magenta: rgb[0] = 1; rgb[1] = 0; rgb[2] = 1; break;
    }
}

TensorF render_scene(const SceneSpec& scene, int image_side) {
    TensorF img(image_side, image_side, 3);
    for (const ElementSpec& e : scene.elements) {
        int rgb[3] = {0, 0, 0};
        colour_rgb(e.colour, rgb);
        float value = float(e.brightness) / 255.0f;
        int y0 = std::max(0, e.y), y1 = std::min(image_side, e.y + e.size);
        int x0 = std::max(0, e.x), x1 = std::min(image_side, e.x + e.size);
        for (int py = y0; py < y1; ++py) {
            for (int px = x0; px < x1; ++px) {
                int iu = px - e.x, iv = py - e.y;
                if (!shape_mask(e.shape, iu + 0.5, iv + 0.5, double(e.size))) continue;
                if (!texture_mask(e, iu, iv)) continue;
                float* pix = &img.at(py, px, 0);
                for (int c = 0; c < 3; ++c)
                    if (rgb[c]) pix[c] = value;
            }
        }
    }
    return img;
}

std::vector<uint8_t> assign_classes(const SceneSpec& scene, const ClassTable& table,
                                    int image_side) {
    std::vector<uint8_t> labels(table.classes.size(), 0);
    for (size_t k = 0; k < table.classes.size(); ++k)
        for (const ElementSpec& e : scene.elements)
            if (table.classes[k].matches_element(e, image_side)) {
                labels[k] = 1;
                break;
            }
    return labels;
}

ProbeDataset build_probe(const DatasetConfig& cfg, const Concept& target, int r, Region location,
                         int count) {
    ProbeDataset p;
    p.concept_name = target.name();
    p.location = location;
    p.r = r;
    std::string stream = "probe-" + p.concept_name;
    if (location != Region::None) stream += std::string("-") + to_string(location);
    p.positives.reserve(size_t(count));
    for (int i = 0; i < count; ++i) {
        Rng rng = Rng::stream(cfg.seed, stream, uint64_t(i));
        p.positives.push_back(sample_scene(cfg, rng, target, location, i));
    }
    p.negatives = random_scene_set(cfg, r, count);
    return p;
}

std::vector<SceneSpec> random_scene_set(const DatasetConfig& cfg, int r, int count) {
    std::vector<SceneSpec> out;
    out.reserve(size_t(count));
    for (int i = 0; i < count; ++i) {
        Rng rng = Rng::stream(cfg.seed, "random-set", Rng::mix(uint64_t(r), uint64_t(i)));
        out.push_back(sample_scene(cfg, rng, std::nullopt, Region::None, i));
    }
    return out;
}

uint64_t scene_fingerprint(const SceneSpec& scene, uint64_t h) {
    for (const ElementSpec& e : scene.elements) {
        int fields[8] = {int(e.colour), e.brightness, e.size,          int(e.shape),
                         int(e.texture), e.texture_shift, e.x, e.y};
        h = fnv1a(fields, sizeof(fields), h);
    }
    return h;
}

} // namespace cavlab
