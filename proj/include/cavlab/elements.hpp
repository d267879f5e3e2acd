#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cavlab/rng.hpp"
#include "cavlab/tensor.hpp"

namespace cavlab {

enum class Colour { Red, Green, Blue, Yellow, Cyan, Magenta };
enum class Shape { Square, Circle, Triangle, Plus, Cross };
enum class Texture { Solid, Spots, Stripes };
enum class Region { None, Left, Right, Top, Bottom };
enum class CombinationRule { Unrestricted, OnlyTrianglesRed, RedIffTriangle };
enum class SpatialAxis { LeftRight, TopBottom };

const char* to_string(Colour c);
const char* to_string(Shape s);
const char* to_string(Texture t);   // adjective form: solid / spotted / striped
const char* to_string(Region r);
const char* to_string(CombinationRule r);
const char* to_string(SpatialAxis a);
std::optional<Colour> parse_colour(const std::string& s);
std::optional<Shape> parse_shape(const std::string& s);
std::optional<Texture> parse_texture(const std::string& s);
std::optional<Region> parse_region(const std::string& s);
std::optional<CombinationRule> parse_rule(const std::string& s);
std::optional<SpatialAxis> parse_axis(const std::string& s);

struct ElementSpec {
    Colour colour = Colour::Red;
    int brightness = 255; // 153..255
    int size = 48;        // bbox side in pixels
    Shape shape = Shape::Square;
    Texture texture = Texture::Solid;
    int texture_shift = 0; // [0, texture_period)
    int x = 0, y = 0;      // bbox top-left
};

struct SceneSpec {
    std::vector<ElementSpec> elements;
};

struct DatasetConfig {
    std::vector<Colour> palette;
    std::vector<Shape> shapes;
    std::vector<Texture> textures;
    int image_side = 256;
    int elements_per_image = 4;
    int min_size = 48, max_size = 80;
    int min_brightness = 153, max_brightness = 255;
    CombinationRule rule = CombinationRule::Unrestricted;
    bool spatial_classes = false;
    SpatialAxis square_axis = SpatialAxis::LeftRight;
    SpatialAxis triangle_axis = SpatialAxis::TopBottom;
    uint64_t seed = 0;

    static DatasetConfig simple();   // red/green/blue x square/circle/triangle/plus x 3 textures
    static DatasetConfig standard(); // 6 colours x 5 shapes x 3 textures
    void scale_to_side(int side);    // proportional element size bounds
};

// one property of an element; the unit cavs are trained for
struct Concept {
    enum class Kind { Colour, Shape, Texture };
    Kind kind = Kind::Colour;
    int value = 0;

    static Concept colour(Colour c) { return {Kind::Colour, int(c)}; }
    static Concept shape(Shape s) { return {Kind::Shape, int(s)}; }
    static Concept texture(Texture t) { return {Kind::Texture, int(t)}; }
    static std::optional<Concept> parse(const std::string& name);

    std::string name() const;
    bool matches(const ElementSpec& e) const;
    bool operator==(const Concept& o) const { return kind == o.kind && value == o.value; }
};

// conjunction of concepts from distinct groups, optionally restricted to an image half
struct ClassDef {
    std::optional<Colour> colour;
    std::optional<Shape> shape;
    std::optional<Texture> texture;
    Region region = Region::None;

    std::string name() const; // "striped red triangle", "red square left", ...
    bool matches_element(const ElementSpec& e, int image_side) const;
};

struct ClassTable {
    std::vector<ClassDef> classes;
    static ClassTable build(const DatasetConfig& cfg);
    int index_of(const std::string& name) const; // -1 if absent
    std::vector<std::string> names() const;
};

// true when the element bounding box lies fully inside the given half
bool element_in_region(const ElementSpec& e, Region r, int image_side);

// true when (colour, shape) can co-occur under the rule
bool pair_allowed(CombinationRule rule, Colour c, Shape s);

int texture_period(Texture t, int size);

// Samples one scene with non-overlapping elements honoring the combination
// rule. forced/location constrain every element (probe positives); image_index
// only labels errors. Redraws the whole scene when placement jams; throws
// NumericError once the redraw budget is spent.
SceneSpec sample_scene(const DatasetConfig& cfg, Rng& rng,
                       const std::optional<Concept>& forced = std::nullopt,
                       Region location = Region::None, long image_index = -1);

// scene for dataset image i, stream derived from (cfg.seed, i)
SceneSpec dataset_scene(const DatasetConfig& cfg, long index);

TensorF render_scene(const SceneSpec& scene, int image_side);

// multi-hot labels, one per class table entry
std::vector<uint8_t> assign_classes(const SceneSpec& scene, const ClassTable& table, int image_side);

struct ProbeDataset {
    std::string concept_name;
    Region location = Region::None;
    int r = 0;
    std::vector<SceneSpec> positives; // every element carries the concept
    std::vector<SceneSpec> negatives; // random in-distribution scenes, keyed by r only
};

// counts are per side; positives are identical across r
ProbeDataset build_probe(const DatasetConfig& cfg, const Concept& target, int r,
                         Region location = Region::None, int count = 150);

// the r-th concept-independent random scene set (negatives / random-cav material)
std::vector<SceneSpec> random_scene_set(const DatasetConfig& cfg, int r, int count = 150);

uint64_t scene_fingerprint(const SceneSpec& scene, uint64_t h = 0xcbf29ce484222325ull);

} // namespace cavlab
