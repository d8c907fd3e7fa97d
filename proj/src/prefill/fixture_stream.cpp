#include <fstream>
#include <string>

#include "quoka/fixture.hpp"
#include "quoka/prefill.hpp"
#include "quoka/serialization.hpp"

namespace quoka {

TensorQkvStream load_fixture_stream(const std::filesystem::path& manifest)
{
    std::ifstream in(manifest);
    if (!in) {
        throw StreamError("fixture: cannot open manifest " + manifest.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw StreamError("fixture: manifest " + manifest.string() + " is not valid JSON: " + e.what());
    }
    require_known_keys(j, {"layers", "T", "layout", "tensors"}, "fixture manifest");
    const HeadLayout layout = head_layout_from_json(j.at("layout"));
    const auto layers = j.at("layers").get<std::size_t>();
    const auto T = j.at("T").get<std::size_t>();
    const auto& files = j.at("tensors");
    if (!files.is_array() || files.size() != layers) {
        throw StreamError("fixture: manifest lists " + std::to_string(files.size()) + " tensor sets for " +
                          std::to_string(layers) + " layers");
    }
    const auto base = manifest.parent_path();
    std::vector<QkvChunk> chunks;
    for (const auto& entry : files) {
        require_known_keys(entry, {"q", "k", "v"}, "fixture tensor set");
        chunks.push_back({load_tensor(base / entry.at("q").get<std::string>()),
                          load_tensor(base / entry.at("k").get<std::string>()),
                          load_tensor(base / entry.at("v").get<std::string>())});
    }
    TensorQkvStream stream(std::move(chunks), layout);
    if (stream.length() != T) {
        throw StreamError("fixture: manifest says T=" + std::to_string(T) + ", tensors have " +
                          std::to_string(stream.length()));
    }
    return stream;
}

void save_fixture_stream(const std::filesystem::path& directory, const TensorQkvStream& stream)
{
    std::filesystem::create_directories(directory);
    json files = json::array();
    for (std::size_t l = 0; l < stream.layers(); ++l) {
        const auto& c = stream.layer(l);
        const std::string stem = "layer" + std::to_string(l);
        save_tensor(directory / (stem + "_q.qtns"), c.q);
        save_tensor(directory / (stem + "_k.qtns"), c.k);
        save_tensor(directory / (stem + "_v.qtns"), c.v);
        files.push_back({{"q", stem + "_q.qtns"}, {"k", stem + "_k.qtns"}, {"v", stem + "_v.qtns"}});
    }
    const json manifest = {
        {"layers", stream.layers()}, {"T", stream.length()}, {"layout", to_json(stream.layout())}, {"tensors", files}};
    std::ofstream out(directory / "manifest.json");
    out << manifest.dump(2) << '\n';
}

} // namespace quoka
